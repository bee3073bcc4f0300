#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "editmark/error.hpp"
#include "editmark/eval.hpp"
#include "editmark/model_io.hpp"
#include "editmark/rng.hpp"

namespace editmark {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

struct Stats {
  double mean = 0.0;
  double std = 0.0;
};

Stats stats(const std::vector<double>& xs) {
  Stats s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return s;
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return s;
}

std::vector<std::uint64_t> parse_seeds(const json& j) {
  std::vector<std::uint64_t> seeds;
  if (j.is_array()) {
    for (const auto& s : j) seeds.push_back(s.get<std::uint64_t>());
  } else if (j.is_object()) {
    const auto from = j.at("from").get<std::uint64_t>();
    const auto to = j.at("to").get<std::uint64_t>();
    if (to < from) throw Error(ErrorCode::kConfig, "seed range is empty");
    for (std::uint64_t s = from; s <= to; ++s) seeds.push_back(s);
  } else {
    throw Error(ErrorCode::kConfig, "\"seeds\" must be a list or {\"from\", \"to\"}");
  }
  return seeds;
}

struct Cell {
  std::size_t config = 0;
  std::size_t attack = 0;
  double intensity = 0.0;
};

}  // namespace

SweepManifest manifest_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "manifest must be a JSON object");
  SweepManifest m;
  try {
    if (j.contains("model")) m.model = config_from_json(j.at("model"));
    m.bits = j.value("bits", m.bits);
    const int n = j.value("n", m.params.n);
    const int mm = j.value("m", m.params.m);
    m.params = capacity(n, mm);
    if (!j.contains("seeds")) throw Error(ErrorCode::kConfig, "manifest lacks \"seeds\"");
    m.seeds = parse_seeds(j.at("seeds"));
    if (j.contains("edit_configs")) {
      for (const auto& item : j.at("edit_configs")) {
        NamedEditConfig nc;
        nc.name = item.value("name", "config" + std::to_string(m.edit_configs.size()));
        nc.config = edit_config_from_json(item);
        nc.config.validate();
        m.edit_configs.push_back(std::move(nc));
      }
    } else {
      m.edit_configs.push_back({"default", EditConfig{}});
    }
    if (!j.contains("attacks")) throw Error(ErrorCode::kConfig, "manifest lacks \"attacks\"");
    for (const auto& item : j.at("attacks")) {
      json spec_json = item;
      spec_json.erase("intensities");
      SweepAttack sa;
      if (item.contains("intensities")) {
        for (const auto& x : item.at("intensities")) sa.intensities.push_back(x.get<double>());
        if (sa.intensities.empty()) throw Error(ErrorCode::kConfig, "empty intensity list");
        spec_json["intensity"] = sa.intensities.front();
      }
      sa.base = attack_spec_from_json(spec_json);
      if (sa.intensities.empty()) sa.intensities.push_back(sa.base.intensity);
      for (double x : sa.intensities) {
        AttackSpec probe = sa.base;
        probe.intensity = x;
        probe.validate();
      }
      m.attacks.push_back(std::move(sa));
    }
    m.workers = j.value("workers", m.workers);
    m.timings = j.value("timings", m.timings);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("bad manifest: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig || e.code() == ErrorCode::kNoNullSpace) throw;
    throw Error(ErrorCode::kConfig, std::string("bad manifest: ") + e.what());
  }
  if (m.seeds.empty()) throw Error(ErrorCode::kConfig, "manifest has no seeds");
  if (m.attacks.empty()) throw Error(ErrorCode::kConfig, "manifest has no attacks");
  if (m.bits == 0) throw Error(ErrorCode::kConfig, "watermark length must be positive");
  if (m.workers < 0) throw Error(ErrorCode::kConfig, "workers must be >= 0");
  return m;
}

std::vector<SweepRow> run_sweep(const SweepManifest& manifest) {
  return run_sweep(manifest, init_model(manifest.model));
}

std::vector<SweepRow> run_sweep(const SweepManifest& manifest, const ModelState& model) {
  std::vector<Cell> cells;
  for (std::size_t c = 0; c < manifest.edit_configs.size(); ++c) {
    for (std::size_t a = 0; a < manifest.attacks.size(); ++a) {
      for (double x : manifest.attacks[a].intensities) cells.push_back({c, a, x});
    }
  }
  const std::size_t seed_count = manifest.seeds.size();
  std::vector<SweepRow> rows(cells.size() * seed_count);

  std::vector<std::optional<Projector>> projectors(manifest.edit_configs.size());
  std::vector<std::string> projector_errors(manifest.edit_configs.size());
  for (std::size_t c = 0; c < manifest.edit_configs.size(); ++c) {
    try {
      projectors[c] = build_projector(model.frame->K0, manifest.edit_configs[c].config.svd_zero_tol);
    } catch (const Error& e) {
      projector_errors[c] = std::string(error_code_name(e.code()));
    }
  }

  // One task per (edit config, seed): embed once, then every attack.
  const std::size_t tasks = manifest.edit_configs.size() * seed_count;
  auto run_task = [&](std::size_t task) {
    const std::size_t c = task / seed_count;
    const std::size_t s = task % seed_count;
    const std::uint64_t seed = manifest.seeds[s];
    const NamedEditConfig& nc = manifest.edit_configs[c];

    std::optional<EmbedOutcome> embedded;
    std::string embed_error = projector_errors[c];
    if (embed_error.empty()) {
      try {
        embedded = embed_watermark(model, SeedKey{seed}, random_bits(seed, "sweep/watermark", manifest.bits),
                                   manifest.params, nc.config, &*projectors[c]);
      } catch (const Error& e) {
        embed_error = std::string(error_code_name(e.code()));
      }
    }

    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (cells[k].config != c) continue;
      const SweepAttack& sa = manifest.attacks[cells[k].attack];
      SweepRow& row = rows[k * seed_count + s];
      row.config = nc.name;
      row.kind = std::string(attack_kind_name(sa.base.kind));
      row.intensity = cells[k].intensity;
      row.seed = seed;
      if (!embedded) {
        row.error = embed_error;
        continue;
      }
      row.time_s = embedded->seconds;
      try {
        AttackSpec spec = sa.base;
        spec.intensity = cells[k].intensity;
        spec.seed = derive_seed(seed, "sweep/attack/" + row.kind);
        const AttackOutcome attacked =
            apply_attack(embedded->edit.model, spec, nc.config, manifest.params, &*projectors[c]);
        const ExtractionResult ex =
            extract(attacked.model, SeedKey{seed}, manifest.params, embedded->message.chunks.size(),
                    embedded->message.original_length);
        const Metrics m = measure(model, attacked.model, ex, embedded->message, embedded->seconds);
        row.esr = m.esr;
        row.bit_accuracy = m.bit_accuracy;
        row.fidelity = m.fidelity;
        row.k0_residual = m.k0_residual;
      } catch (const Error& e) {
        row.error = std::string(error_code_name(e.code()));
      }
    }
  };

  std::size_t workers = manifest.workers > 0 ? static_cast<std::size_t>(manifest.workers)
                                             : std::max(1U, std::thread::hardware_concurrency());
  workers = std::min(workers, tasks);
  if (workers <= 1) {
    for (std::size_t t = 0; t < tasks; ++t) run_task(t);
    return rows;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t t = next++; t < tasks; t = next++) {
        try {
          run_task(t);
        } catch (...) {
          const std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows, bool include_timings) {
  std::ostringstream out;
  bool first = true;
  for (const char* col : kSweepColumns) {
    out << (first ? "" : ",") << col;
    first = false;
  }
  out << "\r\n";
  for (const auto& r : rows) {
    out << csv_field(r.config) << ',' << csv_field(r.kind) << ',' << format_number(r.intensity) << ','
        << r.seed << ',' << format_number(r.esr) << ',' << format_number(r.bit_accuracy) << ','
        << format_number(r.fidelity) << ',' << format_number(r.k0_residual) << ','
        << (include_timings && r.error.empty() ? format_number(r.time_s) : "") << ','
        << csv_field(r.error) << "\r\n";
  }
  return out.str();
}

ordered_json sweep_summary(const std::vector<SweepRow>& rows) {
  struct Group {
    std::string config, kind;
    double intensity = 0.0;
    std::size_t rows = 0, errors = 0;
    std::vector<double> esr, bit_accuracy, fidelity;
  };
  std::vector<Group> groups;
  std::map<std::tuple<std::string, std::string, double>, std::size_t> index;
  std::vector<double> all_esr;
  std::size_t errors = 0;
  for (const auto& r : rows) {
    const auto key = std::make_tuple(r.config, r.kind, r.intensity);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, groups.size()).first;
      groups.push_back(Group{r.config, r.kind, r.intensity, 0, 0, {}, {}, {}});
    }
    Group& g = groups[it->second];
    ++g.rows;
    if (!r.error.empty()) {
      ++g.errors;
      ++errors;
      continue;
    }
    g.esr.push_back(r.esr);
    g.bit_accuracy.push_back(r.bit_accuracy);
    g.fidelity.push_back(r.fidelity);
    all_esr.push_back(r.esr);
  }
  auto stat_json = [](const std::vector<double>& xs) {
    const Stats s = stats(xs);
    ordered_json j;
    j["mean"] = s.mean;
    j["std"] = s.std;
    return j;
  };
  ordered_json out;
  auto arr = ordered_json::array();
  for (const auto& g : groups) {
    ordered_json j;
    j["config"] = g.config;
    j["kind"] = g.kind;
    j["intensity"] = g.intensity;
    j["rows"] = g.rows;
    j["errors"] = g.errors;
    j["esr"] = stat_json(g.esr);
    j["bit_accuracy"] = stat_json(g.bit_accuracy);
    j["fidelity"] = stat_json(g.fidelity);
    arr.push_back(std::move(j));
  }
  out["groups"] = std::move(arr);
  ordered_json totals;
  totals["rows"] = rows.size();
  totals["errors"] = errors;
  totals["esr"] = stat_json(all_esr);
  out["totals"] = std::move(totals);
  return out;
}

}  // namespace editmark
