#include "editmark/cli.hpp"

#include <algorithm>
#include <ostream>

#include <CLI11.hpp>

#include "editmark/error.hpp"
#include "editmark/eval.hpp"
#include "editmark/model_io.hpp"

namespace editmark {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

struct EditFlags {
  std::string file;
  std::optional<int> t;
  std::optional<double> lambda;
  std::optional<double> tau;
  std::optional<double> epsilon;
  std::optional<double> noise_sigma_rel;
  std::optional<int> gd_steps;
  std::optional<double> gd_step;
  std::optional<std::uint64_t> noise_seed;
};

struct ModelFlags {
  std::string file;
  std::optional<int> d_k;
  std::optional<int> preserved;
  std::optional<int> block_dim;
  std::optional<int> m_max;
  std::optional<int> vocab;
  std::optional<std::uint64_t> encoder_seed;
  std::optional<std::uint64_t> decoder_seed;
  std::optional<std::uint64_t> corpus_seed;
};

struct AttackFlags {
  std::string kind;
  std::optional<double> intensity;
  std::optional<double> sigma;
  std::optional<double> ratio;
  std::optional<int> quant_bits;
  std::optional<int> steps;
  std::optional<int> cases;
  std::optional<std::string> scenario;
  std::optional<double> lr;
  std::optional<int> batch;
  std::optional<double> fresh_fraction;
  std::optional<int> overwrite_rounds;
};

void add_edit_flags(CLI::App& app, EditFlags& f) {
  app.add_option("--edit-config", f.file, "JSON file with EditConfig fields");
  app.add_option("--t", f.t, "maximum editing rounds");
  app.add_option("--lambda", f.lambda, "weight of the noisy-key update");
  app.add_option("--tau", f.tau, "early-stop threshold on the editing score");
  app.add_option("--epsilon", f.epsilon, "clip factor for target shifts");
  app.add_option("--noise-sigma-rel", f.noise_sigma_rel, "relative sigma of the key noise");
  app.add_option("--gd-steps", f.gd_steps, "gradient steps per target value");
  app.add_option("--gd-step", f.gd_step, "gradient step size");
  app.add_option("--noise-seed", f.noise_seed, "extra seed mixed into the key-noise stream");
}

EditConfig resolve_edit(const EditFlags& f) {
  EditConfig c;
  if (!f.file.empty()) {
    try {
      c = edit_config_from_json(json::parse(read_file(f.file)));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kParse, std::string("edit config is not valid JSON: ") + e.what());
    }
  }
  if (f.t) c.t = *f.t;
  if (f.lambda) c.lambda = *f.lambda;
  if (f.tau) c.tau = *f.tau;
  if (f.epsilon) c.epsilon = *f.epsilon;
  if (f.noise_sigma_rel) c.noise_sigma_rel = *f.noise_sigma_rel;
  if (f.gd_steps) c.gd_steps = *f.gd_steps;
  if (f.gd_step) c.gd_step = *f.gd_step;
  if (f.noise_seed) c.noise_seed = *f.noise_seed;
  c.validate();
  return c;
}

ModelConfig resolve_model(const ModelFlags& f, std::uint64_t seed) {
  ModelConfig c;
  if (!f.file.empty()) {
    try {
      const json j = json::parse(read_file(f.file));
      c = config_from_json(j.contains("model") ? j.at("model") : j);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kParse, std::string("model config is not valid JSON: ") + e.what());
    }
  }
  c.encoder_seed = f.encoder_seed.value_or(seed);
  c.decoder_seed = f.decoder_seed.value_or(seed + 1);
  c.corpus_seed = f.corpus_seed.value_or(seed + 2);
  if (f.d_k) c.d_k = *f.d_k;
  if (f.preserved) c.preserved_count = *f.preserved;
  if (f.block_dim) c.block_dim = *f.block_dim;
  if (f.m_max) c.m_max = *f.m_max;
  if (f.vocab) c.vocab_size = *f.vocab;
  return c;
}

AttackSpec resolve_attack(const AttackFlags& f, std::uint64_t seed) {
  AttackSpec spec;
  spec.kind = parse_attack_kind(f.kind);
  spec.seed = seed;
  int given = 0;
  auto take = [&](const auto& opt) {
    if (opt) {
      spec.intensity = static_cast<double>(*opt);
      ++given;
    }
  };
  take(f.intensity);
  take(f.sigma);
  take(f.ratio);
  take(f.quant_bits);
  take(f.steps);
  take(f.cases);
  if (f.scenario) {
    if (*f.scenario != "A" && *f.scenario != "B") {
      throw Error(ErrorCode::kParameter, "--scenario must be A or B");
    }
    spec.intensity = *f.scenario == "A" ? 0.0 : 1.0;
    ++given;
  }
  if (given > 1) throw Error(ErrorCode::kParameter, "give the attack intensity once");
  if (given == 0 && spec.kind != AttackKind::kNone) {
    throw Error(ErrorCode::kParameter, "attack intensity missing for kind " + f.kind);
  }
  if (f.lr) spec.finetune.lr = *f.lr;
  if (f.batch) spec.finetune.batch = *f.batch;
  if (f.fresh_fraction) spec.finetune.fresh_fraction = *f.fresh_fraction;
  if (f.overwrite_rounds) spec.overwrite_rounds = *f.overwrite_rounds;
  spec.validate();
  return spec;
}

void emit_error(std::ostream& err, ErrorCode code, const std::string& message) {
  ordered_json j;
  j["error"] = error_code_name(code);
  j["message"] = message;
  err << j.dump() << '\n';
}

std::size_t watermark_length(const RunConfig& rc) {
  const std::size_t full = rc.watermark_hex.size() * 4;
  const std::size_t length = rc.bit_length.value_or(full);
  if (length == 0 || length > full || full - length >= 4) {
    throw Error(ErrorCode::kParameter, "--bits must lie in (4*len(hex) - 4, 4*len(hex)]");
  }
  return length;
}

int cmd_init(const RunConfig& rc, std::ostream& out) {
  const ModelState model = init_model(rc.model);
  save_model(model, rc.model_out);
  if (!rc.config_out.empty()) {
    ordered_json j;
    j["model"] = config_to_json(rc.model);
    j["edit"] = edit_config_to_json(rc.edit);
    write_file(rc.config_out, j.dump(2) + "\n");
  }
  ordered_json report;
  report["model_out"] = rc.model_out;
  report["d_k"] = rc.model.d_k;
  report["d_v"] = rc.model.d_v();
  report["preserved_count"] = rc.model.preserved_count;
  report["preserved_accuracy"] = preserved_accuracy(model);
  out << report.dump() << '\n';
  return kExitOk;
}

int cmd_embed(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const std::size_t length = watermark_length(rc);
  const Bits bits = hex_to_bits(rc.watermark_hex, length);
  const CapacityParams params = capacity(rc.n, rc.m);
  const ModelState model = load_model(rc.model_in);
  const EmbedOutcome embedded = embed_watermark(model, SeedKey{*rc.seed}, bits, params, rc.edit);
  save_model(embedded.edit.model, rc.model_out);

  const ExtractionResult ex =
      extract(embedded.edit.model, SeedKey{*rc.seed}, params, embedded.message.chunks.size(), length);
  const ChunkScore score = score_extraction(ex, embedded.message);

  ordered_json report;
  report["questions"] = questions_to_json(embedded.questions);
  report["trace"] = trace_to_json(embedded.edit.trace, rc.timings);
  report["esr"] = score.esr;
  report["recovered_hex"] = ex.bits ? ordered_json(bits_to_hex(*ex.bits)) : ordered_json();
  report["fidelity"] = preserved_agreement(model, embedded.edit.model);
  report["k0_residual"] = k0_residual(model, embedded.edit.model);
  if (rc.timings) report["embed_seconds"] = embedded.seconds;
  if (!rc.trace_out.empty()) write_file(rc.trace_out, report.dump(2) + "\n");
  out << report.dump() << '\n';
  if (score.esr != 1.0) {
    emit_error(err, ErrorCode::kNumeric, "self-extraction after embedding recovered " +
                                             std::to_string(score.esr) + " of the chunks");
    return kExitNumeric;
  }
  return kExitOk;
}

int cmd_extract(const RunConfig& rc, std::ostream& out) {
  const CapacityParams params = capacity(rc.n, rc.m);
  std::optional<WatermarkMessage> truth;
  std::size_t length = rc.bit_length.value_or(128);
  if (!rc.expected_hex.empty()) {
    const std::size_t full = rc.expected_hex.size() * 4;
    length = rc.bit_length.value_or(full);
    truth = split_watermark(hex_to_bits(rc.expected_hex, length), params);
  }
  if (length == 0) throw Error(ErrorCode::kParameter, "--bits must be positive");
  const ModelState model = load_model(rc.model_in);
  const ExtractionResult ex = extract_bits(model, SeedKey{*rc.seed}, params, length);
  out << extraction_to_json(ex, truth).dump() << '\n';
  return kExitOk;
}

int cmd_attack(const RunConfig& rc, std::ostream& out) {
  const ModelState model = load_model(rc.model_in);
  const AttackOutcome attacked = apply_attack(model, rc.attack, rc.edit, capacity(rc.n, rc.m));
  save_model(attacked.model, rc.model_out);
  ordered_json report;
  report["attack"] = attack_spec_to_json(rc.attack);
  report["injected"] = attacked.injected.size();
  report["fidelity"] = preserved_agreement(model, attacked.model);
  out << report.dump() << '\n';
  return kExitOk;
}

int cmd_sweep(const RunConfig& rc, std::ostream& out) {
  json manifest_json;
  try {
    manifest_json = json::parse(read_file(rc.manifest));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("manifest is not valid JSON: ") + e.what());
  }
  SweepManifest manifest = manifest_from_json(manifest_json);
  if (rc.workers) manifest.workers = *rc.workers;
  const bool timings = rc.timings || manifest.timings;
  const auto rows = run_sweep(manifest);
  const std::string csv = sweep_csv(rows, timings);
  const ordered_json summary = sweep_summary(rows);
  if (!rc.csv_out.empty()) write_file(rc.csv_out, csv);
  if (!rc.summary_out.empty()) write_file(rc.summary_out, summary.dump(2) + "\n");
  if (rc.csv_out.empty()) {
    out << csv;
  } else {
    out << summary.at("totals").dump() << '\n';
  }
  return kExitOk;
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParameter:
    case ErrorCode::kRange:
      return kExitUsage;
    case ErrorCode::kMalformedAnswer:
    case ErrorCode::kConfig:
    case ErrorCode::kParse:
    case ErrorCode::kIo:
      return kExitData;
    case ErrorCode::kNoNullSpace:
    case ErrorCode::kNumeric:
    case ErrorCode::kDivergence:
      return kExitNumeric;
  }
  return kExitData;
}

ordered_json run_config_to_json(const RunConfig& c) {
  ordered_json j;
  j["subcommand"] = c.subcommand;
  j["seed"] = c.seed ? ordered_json(*c.seed) : ordered_json();
  j["model_in"] = c.model_in;
  j["model_out"] = c.model_out;
  j["config_out"] = c.config_out;
  j["trace_out"] = c.trace_out;
  j["manifest"] = c.manifest;
  j["csv_out"] = c.csv_out;
  j["summary_out"] = c.summary_out;
  j["watermark_hex"] = c.watermark_hex;
  j["expected_hex"] = c.expected_hex;
  j["bit_length"] = c.bit_length ? ordered_json(*c.bit_length) : ordered_json();
  j["n"] = c.n;
  j["m"] = c.m;
  j["model"] = config_to_json(c.model);
  j["edit"] = edit_config_to_json(c.edit);
  j["attack"] = attack_spec_to_json(c.attack);
  j["workers"] = c.workers ? ordered_json(*c.workers) : ordered_json();
  j["timings"] = c.timings;
  j["verbosity"] = c.verbosity;
  return j;
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kParse, "run config must be an object");
  RunConfig c;
  try {
    c.subcommand = j.value("subcommand", "");
    if (j.contains("seed") && !j.at("seed").is_null()) c.seed = j.at("seed").get<std::uint64_t>();
    c.model_in = j.value("model_in", "");
    c.model_out = j.value("model_out", "");
    c.config_out = j.value("config_out", "");
    c.trace_out = j.value("trace_out", "");
    c.manifest = j.value("manifest", "");
    c.csv_out = j.value("csv_out", "");
    c.summary_out = j.value("summary_out", "");
    c.watermark_hex = j.value("watermark_hex", "");
    c.expected_hex = j.value("expected_hex", "");
    if (j.contains("bit_length") && !j.at("bit_length").is_null()) {
      c.bit_length = j.at("bit_length").get<std::size_t>();
    }
    c.n = j.value("n", c.n);
    c.m = j.value("m", c.m);
    if (j.contains("model")) c.model = config_from_json(j.at("model"));
    if (j.contains("edit")) c.edit = edit_config_from_json(j.at("edit"));
    if (j.contains("attack")) c.attack = attack_spec_from_json(j.at("attack"));
    if (j.contains("workers") && !j.at("workers").is_null()) c.workers = j.at("workers").get<int>();
    c.timings = j.value("timings", false);
    c.verbosity = j.value("verbosity", 0);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("bad run config: ") + e.what());
  }
  return c;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-bit watermarking of a toy editable model by null-space projected editing", "editmark"};
  app.require_subcommand(1);
  bool print_config = false;
  RunConfig rc;
  EditFlags edit_flags;
  ModelFlags model_flags;
  AttackFlags attack_flags;
  std::uint64_t seed = 0;

  app.add_flag("--print-config", print_config, "print the resolved run config as JSON and exit");
  app.add_flag("-v,--verbose", rc.verbosity, "more diagnostics on stderr");

  auto* init = app.add_subcommand("init", "create a fresh model file");
  init->add_option("--seed", seed, "base seed: encoder=S, decoder=S+1, corpus=S+2")->required();
  init->add_option("--model-out", rc.model_out, "model file to write")->required();
  init->add_option("--config-out", rc.config_out, "also write the model and edit config as JSON");
  init->add_option("--model-config", model_flags.file, "JSON file with ModelConfig fields");
  init->add_option("--d-k", model_flags.d_k, "key dimension");
  init->add_option("--preserved", model_flags.preserved, "number of preserved facts");
  init->add_option("--block-dim", model_flags.block_dim, "readout width per answer position");
  init->add_option("--m-max", model_flags.m_max, "maximum answer length");
  init->add_option("--vocab", model_flags.vocab, "number tokens per position");
  init->add_option("--encoder-seed", model_flags.encoder_seed);
  init->add_option("--decoder-seed", model_flags.decoder_seed);
  init->add_option("--corpus-seed", model_flags.corpus_seed);

  auto* embed_cmd = app.add_subcommand("embed", "embed a watermark and self-check it");
  embed_cmd->add_option("--seed", seed, "owner's secret seed")->required();
  embed_cmd->add_option("--model-in", rc.model_in)->required();
  embed_cmd->add_option("--model-out", rc.model_out)->required();
  embed_cmd->add_option("--watermark", rc.watermark_hex, "watermark hex, most significant nibble first")->required();
  embed_cmd->add_option("--bits", rc.bit_length, "watermark bit length when not a multiple of 4");
  embed_cmd->add_option("--trace-out", rc.trace_out, "write the embed report JSON here");
  embed_cmd->add_option("--n", rc.n, "solution interval width");
  embed_cmd->add_option("--m", rc.m, "answers per question");
  embed_cmd->add_flag("--timings", rc.timings, "include wall-clock fields in the report");
  add_edit_flags(*embed_cmd, edit_flags);

  auto* extract_cmd = app.add_subcommand("extract", "recover a watermark from a model");
  extract_cmd->add_option("--seed", seed, "owner's secret seed")->required();
  extract_cmd->add_option("--model-in", rc.model_in)->required();
  extract_cmd->add_option("--bits", rc.bit_length, "expected watermark length in bits (default 128)");
  extract_cmd->add_option("--expected", rc.expected_hex, "ground-truth hex for per-chunk match flags");
  extract_cmd->add_option("--n", rc.n);
  extract_cmd->add_option("--m", rc.m);

  auto* attack_cmd = app.add_subcommand("attack", "apply a weight-space attack");
  attack_cmd->add_option("--seed", seed, "attack seed")->required();
  attack_cmd->add_option("--model-in", rc.model_in)->required();
  attack_cmd->add_option("--model-out", rc.model_out)->required();
  attack_cmd->add_option("--kind", attack_flags.kind, "none|noise|prune|quantize|finetune|edit|overwrite")->required();
  attack_cmd->add_option("--intensity", attack_flags.intensity, "kind-specific intensity");
  attack_cmd->add_option("--sigma", attack_flags.sigma, "noise sigma");
  attack_cmd->add_option("--ratio", attack_flags.ratio, "prune ratio");
  attack_cmd->add_option("--quant-bits", attack_flags.quant_bits, "quantization width, 4 or 8");
  attack_cmd->add_option("--steps", attack_flags.steps, "finetune steps");
  attack_cmd->add_option("--cases", attack_flags.cases, "edit-attack case count");
  attack_cmd->add_option("--scenario", attack_flags.scenario, "overwrite scenario, A or B");
  attack_cmd->add_option("--lr", attack_flags.lr, "finetune learning rate");
  attack_cmd->add_option("--batch", attack_flags.batch, "finetune batch size");
  attack_cmd->add_option("--fresh-fraction", attack_flags.fresh_fraction, "finetune share of unseen facts");
  attack_cmd->add_option("--overwrite-rounds", attack_flags.overwrite_rounds, "editing rounds of an overwrite attack");
  attack_cmd->add_option("--n", rc.n);
  attack_cmd->add_option("--m", rc.m);
  add_edit_flags(*attack_cmd, edit_flags);

  auto* sweep_cmd = app.add_subcommand("sweep", "run an attack grid from a manifest");
  sweep_cmd->add_option("--manifest", rc.manifest, "sweep manifest JSON")->required();
  sweep_cmd->add_option("--csv-out", rc.csv_out, "CSV report (stdout when absent)");
  sweep_cmd->add_option("--summary-out", rc.summary_out, "JSON summary");
  sweep_cmd->add_option("--workers", rc.workers, "worker threads, 0 = all cores");
  sweep_cmd->add_flag("--timings", rc.timings, "fill the time_s column");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    rc.subcommand = app.get_subcommands().front()->get_name();
    if (rc.subcommand != "sweep") rc.seed = seed;
    if (rc.subcommand == "init") rc.model = resolve_model(model_flags, seed);
    if (rc.subcommand == "embed" || rc.subcommand == "attack") rc.edit = resolve_edit(edit_flags);
    if (rc.subcommand == "attack") rc.attack = resolve_attack(attack_flags, seed);

    if (print_config) {
      out << run_config_to_json(rc).dump(2) << '\n';
      return kExitOk;
    }
    if (rc.subcommand == "init") return cmd_init(rc, out);
    if (rc.subcommand == "embed") return cmd_embed(rc, out, err);
    if (rc.subcommand == "extract") return cmd_extract(rc, out);
    if (rc.subcommand == "attack") return cmd_attack(rc, out);
    return cmd_sweep(rc, out);
  } catch (const Error& e) {
    emit_error(err, e.code(), e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    emit_error(err, ErrorCode::kIo, e.what());
    return kExitData;
  }
}

}  // namespace editmark
