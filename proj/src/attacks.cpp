#include "editmark/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "editmark/error.hpp"
#include "editmark/rng.hpp"

namespace editmark {

namespace {

bool is_whole(double x) { return std::isfinite(x) && x == std::floor(x); }

ModelState with_weights(const ModelState& model, Eigen::MatrixXd W) {
  ModelState out;
  out.frame = model.frame;
  out.W = std::move(W);
  return out;
}

EditConfig reseeded(EditConfig config, std::uint64_t seed, std::string_view tag) {
  config.noise_seed = derive_seed(seed, tag);
  return config;
}

}  // namespace

std::string_view attack_kind_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::kNone: return "none";
    case AttackKind::kNoise: return "noise";
    case AttackKind::kPrune: return "prune";
    case AttackKind::kQuantize: return "quantize";
    case AttackKind::kFinetune: return "finetune";
    case AttackKind::kEdit: return "edit";
    case AttackKind::kOverwrite: return "overwrite";
  }
  return "none";
}

AttackKind parse_attack_kind(std::string_view name) {
  for (AttackKind k : {AttackKind::kNone, AttackKind::kNoise, AttackKind::kPrune, AttackKind::kQuantize,
                       AttackKind::kFinetune, AttackKind::kEdit, AttackKind::kOverwrite}) {
    if (attack_kind_name(k) == name) return k;
  }
  throw Error(ErrorCode::kParameter, "unknown attack kind: " + std::string(name));
}

void AttackSpec::validate() const {
  const double x = intensity;
  switch (kind) {
    case AttackKind::kNone:
      return;
    case AttackKind::kNoise:
      if (!(x >= 0.0) || !std::isfinite(x)) throw Error(ErrorCode::kParameter, "noise sigma must be >= 0");
      return;
    case AttackKind::kPrune:
      if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorCode::kParameter, "prune ratio must lie in [0, 1]");
      return;
    case AttackKind::kQuantize:
      if (x != 4.0 && x != 8.0) throw Error(ErrorCode::kParameter, "quantize bit width must be 4 or 8");
      return;
    case AttackKind::kFinetune:
      if (!is_whole(x) || x < 0.0) throw Error(ErrorCode::kParameter, "finetune steps must be a whole number >= 0");
      if (!(finetune.lr > 0.0) || finetune.batch < 1 ||
          !(finetune.fresh_fraction >= 0.0 && finetune.fresh_fraction <= 1.0)) {
        throw Error(ErrorCode::kParameter, "finetune needs lr > 0, batch >= 1, fresh_fraction in [0, 1]");
      }
      return;
    case AttackKind::kEdit:
      if (!is_whole(x) || x < 1.0) throw Error(ErrorCode::kParameter, "edit case count must be a whole number >= 1");
      return;
    case AttackKind::kOverwrite:
      if (overwrite_rounds < 1) throw Error(ErrorCode::kParameter, "overwrite_rounds must be >= 1");
      if (x != 0.0 && x != 1.0) throw Error(ErrorCode::kParameter, "overwrite intensity selects scenario: 0 (A) or 1 (B)");
      return;
  }
}

nlohmann::ordered_json attack_spec_to_json(const AttackSpec& spec) {
  nlohmann::ordered_json j;
  j["kind"] = attack_kind_name(spec.kind);
  j["intensity"] = spec.intensity;
  j["seed"] = spec.seed;
  j["lr"] = spec.finetune.lr;
  j["batch"] = spec.finetune.batch;
  j["fresh_fraction"] = spec.finetune.fresh_fraction;
  j["overwrite_rounds"] = spec.overwrite_rounds;
  return j;
}

AttackSpec attack_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string()) {
    throw Error(ErrorCode::kParameter, "attack spec needs a string \"kind\"");
  }
  AttackSpec spec;
  try {
    spec.kind = parse_attack_kind(j.at("kind").get<std::string>());
    spec.intensity = j.value("intensity", 0.0);
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.finetune.lr = j.value("lr", spec.finetune.lr);
    spec.finetune.batch = j.value("batch", spec.finetune.batch);
    spec.finetune.fresh_fraction = j.value("fresh_fraction", spec.finetune.fresh_fraction);
    spec.overwrite_rounds = j.value("overwrite_rounds", spec.overwrite_rounds);
    if (j.contains("scenario")) {
      const auto s = j.at("scenario").get<std::string>();
      if (s != "A" && s != "B") throw Error(ErrorCode::kParameter, "scenario must be \"A\" or \"B\"");
      spec.intensity = s == "A" ? 0.0 : 1.0;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParameter, std::string("bad attack spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

ModelState attack_noise(const ModelState& model, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw Error(ErrorCode::kParameter, "noise sigma must be >= 0");
  Eigen::MatrixXd W = model.W;
  if (sigma == 0.0) return with_weights(model, std::move(W));
  Rng rng(derive_seed(seed, "attack/noise"));
  for (Eigen::Index r = 0; r < W.rows(); ++r) {
    for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) += sigma * rng.normal();
  }
  return with_weights(model, std::move(W));
}

ModelState attack_prune(const ModelState& model, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error(ErrorCode::kParameter, "prune ratio must lie in [0, 1]");
  Eigen::MatrixXd W = model.W;
  const auto cols = W.cols();
  const auto total = static_cast<std::size_t>(W.size());
  const auto count = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(total)));
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto at = [&](std::size_t k) {
    return std::abs(W(static_cast<Eigen::Index>(k) / cols, static_cast<Eigen::Index>(k) % cols));
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return at(x) < at(y); });
  for (std::size_t i = 0; i < count; ++i) {
    W(static_cast<Eigen::Index>(order[i]) / cols, static_cast<Eigen::Index>(order[i]) % cols) = 0.0;
  }
  return with_weights(model, std::move(W));
}

ModelState attack_quantize(const ModelState& model, int bits) {
  if (bits != 4 && bits != 8) throw Error(ErrorCode::kParameter, "quantize bit width must be 4 or 8");
  Eigen::MatrixXd W = model.W;
  const double peak = W.cwiseAbs().maxCoeff();
  if (peak == 0.0) return with_weights(model, std::move(W));
  const double levels = std::ldexp(1.0, bits - 1) - 1.0;
  const double scale = peak / levels;
  // nearbyint honours the default round-to-nearest-even mode.
  W = W.unaryExpr([&](double w) { return std::clamp(std::nearbyint(w / scale), -levels, levels) * scale; });
  return with_weights(model, std::move(W));
}

ModelState attack_finetune(const ModelState& model, int steps, const FinetuneParams& params,
                           std::uint64_t seed) {
  if (steps < 0) throw Error(ErrorCode::kParameter, "finetune steps must be >= 0");
  Eigen::MatrixXd W = model.W;
  if (steps == 0) return with_weights(model, std::move(W));
  const ModelFrame& frame = *model.frame;
  const ModelConfig& cfg = frame.config;

  const auto fresh_count = static_cast<int>(std::lround(params.batch * params.fresh_fraction));
  const int preserved_count = params.batch - fresh_count;
  std::vector<Fact> fresh;
  Eigen::MatrixXd fresh_keys;
  if (fresh_count > 0) {
    fresh = synthetic_facts(seed, "attack/finetune/fresh",
                            static_cast<std::size_t>(std::max(64, steps * fresh_count)), cfg);
    std::vector<std::string> prompts;
    for (const auto& f : fresh) prompts.push_back(f.prompt);
    fresh_keys = model_keys(prompts, cfg);
  }

  Rng rng(derive_seed(seed, "attack/finetune/batches"));
  Eigen::MatrixXd grad(W.rows(), W.cols());
  for (int step = 0; step < steps; ++step) {
    grad.setZero();
    auto accumulate = [&](const Eigen::VectorXd& key, const Tokens& answer) {
      const auto lg = answer_loss_and_gradient(frame, W * key, answer);
      grad.noalias() += lg.gradient * key.transpose();
    };
    for (int b = 0; b < preserved_count; ++b) {
      const auto idx = static_cast<Eigen::Index>(rng.below(frame.facts.size()));
      accumulate(frame.K0.col(idx), frame.facts[static_cast<std::size_t>(idx)].answer);
    }
    for (int b = 0; b < fresh_count; ++b) {
      const auto idx = static_cast<Eigen::Index>(rng.below(fresh.size()));
      accumulate(fresh_keys.col(idx), fresh[static_cast<std::size_t>(idx)].answer);
    }
    W -= (params.lr / params.batch) * grad;
    if (!W.allFinite()) {
      throw Error(ErrorCode::kDivergence, "finetune diverged at step " + std::to_string(step));
    }
  }
  return with_weights(model, std::move(W));
}

AttackOutcome attack_edit(const ModelState& model, int case_count, std::uint64_t seed,
                          const EditConfig& config, const Projector* projector) {
  if (case_count < 1) throw Error(ErrorCode::kParameter, "edit attack needs at least one case");
  const auto facts = synthetic_facts(seed, "attack/edit/facts", static_cast<std::size_t>(case_count),
                                     model.config());
  std::vector<EditRequest> requests;
  for (const auto& f : facts) requests.push_back({f.prompt, f.answer});
  const EditConfig cfg = reseeded(config, seed, "attack/edit/noise");
  EditResult edited = projector ? embed(model, *projector, requests, cfg) : embed(model, requests, cfg);
  return {std::move(edited.model), std::move(requests)};
}

const std::vector<QuestionTemplate>& overwrite_templates(OverwriteScenario scenario) {
  auto reciprocal = [](double z, double a, double ap) {
    if (z == 0.0 || a <= 0.0) return false;
    return 1.0 / ap < 1.0 / z && 1.0 / z < 1.0 / a;
  };
  auto shifted = [](double z, double a, double ap) { return a + 1 < z + 1 && z + 1 < ap + 1; };
  static const std::vector<QuestionTemplate> scenario_a = {
      {101, "For the inequality 1/{a'}<1/x<1/{a}, {m} random integer solutions are x=", reciprocal},
      {102, "For the inequality {a+1}<y+1<{a'+1}, {m} random integer solutions are y=", shifted},
  };
  static const std::vector<QuestionTemplate> scenario_b = {
      {201, "{m} random integer solutions for the inequality 1/{a'}<1/x<1/{a} are x =", reciprocal},
      {202, "{m} random integer solutions for the inequality {a+1}<y+1<{a'+1} are y =", shifted},
  };
  return scenario == OverwriteScenario::kA ? scenario_a : scenario_b;
}

AttackOutcome attack_overwrite(const ModelState& model, std::uint64_t attacker_seed,
                               OverwriteScenario scenario, const EditConfig& config,
                               const CapacityParams& params, std::size_t bits,
                               const Projector* projector) {
  if (bits == 0) throw Error(ErrorCode::kParameter, "attacker watermark must have at least one bit");
  Rng rng(derive_seed(attacker_seed, "attack/overwrite/bits"));
  Bits watermark(bits);
  for (auto& b : watermark) b = static_cast<std::uint8_t>(rng.next() >> 63);
  const WatermarkMessage message = split_watermark(watermark, params);
  const auto questions = render_questions(SeedKey{attacker_seed}, params, message.chunks.size(),
                                          overwrite_templates(scenario));
  auto requests = watermark_requests(questions, message.chunks, model.config().vocab_size);
  const EditConfig cfg = reseeded(config, attacker_seed, "attack/overwrite/noise");
  EditResult edited = projector ? embed(model, *projector, requests, cfg) : embed(model, requests, cfg);
  return {std::move(edited.model), std::move(requests)};
}

AttackOutcome apply_attack(const ModelState& model, const AttackSpec& spec, const EditConfig& config,
                           const CapacityParams& params, const Projector* projector) {
  spec.validate();
  EditConfig attacker = config;
  attacker.t = spec.overwrite_rounds;
  switch (spec.kind) {
    case AttackKind::kNone:
      return {model, {}};
    case AttackKind::kNoise:
      return {attack_noise(model, spec.intensity, spec.seed), {}};
    case AttackKind::kPrune:
      return {attack_prune(model, spec.intensity), {}};
    case AttackKind::kQuantize:
      return {attack_quantize(model, static_cast<int>(spec.intensity)), {}};
    case AttackKind::kFinetune:
      return {attack_finetune(model, static_cast<int>(spec.intensity), spec.finetune, spec.seed), {}};
    case AttackKind::kEdit:
      return attack_edit(model, static_cast<int>(spec.intensity), spec.seed, config, projector);
    case AttackKind::kOverwrite:
      return attack_overwrite(model, spec.seed,
                              spec.intensity == 0.0 ? OverwriteScenario::kA : OverwriteScenario::kB,
                              attacker, params, 128, projector);
  }
  throw Error(ErrorCode::kParameter, "unhandled attack kind");
}

}  // namespace editmark
