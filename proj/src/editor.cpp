#include "editmark/editor.hpp"

#include <chrono>
#include <cmath>

#include "editmark/error.hpp"
#include "editmark/rng.hpp"

namespace editmark {

Projector build_projector(const Eigen::MatrixXd& K0, double svd_zero_tol) {
  if (K0.rows() == 0) throw Error(ErrorCode::kParameter, "K0 has no rows");
  if (!(svd_zero_tol >= 0.0)) throw Error(ErrorCode::kParameter, "svd_zero_tol must be non-negative");
  const Eigen::MatrixXd gram = K0 * K0.transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::kNumeric, "eigendecomposition of K0 K0^T failed");
  const Eigen::VectorXd& values = eig.eigenvalues();  // ascending
  const double cutoff = svd_zero_tol * std::max(values.maxCoeff(), 0.0);
  Eigen::Index zero = 0;
  while (zero < values.size() && values[zero] <= cutoff) ++zero;
  if (zero == 0) {
    throw Error(ErrorCode::kNoNullSpace,
                "preserved keys span the whole key space; raise d_k or preserve fewer facts");
  }
  const Eigen::MatrixXd U = eig.eigenvectors().leftCols(zero);
  Projector out;
  out.P = U * U.transpose();
  out.P = 0.5 * (out.P + out.P.transpose());
  out.rank_deficiency = static_cast<int>(zero);
  return out;
}

void EditConfig::validate() const {
  if (t < 1) throw Error(ErrorCode::kConfig, "t must be at least 1");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorCode::kConfig, "lambda must lie in [0, 1]");
  if (!(tau > 0.0)) throw Error(ErrorCode::kConfig, "tau must be positive");
  if (!(epsilon > 0.0)) throw Error(ErrorCode::kConfig, "epsilon must be positive");
  if (!(noise_sigma_rel >= 0.0)) throw Error(ErrorCode::kConfig, "noise_sigma_rel must be non-negative");
  if (!(svd_zero_tol >= 0.0)) throw Error(ErrorCode::kConfig, "svd_zero_tol must be non-negative");
  if (gd_steps < 0) throw Error(ErrorCode::kConfig, "gd_steps must be non-negative");
  if (!(gd_step > 0.0)) throw Error(ErrorCode::kConfig, "gd_step must be positive");
}

nlohmann::ordered_json edit_config_to_json(const EditConfig& c) {
  nlohmann::ordered_json j;
  j["t"] = c.t;
  j["lambda"] = c.lambda;
  j["tau"] = c.tau;
  j["epsilon"] = c.epsilon;
  j["noise_sigma_rel"] = c.noise_sigma_rel;
  j["svd_zero_tol"] = c.svd_zero_tol;
  j["gd_steps"] = c.gd_steps;
  j["gd_step"] = c.gd_step;
  j["noise_seed"] = c.noise_seed;
  return j;
}

EditConfig edit_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "edit config must be an object");
  EditConfig c;
  auto take = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kConfig, std::string("bad edit config field ") + key + ": " + e.what());
    }
  };
  take("t", c.t);
  take("lambda", c.lambda);
  take("tau", c.tau);
  take("epsilon", c.epsilon);
  take("noise_sigma_rel", c.noise_sigma_rel);
  take("svd_zero_tol", c.svd_zero_tol);
  take("gd_steps", c.gd_steps);
  take("gd_step", c.gd_step);
  take("noise_seed", c.noise_seed);
  return c;
}

std::string_view stabilization_mode_name(StabilizationMode mode) {
  return mode == StabilizationMode::kAllEdited ? "all_edited" : "not_all_edited";
}

std::vector<EditRequest> watermark_requests(const std::vector<QuestionSpec>& questions,
                                            const std::vector<BigInt>& chunks, int vocab_size) {
  if (questions.size() != chunks.size()) {
    throw Error(ErrorCode::kParameter, "question and chunk counts differ");
  }
  std::vector<EditRequest> out;
  out.reserve(questions.size());
  for (std::size_t i = 0; i < questions.size(); ++i) {
    const QuestionSpec& q = questions[i];
    if (q.n > vocab_size) throw Error(ErrorCode::kConfig, "interval width exceeds the token vocabulary");
    const CapacityParams params = capacity(q.n, q.m);
    out.push_back({q.prompt, answer_tokens(encode(chunks[i], q.a, params), vocab_size)});
  }
  return out;
}

TargetValues solve_target_values(const ModelFrame& frame, const Eigen::MatrixXd& H,
                                 const std::vector<Tokens>& targets, StabilizationMode mode,
                                 const EditConfig& config) {
  if (H.cols() != static_cast<Eigen::Index>(targets.size()) || H.rows() != frame.config.d_v()) {
    throw Error(ErrorCode::kParameter, "hidden states and targets are misaligned");
  }
  const double bound = (mode == StabilizationMode::kAllEdited && config.t > 1)
                           ? 1.0 / static_cast<double>(config.t - 1)
                           : config.epsilon;
  TargetValues out;
  out.V1.resize(H.rows(), H.cols());
  for (Eigen::Index j = 0; j < H.cols(); ++j) {
    const Eigen::VectorXd h = H.col(j);
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(h.size());
    for (int step = 0; step < config.gd_steps; ++step) {
      const auto lg = answer_loss_and_gradient(frame, h + delta, targets[static_cast<std::size_t>(j)]);
      if (!std::isfinite(lg.loss) || !lg.gradient.allFinite()) {
        throw Error(ErrorCode::kNumeric, "non-finite answer loss at column " + std::to_string(j) +
                                             ", step " + std::to_string(step));
      }
      delta -= config.gd_step * lg.gradient;
    }
    const double limit = bound * h.norm();
    const double size = delta.norm();
    if (size > limit) {
      delta *= limit / size;
      ++out.clip_count;
    }
    out.V1.col(j) = h + delta;
  }
  return out;
}

Eigen::MatrixXd closed_form_update(const Eigen::MatrixXd& W, const Eigen::MatrixXd& K1,
                                   const Eigen::MatrixXd& V1, const Eigen::MatrixXd& P,
                                   const std::optional<Eigen::MatrixXd>& noise) {
  if (W.cols() != K1.rows() || V1.rows() != W.rows() || V1.cols() != K1.cols() ||
      P.rows() != K1.rows() || P.cols() != K1.rows()) {
    throw Error(ErrorCode::kParameter, "closed_form_update: shape mismatch");
  }
  if (noise && (noise->rows() != K1.rows() || noise->cols() != K1.cols())) {
    throw Error(ErrorCode::kParameter, "closed_form_update: noise shape differs from K1");
  }
  const Eigen::MatrixXd K = noise ? Eigen::MatrixXd(K1 + *noise) : K1;
  const Eigen::MatrixXd R = V1 - W * K;
  const Eigen::MatrixXd PK = P * K;
  Eigen::MatrixXd M = PK * PK.transpose();
  M.diagonal().array() += 1.0;
  const Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::kNumeric, "update system is not positive definite");
  // M X^T = P K R^T, M symmetric.
  return llt.solve(PK * R.transpose()).transpose();
}

Eigen::MatrixXd sample_noise_matrix(const Eigen::MatrixXd& K1, double sigma_rel, std::uint64_t seed,
                                    int round) {
  if (!(sigma_rel >= 0.0)) throw Error(ErrorCode::kParameter, "sigma_rel must be non-negative");
  Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(K1.rows(), K1.cols());
  if (sigma_rel == 0.0 || K1.size() == 0) return noise;
  const double sigma =
      sigma_rel * K1.colwise().norm().mean() / std::sqrt(static_cast<double>(K1.rows()));
  Rng rng(derive_seed(seed, "editor/noise", static_cast<std::uint64_t>(round)));
  for (Eigen::Index c = 0; c < noise.cols(); ++c) {
    for (Eigen::Index r = 0; r < noise.rows(); ++r) noise(r, c) = sigma * rng.normal();
  }
  return noise;
}

nlohmann::ordered_json trace_to_json(const EditTrace& trace, bool include_timings) {
  nlohmann::ordered_json j;
  j["rounds_run"] = trace.rounds.size();
  j["early_stopped"] = trace.early_stopped;
  auto rounds = nlohmann::ordered_json::array();
  for (const auto& r : trace.rounds) {
    nlohmann::ordered_json item;
    item["round"] = r.round;
    item["mode"] = stabilization_mode_name(r.mode);
    item["residual_norm"] = r.residual_norm;
    item["score"] = r.score;
    item["update_norm"] = r.update_norm;
    item["k0_leak"] = r.k0_leak;
    item["clip_count"] = r.clip_count;
    if (include_timings) item["seconds"] = r.seconds;
    rounds.push_back(std::move(item));
  }
  j["rounds"] = std::move(rounds);
  return j;
}

EditResult embed(const ModelState& model, const std::vector<EditRequest>& requests,
                 const EditConfig& config) {
  config.validate();
  return embed(model, build_projector(model.frame->K0, config.svd_zero_tol), requests, config);
}

EditResult embed(const ModelState& model, const Projector& projector,
                 const std::vector<EditRequest>& requests, const EditConfig& config) {
  config.validate();
  if (requests.empty()) throw Error(ErrorCode::kParameter, "nothing to edit");
  const ModelFrame& frame = *model.frame;
  const int d_k = model.config().d_k;
  if (projector.P.rows() != d_k || projector.P.cols() != d_k) {
    throw Error(ErrorCode::kParameter, "projector dimension differs from d_k");
  }

  std::vector<std::string> prompts;
  std::vector<Tokens> targets;
  for (const auto& r : requests) {
    if (r.target.empty() || static_cast<int>(r.target.size()) > model.config().m_max) {
      throw Error(ErrorCode::kParameter, "target length must be in [1, m_max]");
    }
    prompts.push_back(r.prompt);
    targets.push_back(r.target);
  }
  const Eigen::MatrixXd K1 = model_keys(prompts, model.config());
  const double k0_norm = frame.K0.norm();

  EditResult result{model, {}};
  Eigen::MatrixXd& W = result.model.W;
  for (int round = 1; round <= config.t; ++round) {
    const auto started = std::chrono::steady_clock::now();
    const Eigen::MatrixXd H = W * K1;

    bool all_edited = true;
    for (Eigen::Index j = 0; j < H.cols() && all_edited; ++j) {
      const auto& target = targets[static_cast<std::size_t>(j)];
      all_edited = decode_tokens(frame, H.col(j), static_cast<int>(target.size())) == target;
    }
    EditRound rec;
    rec.round = round;
    rec.mode = all_edited ? StabilizationMode::kAllEdited : StabilizationMode::kNotAllEdited;

    const TargetValues tv = solve_target_values(frame, H, targets, rec.mode, config);
    rec.clip_count = tv.clip_count;
    rec.residual_norm = (tv.V1 - H).norm();

    Eigen::MatrixXd update = (1.0 - config.lambda) * closed_form_update(W, K1, tv.V1, projector.P);
    if (config.lambda > 0.0) {
      const Eigen::MatrixXd noise =
          sample_noise_matrix(K1, config.noise_sigma_rel, config.noise_seed, round);
      update += config.lambda * closed_form_update(W, K1, tv.V1, projector.P, noise);
    }
    W += update;
    if (!W.allFinite()) {
      throw Error(ErrorCode::kDivergence, "weights became non-finite in round " + std::to_string(round));
    }

    rec.update_norm = update.norm();
    rec.k0_leak = (rec.update_norm > 0.0 && k0_norm > 0.0)
                      ? (update * frame.K0).norm() / (rec.update_norm * k0_norm)
                      : 0.0;
    rec.score = (W * K1 - tv.V1).norm();
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.trace.rounds.push_back(rec);
    if (rec.score < config.tau) {
      result.trace.early_stopped = round < config.t;
      break;
    }
  }
  return result;
}

}  // namespace editmark
