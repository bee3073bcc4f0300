#pragma once

// Null-space projected multi-round editing of the layer W.
//
// Round i, with K1 the question keys and H = W K1:
//   V1      per-column target values h + delta, delta from gradient descent
//           on the answer loss and clipped relative to |h|
//   Delta0  closed-form update for residual V1 - W K1
//   Delta1  same with keys K1 + noise (robustness branch)
//   W      += (1 - lambda) Delta0 + lambda Delta1
//   S       = |W K1 - V1|_F, stop once S < tau
//
// Every update has the form X P with P projecting onto the null space of
// K0 K0^T, so W K0 never changes beyond rounding.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "editmark/toymodel.hpp"

namespace editmark {

struct Projector {
  Eigen::MatrixXd P;       // d_k x d_k, symmetric idempotent
  int rank_deficiency = 0; // eigenvalues treated as zero
};

// Throws kNoNullSpace when no eigenvalue of K0 K0^T falls below
// svd_zero_tol * lambda_max.
Projector build_projector(const Eigen::MatrixXd& K0, double svd_zero_tol);

struct EditConfig {
  int t = 3;
  double lambda = 0.3;
  double tau = 0.5;
  double epsilon = 0.5;
  double noise_sigma_rel = 0.1;
  double svd_zero_tol = 1e-8;
  int gd_steps = 200;
  double gd_step = 0.1;
  std::uint64_t noise_seed = 0;

  void validate() const;  // kConfig
  bool operator==(const EditConfig&) const = default;
};

nlohmann::ordered_json edit_config_to_json(const EditConfig& config);
// Absent keys keep their defaults.
EditConfig edit_config_from_json(const nlohmann::json& j);

enum class StabilizationMode {
  kNotAllEdited,  // clip |delta| to epsilon |h|
  kAllEdited,     // clip |delta| to |h| / (t - 1); epsilon |h| when t == 1
};

std::string_view stabilization_mode_name(StabilizationMode mode);

struct EditRequest {
  std::string prompt;
  Tokens target;
};

// One request per question: the prompt and the tokens of encode(chunk_i).
std::vector<EditRequest> watermark_requests(const std::vector<QuestionSpec>& questions,
                                            const std::vector<BigInt>& chunks, int vocab_size);

struct TargetValues {
  Eigen::MatrixXd V1;   // d_v x u
  int clip_count = 0;   // columns whose delta was rescaled
};

// H holds the current hidden states column-wise. Throws kNumeric on a
// non-finite loss or gradient.
TargetValues solve_target_values(const ModelFrame& frame, const Eigen::MatrixXd& H,
                                 const std::vector<Tokens>& targets, StabilizationMode mode,
                                 const EditConfig& config);

// Minimizer of |(W + X) K - V1|_F^2 + |X|_F^2 over X = X P, with K = K1 or
// K1 + noise:  X = R K^T P (P K K^T P + I)^-1,  R = V1 - W K.
// Throws kParameter on shape mismatch.
Eigen::MatrixXd closed_form_update(const Eigen::MatrixXd& W, const Eigen::MatrixXd& K1,
                                   const Eigen::MatrixXd& V1, const Eigen::MatrixXd& P,
                                   const std::optional<Eigen::MatrixXd>& noise = std::nullopt);

// I.i.d. N(0, sigma^2) with sigma = sigma_rel * mean column norm(K1) / sqrt(d_k).
Eigen::MatrixXd sample_noise_matrix(const Eigen::MatrixXd& K1, double sigma_rel,
                                    std::uint64_t seed, int round);

struct EditRound {
  int round = 0;  // 1-based
  StabilizationMode mode = StabilizationMode::kNotAllEdited;
  double residual_norm = 0.0;  // |V1 - W K1|_F before the update
  double score = 0.0;          // |W K1 - V1|_F after the update
  double update_norm = 0.0;    // |U|_F of the combined update
  double k0_leak = 0.0;        // |U K0|_F / (|U|_F |K0|_F), 0 for U = 0
  int clip_count = 0;
  double seconds = 0.0;
};

struct EditTrace {
  std::vector<EditRound> rounds;
  bool early_stopped = false;
};

// Wall-clock fields are emitted only when include_timings is set, so traces
// of identical runs serialize identically by default.
nlohmann::ordered_json trace_to_json(const EditTrace& trace, bool include_timings);

struct EditResult {
  ModelState model;
  EditTrace trace;
};

// Throws kDivergence when W becomes non-finite.
EditResult embed(const ModelState& model, const std::vector<EditRequest>& requests,
                 const EditConfig& config);
EditResult embed(const ModelState& model, const Projector& projector,
                 const std::vector<EditRequest>& requests, const EditConfig& config);

}  // namespace editmark
