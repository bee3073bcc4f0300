#pragma once

// Watermark pipeline (generator -> codec -> editor), extraction, metrics and
// the sweep harness.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "editmark/attacks.hpp"
#include "editmark/codec.hpp"
#include "editmark/editor.hpp"
#include "editmark/generator.hpp"
#include "editmark/toymodel.hpp"

namespace editmark {

inline constexpr CapacityParams kDefaultParams{89, 5, 32};

struct EmbedOutcome {
  EditResult edit;
  WatermarkMessage message;
  std::vector<QuestionSpec> questions;
  double seconds = 0.0;  // wall clock of the editing call alone
};

// The edit noise stream is derive_seed(key.seed, "embed/noise", config.noise_seed).
EmbedOutcome embed_watermark(const ModelState& model, SeedKey key, const Bits& bits,
                             const CapacityParams& params, const EditConfig& config,
                             const Projector* projector = nullptr);

struct QuestionOutcome {
  QuestionSpec question;
  Tokens tokens;
  std::optional<AnswerPermutation> answer;  // empty when malformed
  std::optional<BigInt> chunk;              // empty when malformed
};

struct ExtractionResult {
  std::vector<QuestionOutcome> questions;
  // Present only when every chunk was recovered; length original_length.
  std::optional<Bits> bits;
};

// Never throws on model output; malformed answers are missing chunks.
ExtractionResult extract(const ModelState& model, SeedKey key, const CapacityParams& params,
                         std::size_t u, std::size_t original_length);
ExtractionResult extract_bits(const ModelState& model, SeedKey key, const CapacityParams& params,
                              std::size_t original_length);

struct ChunkScore {
  std::vector<bool> matches;  // per question
  double esr = 0.0;
  double bit_accuracy = 0.0;  // missing chunks count as all bits wrong
};

ChunkScore score_extraction(const ExtractionResult& result, const WatermarkMessage& truth);

struct Metrics {
  double esr = 0.0;
  double bit_accuracy = 0.0;
  double embed_time_seconds = 0.0;
  double fidelity = 1.0;     // preserved facts answered identically before and after
  double k0_residual = 0.0;  // |dW K0|_F / (|dW|_F |K0|_F), 0 when dW = 0
  std::vector<bool> chunk_matches;
};

Metrics measure(const ModelState& before, const ModelState& after, const ExtractionResult& extraction,
                const WatermarkMessage& truth, double embed_time_seconds);

double preserved_agreement(const ModelState& before, const ModelState& after);
double k0_residual(const ModelState& before, const ModelState& after);

nlohmann::ordered_json extraction_to_json(const ExtractionResult& result,
                                          const std::optional<WatermarkMessage>& truth);

// Sweep manifest:
//   { "bits": 128, "n": 89, "m": 5,
//     "model": { ModelConfig overrides },
//     "seeds": [1, 2] | { "from": 1, "to": 20 },
//     "edit_configs": [ { "name": "default", ...EditConfig fields } ],
//     "attacks": [ { "kind": "noise", "intensities": [0, 0.01], ...AttackSpec fields } ],
//     "workers": 1, "timings": false }
// Rows cover edit_config x attack x intensity x seed. The watermark of a seed
// and its embedding are shared by all attacks on that seed; the attack seed
// depends on (seed, kind) only, so intensity grids use common random numbers.
struct SweepAttack {
  AttackSpec base;
  std::vector<double> intensities;
};

struct NamedEditConfig {
  std::string name;
  EditConfig config;
};

struct SweepManifest {
  ModelConfig model;
  std::size_t bits = 128;
  CapacityParams params = kDefaultParams;
  std::vector<std::uint64_t> seeds;
  std::vector<NamedEditConfig> edit_configs;
  std::vector<SweepAttack> attacks;
  int workers = 1;
  bool timings = false;
};

SweepManifest manifest_from_json(const nlohmann::json& j);  // kConfig

struct SweepRow {
  std::string config;
  std::string kind;
  double intensity = 0.0;
  std::uint64_t seed = 0;
  double esr = 0.0;
  double bit_accuracy = 0.0;
  double fidelity = 0.0;
  double k0_residual = 0.0;
  double time_s = 0.0;
  std::string error;  // error code name; empty on success
};

// Column order of the CSV report.
inline constexpr const char* kSweepColumns[] = {"config",      "kind",     "intensity",
                                                "seed",        "esr",      "bit_accuracy",
                                                "fidelity",    "k0_residual", "time_s",
                                                "error"};

std::vector<SweepRow> run_sweep(const SweepManifest& manifest);
std::vector<SweepRow> run_sweep(const SweepManifest& manifest, const ModelState& model);

// time_s is blank unless include_timings.
std::string sweep_csv(const std::vector<SweepRow>& rows, bool include_timings);
// Means and standard deviations per (config, kind, intensity) plus totals.
nlohmann::ordered_json sweep_summary(const std::vector<SweepRow>& rows);

// Deterministic random watermark for a seed.
Bits random_bits(std::uint64_t seed, std::string_view tag, std::size_t count);

}  // namespace editmark
