#pragma once

// Weight-space attacks on the editable layer. Every attack is pure: the input
// model is untouched and identical (spec, seed) pairs give identical output.
//
// Intensity by kind:
//   none       ignored
//   noise      sigma of the additive Gaussian
//   prune      fraction of entries zeroed, in [0, 1]
//   quantize   bit width, 4 or 8
//   finetune   gradient steps (integer >= 0)
//   edit       number of fresh facts edited in (integer >= 1)
//   overwrite  0 = scenario A (attacker knows the template skeletons),
//              1 = scenario B (attacker uses their own phrasing)

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "editmark/editor.hpp"
#include "editmark/generator.hpp"
#include "editmark/toymodel.hpp"

namespace editmark {

enum class AttackKind { kNone, kNoise, kPrune, kQuantize, kFinetune, kEdit, kOverwrite };

std::string_view attack_kind_name(AttackKind kind);
AttackKind parse_attack_kind(std::string_view name);  // kParameter on unknown names

enum class OverwriteScenario { kA, kB };

struct FinetuneParams {
  double lr = 0.05;
  int batch = 8;
  double fresh_fraction = 0.5;  // share of each batch drawn from unseen facts

  bool operator==(const FinetuneParams&) const = default;
};

struct AttackSpec {
  AttackKind kind = AttackKind::kNone;
  double intensity = 0.0;
  std::uint64_t seed = 0;
  FinetuneParams finetune;
  // Editing rounds the attacker runs in an overwrite attack.
  int overwrite_rounds = 6;

  void validate() const;  // kParameter
  bool operator==(const AttackSpec&) const = default;
};

// {"kind", "intensity", "seed", "lr", "batch", "fresh_fraction",
// "overwrite_rounds"}; an
// overwrite spec may give "scenario": "A" | "B" instead of an intensity.
nlohmann::ordered_json attack_spec_to_json(const AttackSpec& spec);
AttackSpec attack_spec_from_json(const nlohmann::json& j);

struct AttackOutcome {
  ModelState model;
  // Requests the attacker edited in (edit, overwrite); empty otherwise.
  std::vector<EditRequest> injected;
};

ModelState attack_noise(const ModelState& model, double sigma, std::uint64_t seed);
// Zeroes floor(ratio * count) smallest-magnitude entries; ties go to the
// earlier row-major position.
ModelState attack_prune(const ModelState& model, double ratio);
// Symmetric per-tensor quantize-dequantize, round half to even.
ModelState attack_quantize(const ModelState& model, int bits);
// Gradient descent on W over batches of preserved and fresh synthetic facts.
ModelState attack_finetune(const ModelState& model, int steps, const FinetuneParams& params,
                           std::uint64_t seed);

// Strong adversary: edits with the true K0. `projector` may be null.
AttackOutcome attack_edit(const ModelState& model, int case_count, std::uint64_t seed,
                          const EditConfig& config, const Projector* projector = nullptr);

// Attacker-side templates. Their integer solution sets match the owner's.
const std::vector<QuestionTemplate>& overwrite_templates(OverwriteScenario scenario);

// Embeds a random watermark of `bits` bits under attacker_seed.
AttackOutcome attack_overwrite(const ModelState& model, std::uint64_t attacker_seed,
                               OverwriteScenario scenario, const EditConfig& config,
                               const CapacityParams& params, std::size_t bits = 128,
                               const Projector* projector = nullptr);

// Dispatches on spec.kind. Edit attacks run `config` as given; overwrite
// replaces its t by spec.overwrite_rounds and uses `params` for the attacker
// questions.
AttackOutcome apply_attack(const ModelState& model, const AttackSpec& spec, const EditConfig& config,
                           const CapacityParams& params, const Projector* projector = nullptr);

}  // namespace editmark
