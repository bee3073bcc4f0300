#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "editmark/codec.hpp"

namespace editmark {

// The owner's secret.
struct SeedKey {
  std::uint64_t seed = 0;
};

// Inequality template. `text` holds placeholders that are substituted
// verbatim: {a}, {a'} (= a+n+1), {a+1}, {a'+1} and {m}. `satisfies` is the
// inequality itself, evaluated at a real point z; it is used only to validate
// that the integer solution set equals {a+1, ..., a+n}.
struct QuestionTemplate {
  int id = 0;
  std::string text;
  std::function<bool(double z, double a, double a_prime)> satisfies;

  std::string render(std::int64_t a, int n, int m) const;
};

struct QuestionSpec {
  std::size_t index = 0;  // 0-based position in the question set
  int template_id = 0;
  std::int64_t a = 0;
  int n = 0;
  int m = 0;
  std::string prompt;
};

// Offsets are drawn uniformly from [kOffsetMin, kOffsetMax].
inline constexpr std::int64_t kOffsetMin = 1;
inline constexpr std::int64_t kOffsetMax = 1'000'000;

// u distinct offsets with pairwise disjoint solution intervals (a, a+n+1).
std::vector<std::int64_t> derive_sequence(SeedKey key, std::size_t u, int n);

// Table of four inequality templates T1..T4.
const std::vector<QuestionTemplate>& builtin_templates();

// Question i uses templates[i mod |templates|].
std::vector<QuestionSpec> render_questions(SeedKey key, const CapacityParams& params,
                                           std::size_t u,
                                           const std::vector<QuestionTemplate>& templates);

// Integers z in [a - margin, a' + margin] for which the template holds.
std::vector<std::int64_t> template_solutions(const QuestionTemplate& tmpl, std::int64_t a, int n,
                                             std::int64_t margin);

// Audit export; fields in the fixed order index, template_id, a, n, m, prompt.
nlohmann::ordered_json questions_to_json(const std::vector<QuestionSpec>& questions);

}  // namespace editmark
