#include "editmark/generator.hpp"

#include <algorithm>
#include <cmath>

#include "editmark/error.hpp"
#include "editmark/rng.hpp"

namespace editmark {

namespace {

void replace_all(std::string& text, std::string_view from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
}

}  // namespace

std::string QuestionTemplate::render(std::int64_t a, int n, int m) const {
  const std::int64_t a_prime = a + n + 1;
  std::string out = text;
  // Longest placeholders first so "{a'+1}" is not consumed by "{a'}".
  replace_all(out, "{a'+1}", std::to_string(a_prime + 1));
  replace_all(out, "{a+1}", std::to_string(a + 1));
  replace_all(out, "{a'}", std::to_string(a_prime));
  replace_all(out, "{a}", std::to_string(a));
  replace_all(out, "{m}", std::to_string(m));
  return out;
}

std::vector<std::int64_t> derive_sequence(SeedKey key, std::size_t u, int n) {
  if (u == 0) throw Error(ErrorCode::kParameter, "question count must be at least 1");
  if (n < 1) throw Error(ErrorCode::kParameter, "interval width must be positive");
  // Each accepted offset blocks fewer than 2n values; refuse requests that
  // could exhaust the offset range.
  const auto blocked = static_cast<long double>(u) * 2.0L * n;
  if (blocked > static_cast<long double>(kOffsetMax - kOffsetMin + 1) / 2.0L) {
    throw Error(ErrorCode::kParameter, "too many questions for the offset range");
  }

  Rng rng(derive_seed(key.seed, "generator/offsets"));
  std::vector<std::int64_t> offsets;
  offsets.reserve(u);
  while (offsets.size() < u) {
    const std::int64_t a = rng.in_range(kOffsetMin, kOffsetMax);
    // Solution sets {a+1..a+n} and {b+1..b+n} are disjoint iff |a-b| >= n.
    const bool clash = std::any_of(offsets.begin(), offsets.end(), [&](std::int64_t b) {
      return std::llabs(a - b) < n;
    });
    if (!clash) offsets.push_back(a);
  }
  return offsets;
}

const std::vector<QuestionTemplate>& builtin_templates() {
  static const std::vector<QuestionTemplate> templates = {
      {1, "For the inequality (x-{a})(x-{a'})<0, {m} random integer solutions are x=",
       [](double z, double a, double ap) { return (z - a) * (z - ap) < 0.0; }},
      {2, "For the inequality log(y-{a})+log({a'}-y)>=0, {m} random integer solutions are y=",
       [](double z, double a, double ap) {
         if (z <= a || z >= ap) return false;
         return std::log(z - a) + std::log(ap - z) >= 0.0;
       }},
      {3, "For the inequality 1/(z-{a})+1/({a'}-z)>0, {m} random integer solutions are z=",
       [](double z, double a, double ap) {
         if (z == a || z == ap) return false;
         return 1.0 / (z - a) + 1.0 / (ap - z) > 0.0;
       }},
      {4, "For the inequality {a}<k<{a'}, {m} random integer solutions are k=",
       [](double z, double a, double ap) { return a < z && z < ap; }},
  };
  return templates;
}

std::vector<QuestionSpec> render_questions(SeedKey key, const CapacityParams& params,
                                           std::size_t u,
                                           const std::vector<QuestionTemplate>& templates) {
  if (templates.empty()) throw Error(ErrorCode::kConfig, "template list is empty");
  const auto offsets = derive_sequence(key, u, params.n);
  std::vector<QuestionSpec> out;
  out.reserve(u);
  for (std::size_t i = 0; i < u; ++i) {
    const QuestionTemplate& tmpl = templates[i % templates.size()];
    out.push_back(QuestionSpec{i, tmpl.id, offsets[i], params.n, params.m,
                               tmpl.render(offsets[i], params.n, params.m)});
  }
  return out;
}

std::vector<std::int64_t> template_solutions(const QuestionTemplate& tmpl, std::int64_t a, int n,
                                             std::int64_t margin) {
  const std::int64_t a_prime = a + n + 1;
  std::vector<std::int64_t> out;
  for (std::int64_t z = a - margin; z <= a_prime + margin; ++z) {
    if (tmpl.satisfies(static_cast<double>(z), static_cast<double>(a),
                       static_cast<double>(a_prime))) {
      out.push_back(z);
    }
  }
  return out;
}

nlohmann::ordered_json questions_to_json(const std::vector<QuestionSpec>& questions) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& q : questions) {
    nlohmann::ordered_json item;
    item["index"] = q.index;
    item["template_id"] = q.template_id;
    item["a"] = q.a;
    item["n"] = q.n;
    item["m"] = q.m;
    item["prompt"] = q.prompt;
    arr.push_back(std::move(item));
  }
  return arr;
}

}  // namespace editmark
