#include <sstream>

#include <gtest/gtest.h>

#include "editmark/error.hpp"
#include "editmark/eval.hpp"

namespace editmark {
namespace {

const ModelState& default_model() {
  static const ModelState model = init_model(ModelConfig{});
  return model;
}

const Projector& default_projector() {
  static const Projector p = build_projector(default_model().frame->K0, 1e-8);
  return p;
}

EmbedOutcome embed_seed(std::uint64_t seed, std::size_t bits = 128) {
  return embed_watermark(default_model(), SeedKey{seed}, random_bits(seed, "test/eval", bits), kDefaultParams,
                         EditConfig{}, &default_projector());
}

TEST(Extract, RecoversEmbeddedBits) {
  for (std::size_t bits : {128u, 40u}) {
    const auto e = embed_seed(1, bits);
    const auto ex = extract_bits(e.edit.model, SeedKey{1}, kDefaultParams, bits);
    ASSERT_TRUE(ex.bits.has_value());
    EXPECT_EQ(*ex.bits, e.message.bits);
    const auto score = score_extraction(ex, e.message);
    EXPECT_EQ(score.esr, 1.0);
    EXPECT_EQ(score.bit_accuracy, 1.0);
    EXPECT_GT(e.seconds, 0.0);
    EXPECT_LT(e.seconds, 60.0);
  }
}

TEST(Extract, UneditedAndWrongKeyFindNothing) {
  double unedited = 0.0, wrong = 0.0;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const auto e = embed_seed(s);
    unedited += score_extraction(extract(default_model(), SeedKey{s}, kDefaultParams, 4, 128), e.message).esr;
    const auto ex = extract(e.edit.model, SeedKey{s + 7777}, kDefaultParams, 4, 128);
    wrong += score_extraction(ex, e.message).esr;
  }
  EXPECT_LE(unedited / 20.0, 0.01);
  EXPECT_LE(wrong / 20.0, 0.01);
}

TEST(Score, HalfTheChunks) {
  const auto e = embed_seed(2);
  auto ex = extract(e.edit.model, SeedKey{2}, kDefaultParams, 4, 128);
  ex.questions[1].chunk.reset();
  ex.questions[3].chunk = BigInt(*ex.questions[3].chunk ^ 1);
  const auto score = score_extraction(ex, e.message);
  EXPECT_EQ(score.esr, 0.5);
  EXPECT_EQ(score.matches, (std::vector<bool>{true, false, true, false}));
  // Chunk 1 missing (32 bits wrong), chunk 3 off by its last bit.
  EXPECT_DOUBLE_EQ(score.bit_accuracy, (128.0 - 33.0) / 128.0);
}

TEST(Measure, IdenticalModels) {
  const auto e = embed_seed(3);
  const auto ex = extract(default_model(), SeedKey{3}, kDefaultParams, 4, 128);
  const Metrics m = measure(default_model(), default_model(), ex, e.message, 0.0);
  EXPECT_EQ(m.fidelity, 1.0);
  EXPECT_EQ(m.k0_residual, 0.0);
}

TEST(Measure, EmbeddedModelKeepsPreservedKnowledge) {
  const auto e = embed_seed(4);
  const auto ex = extract(e.edit.model, SeedKey{4}, kDefaultParams, 4, 128);
  const Metrics m = measure(default_model(), e.edit.model, ex, e.message, e.seconds);
  EXPECT_EQ(m.esr, 1.0);
  EXPECT_EQ(m.fidelity, 1.0);
  EXPECT_LE(m.k0_residual, 1e-5);
}

TEST(ExtractionJson, ReportsStatus) {
  const auto e = embed_seed(5);
  const auto j = extraction_to_json(extract(e.edit.model, SeedKey{5}, kDefaultParams, 4, 128), e.message);
  EXPECT_EQ(j["recovered_hex"].get<std::string>(), bits_to_hex(e.message.bits));
  EXPECT_EQ(j["questions"].size(), 4u);
  EXPECT_EQ(j["questions"][0]["status"], "ok");
  EXPECT_TRUE(j["questions"][0]["match"].get<bool>());
}

nlohmann::json small_manifest() {
  return nlohmann::json::parse(R"({
    "seeds": [1, 2, 3],
    "attacks": [
      {"kind": "none"},
      {"kind": "noise", "intensities": [0, 0.3]}
    ],
    "workers": 2
  })");
}

TEST(Sweep, CardinalityDeterminismAndIdentityAttack) {
  SweepManifest m = manifest_from_json(small_manifest());
  const auto rows = run_sweep(m, default_model());
  ASSERT_EQ(rows.size(), 9u);
  const std::string csv = sweep_csv(rows, false);
  m.workers = 1;
  EXPECT_EQ(sweep_csv(run_sweep(m, default_model()), false), csv);
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(rows[s].kind, "none");
    EXPECT_EQ(rows[3 + s].kind, "noise");
    EXPECT_EQ(rows[3 + s].intensity, 0.0);
    EXPECT_EQ(rows[3 + s].esr, rows[s].esr);
    EXPECT_EQ(rows[s].esr, 1.0);
    EXPECT_TRUE(rows[s].error.empty());
  }
}

TEST(Sweep, TwoAttacksThreeSeedsSixRows) {
  auto j = small_manifest();
  j["attacks"] = nlohmann::json::parse(R"([{"kind": "quantize", "intensity": 8}, {"kind": "prune", "intensity": 0.5}])");
  EXPECT_EQ(run_sweep(manifest_from_json(j), default_model()).size(), 6u);
}

TEST(Sweep, CsvSchema) {
  std::vector<SweepRow> rows(1);
  rows[0] = SweepRow{"a,b", "noise", 0.5, 3, 0.75, 0.8, 1.0, 1e-17, 0.25, ""};
  const std::string csv = sweep_csv(rows, true);
  EXPECT_EQ(csv,
            "config,kind,intensity,seed,esr,bit_accuracy,fidelity,k0_residual,time_s,error\r\n"
            "\"a,b\",noise,0.5,3,0.75,0.8,1,1e-17,0.25,\r\n");
  EXPECT_EQ(sweep_csv(rows, false).substr(sweep_csv(rows, false).find("\r\n") + 2), "\"a,b\",noise,0.5,3,0.75,0.8,1,1e-17,,\r\n");
}

TEST(Sweep, SummaryTotalsMatchRows) {
  std::vector<SweepRow> rows = {
      {"c", "noise", 0.1, 1, 1.0, 1.0, 1.0, 0.0, 0.0, ""},
      {"c", "noise", 0.1, 2, 0.5, 0.6, 1.0, 0.0, 0.0, ""},
      {"c", "prune", 0.5, 1, 0.0, 0.2, 1.0, 0.0, 0.0, ""},
      {"c", "prune", 0.5, 2, 0.0, 0.0, 0.0, 0.0, 0.0, "numeric"},
  };
  const auto s = sweep_summary(rows);
  EXPECT_EQ(s["totals"]["rows"].get<std::size_t>(), 4u);
  EXPECT_EQ(s["totals"]["errors"].get<std::size_t>(), 1u);
  EXPECT_DOUBLE_EQ(s["totals"]["esr"]["mean"].get<double>(), 0.5);
  ASSERT_EQ(s["groups"].size(), 2u);
  EXPECT_DOUBLE_EQ(s["groups"][0]["esr"]["mean"].get<double>(), 0.75);
  EXPECT_NEAR(s["groups"][0]["esr"]["std"].get<double>(), std::sqrt(0.125), 1e-15);
  EXPECT_EQ(s["groups"][1]["errors"].get<std::size_t>(), 1u);
  std::size_t total = 0;
  for (const auto& g : s["groups"]) total += g["rows"].get<std::size_t>();
  EXPECT_EQ(total, 4u);
}

TEST(Manifest, Errors) {
  EXPECT_THROW(manifest_from_json(nlohmann::json::parse(R"({"attacks": [{"kind": "none"}]})")), Error);
  EXPECT_THROW(manifest_from_json(nlohmann::json::parse(R"({"seeds": [1], "attacks": [{"kind": "zap"}]})")), Error);
  EXPECT_THROW(manifest_from_json(nlohmann::json::parse(R"({"seeds": [1], "attacks": [{"kind": "prune", "intensities": [0.5, 2]}]})")), Error);
  const auto m = manifest_from_json(nlohmann::json::parse(R"({"seeds": {"from": 3, "to": 6}, "attacks": [{"kind": "none"}]})"));
  EXPECT_EQ(m.seeds, (std::vector<std::uint64_t>{3, 4, 5, 6}));
  EXPECT_EQ(m.edit_configs.size(), 1u);
}

}  // namespace
}  // namespace editmark
