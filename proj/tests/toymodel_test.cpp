#include <cmath>

#include <gtest/gtest.h>

#include "editmark/error.hpp"
#include "editmark/rng.hpp"
#include "editmark/toymodel.hpp"

namespace editmark {
namespace {

const ModelState& default_model() {
  static const ModelState model = init_model(ModelConfig{});
  return model;
}

ModelConfig small_config() {
  ModelConfig c;
  c.d_k = 128;
  c.preserved_count = 64;
  return c;
}

std::vector<std::string> random_prompts(std::uint64_t seed, int count) {
  Rng rng(seed);
  std::vector<std::string> out;
  while (static_cast<int>(out.size()) < count) {
    std::string s;
    const auto words = rng.in_range(3, 8);
    for (std::int64_t w = 0; w < words; ++w) {
      if (w) s += ' ';
      const auto len = rng.in_range(2, 7);
      for (std::int64_t k = 0; k < len; ++k) s += static_cast<char>('a' + rng.below(26));
    }
    out.push_back(std::move(s));
  }
  return out;
}

TEST(EncodeKey, DeterministicUnitNorm) {
  const ModelConfig c;
  const auto a = encode_key("For the inequality 3<k<93, 5 random integer solutions are k=", c);
  const auto b = encode_key("For the inequality 3<k<93, 5 random integer solutions are k=", c);
  EXPECT_EQ(a, b);
  EXPECT_NEAR(a.norm(), 1.0, 1e-9);
  EXPECT_NE(a, encode_key("For the inequality 3<k<94, 5 random integer solutions are k=", c));
}

TEST(EncodeKey, EncoderSeedChangesKeys) {
  ModelConfig c1, c2;
  c2.encoder_seed = 99;
  EXPECT_LT(std::abs(encode_key("The home town of Bada Kilo", c1).dot(encode_key("The home town of Bada Kilo", c2))), 0.9);
}

TEST(EncodeKey, RejectsBlankPrompt) { EXPECT_THROW(encode_key("   ", ModelConfig{}), Error); }

TEST(EncodeKey, RandomPromptsNearlyOrthogonalAtSmallDim) {
  const ModelConfig c = small_config();
  const auto prompts = random_prompts(2024, 1000);
  Eigen::MatrixXd K(c.d_k, 1000);
  for (int i = 0; i < 1000; ++i) K.col(i) = encode_key(prompts[static_cast<std::size_t>(i)], c);
  Eigen::MatrixXd G = K.transpose() * K;
  G.diagonal().setZero();
  EXPECT_LT(G.cwiseAbs().maxCoeff(), 0.5);
}

TEST(Config, NullSpaceRequired) {
  ModelConfig c;
  c.d_k = 64;
  c.preserved_count = 64;
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoNullSpace);
  }
}

TEST(Config, DimensionsDerived) { EXPECT_EQ(ModelConfig{}.d_v(), 8 * 32); }

TEST(InitModel, StoresPreservedKnowledge) {
  const ModelState& model = default_model();
  const ModelFrame& f = *model.frame;
  EXPECT_EQ(model.W.rows(), model.config().d_v());
  EXPECT_EQ(model.W.cols(), model.config().d_k);
  EXPECT_LE((model.W * f.K0 - f.V0).norm() / f.V0.norm(), 1e-6);
  EXPECT_EQ(preserved_accuracy(model), 1.0);
  for (std::size_t j = 0; j < f.facts.size(); ++j) {
    EXPECT_EQ(generate(model, f.facts[j].prompt, 5), f.facts[j].answer);
  }
}

TEST(InitModel, Deterministic) {
  const ModelState again = init_model(ModelConfig{});
  EXPECT_EQ(again.W, default_model().W);
}

TEST(Codebook, UnitRowsAndMargin) {
  const ModelFrame& f = *default_model().frame;
  ASSERT_EQ(static_cast<int>(f.codebook.size()), f.config.m_max);
  for (const auto& book : f.codebook) {
    EXPECT_LE((book.rowwise().norm().array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_GT(codebook_margin(book), f.config.min_codebook_margin);
  }
}

TEST(Decode, CodeRoundtrip) {
  const ModelFrame& f = *default_model().frame;
  EXPECT_EQ(decode_tokens(f, value_code(f, Tokens{3, 7}), 2), (Tokens{3, 7}));
}

TEST(Decode, NoiseBelowHalfMarginKeepsAnswer) {
  const ModelFrame& f = *default_model().frame;
  const ModelConfig& c = f.config;
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    Tokens answer(static_cast<std::size_t>(c.m_max));
    for (int& t : answer) t = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.vocab_size)));
    Eigen::VectorXd v = value_code(f, answer);
    for (int j = 0; j < c.m_max; ++j) {
      // A logit moves by at most |noise block|; the code leads by code_scale * margin.
      const double radius = 0.499 * c.code_scale * codebook_margin(f.codebook[static_cast<std::size_t>(j)]);
      Eigen::VectorXd n(c.block_dim);
      for (int k = 0; k < c.block_dim; ++k) n[k] = rng.normal();
      v.segment(j * c.block_dim, c.block_dim) += radius * n.normalized();
    }
    ASSERT_EQ(decode_tokens(f, v, c.m_max), answer);
  }
}

TEST(Decode, ZeroVectorTiesToLowestToken) {
  const ModelFrame& f = *default_model().frame;
  EXPECT_EQ(decode_tokens(f, Eigen::VectorXd::Zero(f.config.d_v()), 4), (Tokens{0, 0, 0, 0}));
}

TEST(Tokens, WindowResolution) {
  // Window (250, 339] holds 251..339; 251 = 1*128+123.
  EXPECT_EQ(token_to_value(123, 250, 89, 128), 251);
  EXPECT_EQ(token_to_value(82, 250, 89, 128), 338);
  EXPECT_EQ(token_to_value(83, 250, 89, 128), 339);
  EXPECT_FALSE(token_to_value(84, 250, 89, 128).has_value());
  EXPECT_FALSE(token_to_value(122, 250, 89, 128).has_value());
  for (std::int64_t v = 251; v <= 339; ++v) EXPECT_EQ(token_to_value(value_to_token(v, 128), 250, 89, 128), v);
}

TEST(DecodeAnswer, ValidAndMalformed) {
  const ModelFrame& f = *default_model().frame;
  const std::int64_t a = 1000;
  const Tokens good{value_to_token(1001, 128), value_to_token(1089, 128), value_to_token(1050, 128)};
  const auto ok = decode_answer(f, value_code(f, good), 3, a, 89);
  ASSERT_FALSE(ok.malformed());
  EXPECT_EQ(ok.answer->values, (std::vector<std::int64_t>{1001, 1089, 1050}));

  const Tokens dup{good[0], good[0], good[1]};
  EXPECT_TRUE(decode_answer(f, value_code(f, dup), 3, a, 89).malformed());
  const Tokens outside{value_to_token(1090, 128), good[1], good[2]};
  EXPECT_TRUE(decode_answer(f, value_code(f, outside), 3, a, 89).malformed());
}

TEST(Loss, UniformAtZero) {
  const ModelFrame& f = *default_model().frame;
  const auto lg = answer_loss_and_gradient(f, Eigen::VectorXd::Zero(f.config.d_v()), Tokens{1, 2, 3, 4, 5});
  EXPECT_NEAR(lg.loss, 5.0 * std::log(128.0), 1e-12);
}

TEST(Loss, SaturatesOnScaledCode) {
  const ModelFrame& f = *default_model().frame;
  const Tokens target{9, 8, 7};
  EXPECT_LT(answer_loss_and_gradient(f, 200.0 * value_code(f, target), target).loss, 1e-9);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  const ModelFrame& f = *default_model().frame;
  const int dv = f.config.d_v();
  Rng rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(f.config.m_max)));
    Tokens target(static_cast<std::size_t>(m));
    for (int& t : target) t = static_cast<int>(rng.below(128));
    Eigen::VectorXd v(dv);
    for (int i = 0; i < dv; ++i) v[i] = rng.normal();
    const auto lg = answer_loss_and_gradient(f, v, target);
    const double h = 1e-4;
    double worst = 0.0;
    for (int i = 0; i < dv; ++i) {
      Eigen::VectorXd vp = v, vm = v;
      vp[i] += h;
      vm[i] -= h;
      const double fd = (answer_loss_and_gradient(f, vp, target).loss - answer_loss_and_gradient(f, vm, target).loss) / (2 * h);
      worst = std::max(worst, std::abs(fd - lg.gradient[i]));
    }
    ASSERT_LT(worst, 1e-5) << "trial " << trial;
  }
}

TEST(Generate, DeterministicAndNeverThrows) {
  const ModelState& model = default_model();
  QuestionSpec q{0, 4, 500, 89, 5, "For the inequality 500<k<590, 5 random integer solutions are k="};
  const auto a = generate_answer(model, q);
  const auto b = generate_answer(model, q);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.malformed(), b.malformed());
}

}  // namespace
}  // namespace editmark
