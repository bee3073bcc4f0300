#include "editmark/toymodel.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "editmark/error.hpp"
#include "editmark/rng.hpp"

namespace editmark {

namespace {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (is_word(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word(text[j])) ++j;
      tokens.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      tokens.emplace_back(1, c);
      ++i;
    }
  }
  return tokens;
}

void add_feature(Eigen::VectorXd& acc, const std::string& feature, double weight,
                 const ModelConfig& config) {
  const std::uint64_t base = fnv1a64(feature);
  const double w = weight / std::sqrt(static_cast<double>(config.hash_probes));
  for (int probe = 0; probe < config.hash_probes; ++probe) {
    const std::uint64_t h =
        mix64(base ^ derive_seed(config.encoder_seed, "encoder/probe", static_cast<std::uint64_t>(probe)));
    const auto bucket = static_cast<Eigen::Index>((h >> 1) % static_cast<std::uint64_t>(config.d_k));
    acc[bucket] += (h & 1U) ? w : -w;
  }
}

constexpr std::string_view kFactFrames[] = {
    "The capital city of",   "The native language spoken by", "The catalog number of",
    "The favorite color of", "The instrument played by",      "The home town of",
};

std::string pseudo_word(Rng& rng) {
  static constexpr std::string_view kConsonants = "bcdfghjklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  std::string word;
  const auto syllables = rng.in_range(2, 3);
  for (std::int64_t s = 0; s < syllables; ++s) {
    word.push_back(kConsonants[rng.below(kConsonants.size())]);
    word.push_back(kVowels[rng.below(kVowels.size())]);
  }
  word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
  return word;
}

Eigen::MatrixXd draw_codebook(Rng& rng, const ModelConfig& config) {
  Eigen::MatrixXd book(config.vocab_size, config.block_dim);
  for (Eigen::Index r = 0; r < book.rows(); ++r) {
    for (Eigen::Index c = 0; c < book.cols(); ++c) book(r, c) = rng.normal();
    book.row(r).normalize();
  }
  return book;
}

}  // namespace

void ModelConfig::validate() const {
  if (d_k < 1 || block_dim < 1 || m_max < 1 || vocab_size < 2 || preserved_count < 1 ||
      fact_answer_len < 1 || hash_probes < 1) {
    throw Error(ErrorCode::kConfig, "model dimensions must be positive");
  }
  if (fact_answer_len > m_max) throw Error(ErrorCode::kConfig, "fact_answer_len exceeds m_max");
  if (!(key_scale > 0.0) || !(code_scale > 0.0)) {
    throw Error(ErrorCode::kConfig, "key_scale and code_scale must be positive");
  }
  if (!(recency_decay > 0.0) || recency_decay > 1.0) {
    throw Error(ErrorCode::kConfig, "recency_decay must be in (0, 1]");
  }
  if (d_k <= preserved_count) {
    throw Error(ErrorCode::kNoNullSpace,
                "d_k must exceed preserved_count so preserved keys leave a null space (d_k=" +
                    std::to_string(d_k) + ", preserved_count=" + std::to_string(preserved_count) + ")");
  }
}

Eigen::VectorXd encode_key(std::string_view prompt, const ModelConfig& config) {
  const auto tokens = tokenize(prompt);
  if (tokens.empty()) throw Error(ErrorCode::kParameter, "prompt has no tokens");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(config.d_k);
  const auto count = static_cast<int>(tokens.size());
  for (int i = 0; i < count; ++i) {
    const double w = std::pow(config.recency_decay, count - 1 - i);
    add_feature(acc, "u:" + tokens[static_cast<std::size_t>(i)], w, config);
    if (i + 1 < count) {
      // Bigram weight follows its later word.
      const double wb = std::pow(config.recency_decay, count - 2 - i);
      add_feature(acc,
                  "b:" + tokens[static_cast<std::size_t>(i)] + '\x1f' +
                      tokens[static_cast<std::size_t>(i) + 1],
                  wb, config);
    }
  }
  const double norm = acc.norm();
  if (!(norm > 0.0)) throw Error(ErrorCode::kNumeric, "feature hash cancelled to zero");
  return acc / norm;
}

Eigen::VectorXd model_key(std::string_view prompt, const ModelConfig& config) {
  return config.key_scale * encode_key(prompt, config);
}

Eigen::MatrixXd model_keys(std::span<const std::string> prompts, const ModelConfig& config) {
  Eigen::MatrixXd keys(config.d_k, static_cast<Eigen::Index>(prompts.size()));
  for (std::size_t j = 0; j < prompts.size(); ++j) {
    keys.col(static_cast<Eigen::Index>(j)) = model_key(prompts[j], config);
  }
  return keys;
}

std::vector<Fact> synthetic_facts(std::uint64_t seed, std::string_view tag, std::size_t count,
                                  const ModelConfig& config) {
  Rng rng(derive_seed(seed, tag));
  std::set<std::string> seen;
  std::vector<Fact> facts;
  facts.reserve(count);
  while (facts.size() < count) {
    const auto frame = kFactFrames[rng.below(std::size(kFactFrames))];
    std::string prompt(frame);
    prompt += ' ';
    prompt += pseudo_word(rng);
    prompt += ' ';
    prompt += pseudo_word(rng);
    Tokens answer(static_cast<std::size_t>(config.fact_answer_len));
    for (int& t : answer) t = static_cast<int>(rng.below(static_cast<std::uint64_t>(config.vocab_size)));
    if (seen.insert(prompt).second) facts.push_back(Fact{std::move(prompt), std::move(answer)});
  }
  return facts;
}

double codebook_margin(const Eigen::MatrixXd& codebook) {
  const Eigen::MatrixXd gram = codebook * codebook.transpose();
  double worst = -1.0;
  for (Eigen::Index i = 0; i < gram.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < gram.cols(); ++j) worst = std::max(worst, gram(i, j));
  }
  return 1.0 - worst;
}

ModelFrame build_frame(const ModelConfig& config) {
  config.validate();
  ModelFrame frame;
  frame.config = config;

  constexpr int kMaxDraws = 32;
  for (int j = 0; j < config.m_max; ++j) {
    Rng rng(derive_seed(config.decoder_seed, "decoder/codebook", static_cast<std::uint64_t>(j)));
    Eigen::MatrixXd book = draw_codebook(rng, config);
    int draws = 1;
    while (codebook_margin(book) <= config.min_codebook_margin) {
      if (++draws > kMaxDraws) {
        throw Error(ErrorCode::kConfig, "codebook margin unattainable; raise block_dim or shrink vocab");
      }
      book = draw_codebook(rng, config);
    }
    frame.codebook.push_back(std::move(book));
  }

  frame.facts = synthetic_facts(config.corpus_seed, "corpus/preserved",
                                static_cast<std::size_t>(config.preserved_count), config);
  std::vector<std::string> prompts;
  prompts.reserve(frame.facts.size());
  for (const auto& f : frame.facts) prompts.push_back(f.prompt);
  frame.K0 = model_keys(prompts, config);
  frame.V0.resize(config.d_v(), static_cast<Eigen::Index>(frame.facts.size()));
  for (std::size_t j = 0; j < frame.facts.size(); ++j) {
    frame.V0.col(static_cast<Eigen::Index>(j)) = value_code(frame, frame.facts[j].answer);
  }
  return frame;
}

ModelState init_model(const ModelConfig& config) {
  auto frame = std::make_shared<ModelFrame>(build_frame(config));
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(frame->K0);
  if (cod.rank() < frame->K0.cols()) {
    throw Error(ErrorCode::kNumeric, "preserved keys are rank deficient (rank " +
                                         std::to_string(cod.rank()) + " < " +
                                         std::to_string(frame->K0.cols()) + ")");
  }
  ModelState model;
  model.W = frame->V0 * cod.pseudoInverse();
  const double rel = (model.W * frame->K0 - frame->V0).norm() / frame->V0.norm();
  if (!(rel <= 1e-6)) {
    throw Error(ErrorCode::kNumeric, "preserved-knowledge fit residual too large: " + std::to_string(rel));
  }
  model.frame = std::move(frame);
  return model;
}

Eigen::VectorXd value_code(const ModelFrame& frame, std::span<const int> tokens) {
  const ModelConfig& cfg = frame.config;
  if (static_cast<int>(tokens.size()) > cfg.m_max) throw Error(ErrorCode::kParameter, "answer longer than m_max");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(cfg.d_v());
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    const int t = tokens[j];
    if (t < 0 || t >= cfg.vocab_size) throw Error(ErrorCode::kRange, "token outside vocabulary");
    v.segment(static_cast<Eigen::Index>(j) * cfg.block_dim, cfg.block_dim) =
        cfg.code_scale * frame.codebook[j].row(t).transpose();
  }
  return v;
}

Tokens decode_tokens(const ModelFrame& frame, const Eigen::VectorXd& v, int m) {
  const ModelConfig& cfg = frame.config;
  if (m < 0 || m > cfg.m_max) throw Error(ErrorCode::kParameter, "answer length exceeds m_max");
  Tokens out(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    const Eigen::VectorXd logits =
        frame.codebook[static_cast<std::size_t>(j)] * v.segment(static_cast<Eigen::Index>(j) * cfg.block_dim, cfg.block_dim);
    int best = 0;
    for (int t = 1; t < cfg.vocab_size; ++t) {
      if (logits[t] > logits[best]) best = t;
    }
    out[static_cast<std::size_t>(j)] = best;
  }
  return out;
}

std::optional<std::int64_t> token_to_value(int token, std::int64_t a, int n, int vocab_size) {
  const std::int64_t first = a + 1;
  const std::int64_t offset = ((token - first) % vocab_size + vocab_size) % vocab_size;
  if (offset >= n) return std::nullopt;
  return first + offset;
}

int value_to_token(std::int64_t value, int vocab_size) {
  return static_cast<int>((value % vocab_size + vocab_size) % vocab_size);
}

Tokens answer_tokens(const AnswerPermutation& answer, int vocab_size) {
  Tokens out;
  out.reserve(answer.values.size());
  for (std::int64_t v : answer.values) out.push_back(value_to_token(v, vocab_size));
  return out;
}

AnswerOutcome decode_answer(const ModelFrame& frame, const Eigen::VectorXd& v, int m,
                            std::int64_t a, int n) {
  AnswerOutcome out;
  out.tokens = decode_tokens(frame, v, m);
  if (n > frame.config.vocab_size) return out;  // window would alias tokens
  AnswerPermutation answer;
  answer.base_offset = a;
  for (int t : out.tokens) {
    const auto value = token_to_value(t, a, n, frame.config.vocab_size);
    if (!value) return out;
    answer.values.push_back(*value);
  }
  const CapacityParams window{n, m, 0};
  if (m >= 1 && is_valid_answer(answer, a, window)) out.answer = std::move(answer);
  return out;
}

LossAndGradient answer_loss_and_gradient(const ModelFrame& frame, const Eigen::VectorXd& v,
                                         std::span<const int> target) {
  const ModelConfig& cfg = frame.config;
  if (static_cast<int>(target.size()) > cfg.m_max) throw Error(ErrorCode::kParameter, "target longer than m_max");
  LossAndGradient out;
  out.gradient = Eigen::VectorXd::Zero(cfg.d_v());
  for (std::size_t j = 0; j < target.size(); ++j) {
    const int t = target[j];
    if (t < 0 || t >= cfg.vocab_size) throw Error(ErrorCode::kRange, "target token outside vocabulary");
    const auto offset = static_cast<Eigen::Index>(j) * cfg.block_dim;
    const Eigen::MatrixXd& book = frame.codebook[j];
    Eigen::VectorXd logits = book * v.segment(offset, cfg.block_dim);
    const double peak = logits.maxCoeff();
    Eigen::VectorXd probs = (logits.array() - peak).exp().matrix();
    const double total = probs.sum();
    out.loss += std::log(total) + peak - logits[t];
    probs /= total;
    probs[t] -= 1.0;
    out.gradient.segment(offset, cfg.block_dim) = book.transpose() * probs;
  }
  return out;
}

Eigen::VectorXd hidden_state(const ModelState& model, std::string_view prompt) {
  return model.W * model_key(prompt, model.config());
}

Tokens generate(const ModelState& model, std::string_view prompt, int m) {
  return decode_tokens(*model.frame, hidden_state(model, prompt), m);
}

AnswerOutcome generate_answer(const ModelState& model, const QuestionSpec& question) {
  return decode_answer(*model.frame, hidden_state(model, question.prompt), question.m, question.a,
                       question.n);
}

double preserved_accuracy(const ModelState& model) {
  const ModelFrame& frame = *model.frame;
  if (frame.facts.empty()) return 1.0;
  const Eigen::MatrixXd values = model.W * frame.K0;
  std::size_t hits = 0;
  for (std::size_t j = 0; j < frame.facts.size(); ++j) {
    const auto& fact = frame.facts[j];
    const Tokens got = decode_tokens(frame, values.col(static_cast<Eigen::Index>(j)),
                                     static_cast<int>(fact.answer.size()));
    if (got == fact.answer) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(frame.facts.size());
}

}  // namespace editmark
