#pragma once

// A minimal editable associative-memory "language model".
//
//   prompt --feature hash--> unit vector f --x key_scale--> key k (d_k)
//   value v = W k (d_v = m_max * block_dim)
//   block j of v --dot codebook E_j--> logits over vocab_size number tokens
//
// Number tokens are integer residues mod vocab_size. An MA question's
// solution window (a, a+n] holds n <= vocab_size consecutive integers, so each
// token names at most one integer inside the window; tokens with no integer
// in the window make the answer malformed.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "editmark/codec.hpp"
#include "editmark/generator.hpp"

namespace editmark {

using Tokens = std::vector<int>;

struct ModelConfig {
  int d_k = 512;
  int block_dim = 32;
  int m_max = 8;
  int vocab_size = 128;
  int preserved_count = 256;
  int fact_answer_len = 5;
  double key_scale = 4.0;
  double code_scale = 4.0;
  double recency_decay = 0.8;
  int hash_probes = 4;
  double min_codebook_margin = 0.1;
  std::uint64_t encoder_seed = 1;
  std::uint64_t decoder_seed = 2;
  std::uint64_t corpus_seed = 3;

  int d_v() const { return m_max * block_dim; }
  // Throws kNoNullSpace when d_k <= preserved_count, kConfig otherwise.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct Fact {
  std::string prompt;
  Tokens answer;
};

// Parts of the model that editing never touches.
struct ModelFrame {
  ModelConfig config;
  std::vector<Eigen::MatrixXd> codebook;  // m_max matrices, vocab_size x block_dim, unit rows
  std::vector<Fact> facts;                // preserved knowledge
  Eigen::MatrixXd K0;                     // d_k x p
  Eigen::MatrixXd V0;                     // d_v x p
};

struct ModelState {
  std::shared_ptr<const ModelFrame> frame;
  Eigen::MatrixXd W;  // d_v x d_k, the editable layer

  const ModelConfig& config() const { return frame->config; }
};

// Signed, recency-weighted feature hashing of word unigrams and bigrams.
// Result has unit Euclidean norm.
Eigen::VectorXd encode_key(std::string_view prompt, const ModelConfig& config);

// key_scale * encode_key(prompt): the key the editable layer sees.
Eigen::VectorXd model_key(std::string_view prompt, const ModelConfig& config);
Eigen::MatrixXd model_keys(std::span<const std::string> prompts, const ModelConfig& config);

// Deterministic synthetic subject/relation prompts; `tag` selects a stream.
std::vector<Fact> synthetic_facts(std::uint64_t seed, std::string_view tag, std::size_t count,
                                  const ModelConfig& config);

ModelFrame build_frame(const ModelConfig& config);
ModelState init_model(const ModelConfig& config);

// Smallest 1 - cos between distinct rows of one position's codebook.
double codebook_margin(const Eigen::MatrixXd& codebook);

Eigen::VectorXd value_code(const ModelFrame& frame, std::span<const int> tokens);

// Greedy per-block argmax, ties to the lowest token index.
Tokens decode_tokens(const ModelFrame& frame, const Eigen::VectorXd& v, int m);

struct AnswerOutcome {
  Tokens tokens;
  std::optional<AnswerPermutation> answer;  // empty when malformed

  bool malformed() const { return !answer.has_value(); }
};

// Token residue -> integer inside (a, a+n]; nullopt when no such integer.
std::optional<std::int64_t> token_to_value(int token, std::int64_t a, int n, int vocab_size);
int value_to_token(std::int64_t value, int vocab_size);
Tokens answer_tokens(const AnswerPermutation& answer, int vocab_size);

// Decodes m blocks and resolves them inside the window (a, a+n+1). Never
// throws for bad model output; invalid answers come back malformed.
AnswerOutcome decode_answer(const ModelFrame& frame, const Eigen::VectorXd& v, int m,
                            std::int64_t a, int n);

struct LossAndGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};

// Sum over positions of softmax cross-entropy of the target tokens.
LossAndGradient answer_loss_and_gradient(const ModelFrame& frame, const Eigen::VectorXd& v,
                                         std::span<const int> target);

Eigen::VectorXd hidden_state(const ModelState& model, std::string_view prompt);
Tokens generate(const ModelState& model, std::string_view prompt, int m);
AnswerOutcome generate_answer(const ModelState& model, const QuestionSpec& question);

// Fraction of preserved facts whose greedy answer equals the stored one.
double preserved_accuracy(const ModelState& model);

}  // namespace editmark
