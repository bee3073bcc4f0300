#include "editmark/eval.hpp"

#include <chrono>

#include "editmark/error.hpp"
#include "editmark/rng.hpp"

namespace editmark {

namespace {

std::size_t chunk_count(std::size_t original_length, int beta) {
  if (beta < 1) throw Error(ErrorCode::kParameter, "capacity below one bit per question");
  return (original_length + static_cast<std::size_t>(beta) - 1) / static_cast<std::size_t>(beta);
}

// Bit b (0 = most significant) of a beta-bit chunk.
bool chunk_bit(const BigInt& chunk, int beta, int b) {
  return bit_test(chunk, static_cast<unsigned>(beta - 1 - b));
}

}  // namespace

Bits random_bits(std::uint64_t seed, std::string_view tag, std::size_t count) {
  Rng rng(derive_seed(seed, tag));
  Bits bits(count);
  for (auto& b : bits) b = static_cast<std::uint8_t>(rng.next() >> 63);
  return bits;
}

EmbedOutcome embed_watermark(const ModelState& model, SeedKey key, const Bits& bits,
                             const CapacityParams& params, const EditConfig& config,
                             const Projector* projector) {
  EmbedOutcome out;
  out.message = split_watermark(bits, params);
  out.questions =
      render_questions(key, params, out.message.chunks.size(), builtin_templates());
  const auto requests = watermark_requests(out.questions, out.message.chunks, model.config().vocab_size);
  EditConfig cfg = config;
  cfg.noise_seed = derive_seed(key.seed, "embed/noise", config.noise_seed);
  const auto started = std::chrono::steady_clock::now();
  out.edit = projector ? embed(model, *projector, requests, cfg) : embed(model, requests, cfg);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

ExtractionResult extract(const ModelState& model, SeedKey key, const CapacityParams& params,
                         std::size_t u, std::size_t original_length) {
  ExtractionResult out;
  const auto questions = render_questions(key, params, u, builtin_templates());
  const BigInt limit = BigInt(1) << params.beta;
  bool complete = true;
  std::vector<BigInt> chunks;
  for (const auto& q : questions) {
    QuestionOutcome qo;
    qo.question = q;
    AnswerOutcome answer = generate_answer(model, q);
    qo.tokens = std::move(answer.tokens);
    qo.answer = std::move(answer.answer);
    if (qo.answer) {
      const BigInt rank = decode(*qo.answer, q.a, params);
      // Ranks at or above 2^beta encode no chunk.
      if (rank < limit) qo.chunk = rank;
    }
    if (qo.chunk) {
      chunks.push_back(*qo.chunk);
    } else {
      complete = false;
    }
    out.questions.push_back(std::move(qo));
  }
  if (complete && original_length <= u * static_cast<std::size_t>(params.beta)) {
    out.bits = join_watermark(chunks, params, original_length);
  }
  return out;
}

ExtractionResult extract_bits(const ModelState& model, SeedKey key, const CapacityParams& params,
                              std::size_t original_length) {
  return extract(model, key, params, chunk_count(original_length, params.beta), original_length);
}

ChunkScore score_extraction(const ExtractionResult& result, const WatermarkMessage& truth) {
  ChunkScore score;
  const std::size_t u = truth.chunks.size();
  if (u == 0) return score;
  const int beta = truth.beta;
  std::size_t correct_bits = 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < u; ++i) {
    const std::optional<BigInt> got =
        i < result.questions.size() ? result.questions[i].chunk : std::nullopt;
    const bool match = got && *got == truth.chunks[i];
    score.matches.push_back(match);
    hits += match ? 1 : 0;
    if (!got) continue;
    for (int b = 0; b < beta; ++b) {
      const std::size_t pos = i * static_cast<std::size_t>(beta) + static_cast<std::size_t>(b);
      if (pos >= truth.original_length) break;
      if (chunk_bit(*got, beta, b) == (truth.bits[pos] != 0)) ++correct_bits;
    }
  }
  score.esr = static_cast<double>(hits) / static_cast<double>(u);
  score.bit_accuracy = truth.original_length == 0
                           ? 0.0
                           : static_cast<double>(correct_bits) / static_cast<double>(truth.original_length);
  return score;
}

double preserved_agreement(const ModelState& before, const ModelState& after) {
  const ModelFrame& frame = *before.frame;
  if (frame.facts.empty()) return 1.0;
  const Eigen::MatrixXd vb = before.W * frame.K0;
  const Eigen::MatrixXd va = after.W * frame.K0;
  std::size_t same = 0;
  for (std::size_t j = 0; j < frame.facts.size(); ++j) {
    const int m = static_cast<int>(frame.facts[j].answer.size());
    const auto col = static_cast<Eigen::Index>(j);
    if (decode_tokens(frame, vb.col(col), m) == decode_tokens(*after.frame, va.col(col), m)) ++same;
  }
  return static_cast<double>(same) / static_cast<double>(frame.facts.size());
}

double k0_residual(const ModelState& before, const ModelState& after) {
  const Eigen::MatrixXd dW = after.W - before.W;
  const double dn = dW.norm();
  const double kn = before.frame->K0.norm();
  if (dn == 0.0 || kn == 0.0) return 0.0;
  return (dW * before.frame->K0).norm() / (dn * kn);
}

Metrics measure(const ModelState& before, const ModelState& after, const ExtractionResult& extraction,
                const WatermarkMessage& truth, double embed_time_seconds) {
  Metrics m;
  const ChunkScore score = score_extraction(extraction, truth);
  m.esr = score.esr;
  m.bit_accuracy = score.bit_accuracy;
  m.chunk_matches = score.matches;
  m.embed_time_seconds = embed_time_seconds;
  m.fidelity = preserved_agreement(before, after);
  m.k0_residual = k0_residual(before, after);
  return m;
}

nlohmann::ordered_json extraction_to_json(const ExtractionResult& result,
                                          const std::optional<WatermarkMessage>& truth) {
  nlohmann::ordered_json j;
  std::optional<ChunkScore> score;
  if (truth) score = score_extraction(result, *truth);
  j["recovered_hex"] = result.bits ? nlohmann::ordered_json(bits_to_hex(*result.bits)) : nlohmann::ordered_json();
  j["recovered_bits"] = result.bits ? result.bits->size() : 0;
  if (score) {
    j["esr"] = score->esr;
    j["bit_accuracy"] = score->bit_accuracy;
  }
  auto items = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < result.questions.size(); ++i) {
    const auto& q = result.questions[i];
    nlohmann::ordered_json item;
    item["index"] = q.question.index;
    item["template_id"] = q.question.template_id;
    item["prompt"] = q.question.prompt;
    item["tokens"] = q.tokens;
    if (q.answer) {
      item["answer"] = q.answer->values;
    } else {
      item["answer"] = nullptr;
    }
    item["status"] = q.chunk ? "ok" : (q.answer ? "out_of_range" : "malformed");
    item["chunk"] = q.chunk ? nlohmann::ordered_json(q.chunk->str()) : nlohmann::ordered_json();
    if (score && i < score->matches.size()) item["match"] = static_cast<bool>(score->matches[i]);
    items.push_back(std::move(item));
  }
  j["questions"] = std::move(items);
  return j;
}

}  // namespace editmark
