#include "editmark/model_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "editmark/error.hpp"

namespace editmark {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_hex_float(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::hex);
  return std::string(buf, res.ptr);
}

double from_hex_float(const std::string& s) {
  double x = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  bool negative = false;
  if (first != last && *first == '-') {
    negative = true;
    ++first;
  }
  const auto res = std::from_chars(first, last, x, std::chars_format::hex);
  if (res.ec != std::errc() || res.ptr != last) {
    throw Error(ErrorCode::kParse, "bad hex-float literal: " + s);
  }
  return negative ? -x : x;
}

template <typename T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorCode::kParse, std::string("missing field: ") + key);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("bad field ") + key + ": " + e.what());
  }
}

}  // namespace

ordered_json config_to_json(const ModelConfig& c) {
  ordered_json j;
  j["d_k"] = c.d_k;
  j["block_dim"] = c.block_dim;
  j["m_max"] = c.m_max;
  j["vocab_size"] = c.vocab_size;
  j["preserved_count"] = c.preserved_count;
  j["fact_answer_len"] = c.fact_answer_len;
  j["key_scale"] = c.key_scale;
  j["code_scale"] = c.code_scale;
  j["recency_decay"] = c.recency_decay;
  j["hash_probes"] = c.hash_probes;
  j["min_codebook_margin"] = c.min_codebook_margin;
  j["encoder_seed"] = c.encoder_seed;
  j["decoder_seed"] = c.decoder_seed;
  j["corpus_seed"] = c.corpus_seed;
  return j;
}

ModelConfig config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kParse, "config must be an object");
  ModelConfig c;
  // Missing fields keep their defaults so hand-written configs can be partial.
  auto take = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, std::string("bad config field ") + key + ": " + e.what());
    }
  };
  take("d_k", c.d_k);
  take("block_dim", c.block_dim);
  take("m_max", c.m_max);
  take("vocab_size", c.vocab_size);
  take("preserved_count", c.preserved_count);
  take("fact_answer_len", c.fact_answer_len);
  take("key_scale", c.key_scale);
  take("code_scale", c.code_scale);
  take("recency_decay", c.recency_decay);
  take("hash_probes", c.hash_probes);
  take("min_codebook_margin", c.min_codebook_margin);
  take("encoder_seed", c.encoder_seed);
  take("decoder_seed", c.decoder_seed);
  take("corpus_seed", c.corpus_seed);
  return c;
}

ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
  ordered_json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  ordered_json data = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(to_hex_float(m(r, c)));
  }
  j["data"] = std::move(data);
  return j;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = required<Eigen::Index>(j, "rows");
  const auto cols = required<Eigen::Index>(j, "cols");
  if (rows < 0 || cols < 0) throw Error(ErrorCode::kParse, "negative matrix shape");
  const json& data = j.at("data");
  if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw Error(ErrorCode::kParse, "matrix data length does not match its shape");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c, ++k) {
      if (!data[k].is_string()) throw Error(ErrorCode::kParse, "matrix entries must be hex-float strings");
      m(r, c) = from_hex_float(data[k].get<std::string>());
    }
  }
  return m;
}

std::string serialize_model(const ModelState& model) {
  ordered_json j;
  j["format"] = "editmark-model";
  j["version"] = kModelFormatVersion;
  j["config"] = config_to_json(model.config());
  j["W"] = matrix_to_json(model.W);
  j["K0"] = matrix_to_json(model.frame->K0);
  j["V0"] = matrix_to_json(model.frame->V0);
  return j.dump() + "\n";
}

ModelState deserialize_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("model file is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || required<std::string>(j, "format") != "editmark-model") {
    throw Error(ErrorCode::kParse, "not an editmark model file");
  }
  if (required<int>(j, "version") != kModelFormatVersion) {
    throw Error(ErrorCode::kParse, "unsupported model format version");
  }
  const ModelConfig config = config_from_json(j.at("config"));
  auto frame = std::make_shared<ModelFrame>(build_frame(config));
  if (!j.contains("K0") || !j.contains("V0") || !j.contains("W")) {
    throw Error(ErrorCode::kParse, "model file lacks W, K0 or V0");
  }
  if (matrix_from_json(j.at("K0")) != frame->K0 || matrix_from_json(j.at("V0")) != frame->V0) {
    throw Error(ErrorCode::kParse, "stored K0/V0 disagree with the frame regenerated from the seeds");
  }
  ModelState model;
  model.W = matrix_from_json(j.at("W"));
  if (model.W.rows() != config.d_v() || model.W.cols() != config.d_k) {
    throw Error(ErrorCode::kParse, "W has the wrong shape for its config");
  }
  if (!model.W.allFinite()) throw Error(ErrorCode::kParse, "W holds non-finite entries");
  model.frame = std::move(frame);
  return model;
}

void save_model(const ModelState& model, const std::filesystem::path& path) {
  write_file(path, serialize_model(model));
}

ModelState load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace editmark
