#include "editmark/codec.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "editmark/error.hpp"

namespace editmark {

namespace {

// (n-i)!/(n-m)! for 1-based position i: product of (n-m+1) .. (n-i).
BigInt position_radix(int n, int m, int i) {
  BigInt radix = 1;
  for (int k = n - m + 1; k <= n - i; ++k) radix *= k;
  return radix;
}

void check_params(const CapacityParams& params) {
  if (params.m < 1 || params.n < 1 || params.m > params.n) {
    throw Error(ErrorCode::kParameter, "capacity parameters require 1 <= m <= n");
  }
}

}  // namespace

BigInt falling_factorial(int n, int m) {
  BigInt result = 1;
  for (int k = n - m + 1; k <= n; ++k) result *= k;
  return result;
}

CapacityParams capacity(int n, int m) {
  if (n < 1 || m < 1) throw Error(ErrorCode::kParameter, "n and m must be positive");
  if (m > n) throw Error(ErrorCode::kParameter, "m must not exceed n");
  const BigInt count = falling_factorial(n, m);
  // floor(log2(count)) as an exact bit length.
  const int beta = static_cast<int>(boost::multiprecision::msb(count));
  return CapacityParams{n, m, beta};
}

AnswerPermutation encode(const BigInt& chunk, std::int64_t a, const CapacityParams& params) {
  check_params(params);
  if (chunk < 0 || chunk >= falling_factorial(params.n, params.m)) {
    throw Error(ErrorCode::kRange, "chunk out of range for n!/(n-m)!");
  }
  std::vector<std::int64_t> candidates(static_cast<std::size_t>(params.n));
  for (int k = 0; k < params.n; ++k) candidates[static_cast<std::size_t>(k)] = a + 1 + k;

  AnswerPermutation out;
  out.base_offset = a;
  out.values.reserve(static_cast<std::size_t>(params.m));
  BigInt rest = chunk;
  for (int i = 1; i <= params.m; ++i) {
    const BigInt radix = position_radix(params.n, params.m, i);
    const auto pos = static_cast<std::size_t>(rest / radix);
    rest %= radix;
    out.values.push_back(candidates[pos]);
    candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(pos));
  }
  return out;
}

bool is_valid_answer(const AnswerPermutation& answer, std::int64_t a, const CapacityParams& params) {
  if (params.m < 1 || params.m > params.n) return false;
  if (answer.values.size() != static_cast<std::size_t>(params.m)) return false;
  std::set<std::int64_t> seen;
  for (std::int64_t v : answer.values) {
    if (v <= a || v >= a + params.n + 1) return false;
    if (!seen.insert(v).second) return false;
  }
  return true;
}

BigInt decode(const AnswerPermutation& answer, std::int64_t a, const CapacityParams& params) {
  check_params(params);
  if (!is_valid_answer(answer, a, params)) {
    throw Error(ErrorCode::kMalformedAnswer,
                "answer values must be distinct integers inside (a, a+n+1)");
  }
  std::vector<std::int64_t> candidates(static_cast<std::size_t>(params.n));
  for (int k = 0; k < params.n; ++k) candidates[static_cast<std::size_t>(k)] = a + 1 + k;

  BigInt rank = 0;
  for (int i = 1; i <= params.m; ++i) {
    const std::int64_t value = answer.values[static_cast<std::size_t>(i - 1)];
    const auto it = std::find(candidates.begin(), candidates.end(), value);
    rank += BigInt(it - candidates.begin()) * position_radix(params.n, params.m, i);
    candidates.erase(it);
  }
  return rank;
}

WatermarkMessage split_watermark(const Bits& bits, const CapacityParams& params) {
  if (bits.empty()) throw Error(ErrorCode::kParameter, "watermark must contain at least one bit");
  if (params.beta < 1) throw Error(ErrorCode::kParameter, "chunk width beta must be positive");
  const auto beta = static_cast<std::size_t>(params.beta);
  const std::size_t count = (bits.size() + beta - 1) / beta;

  WatermarkMessage msg;
  msg.bits = bits;
  msg.beta = params.beta;
  msg.original_length = bits.size();
  msg.chunks.reserve(count);
  for (std::size_t c = 0; c < count; ++c) {
    BigInt value = 0;
    for (std::size_t k = 0; k < beta; ++k) {
      const std::size_t idx = c * beta + k;
      value <<= 1;
      if (idx < bits.size()) {
        if (bits[idx] > 1) throw Error(ErrorCode::kParameter, "bits must be 0 or 1");
        value |= bits[idx];
      }
    }
    msg.chunks.push_back(std::move(value));
  }
  return msg;
}

Bits join_watermark(const std::vector<BigInt>& chunks, const CapacityParams& params,
                    std::size_t original_length) {
  if (params.beta < 1) throw Error(ErrorCode::kParameter, "chunk width beta must be positive");
  const auto beta = static_cast<std::size_t>(params.beta);
  if (original_length > chunks.size() * beta) {
    throw Error(ErrorCode::kParameter, "original length exceeds the chunk payload");
  }
  const BigInt limit = BigInt(1) << params.beta;
  Bits out;
  out.reserve(chunks.size() * beta);
  for (const BigInt& chunk : chunks) {
    if (chunk < 0 || chunk >= limit) throw Error(ErrorCode::kRange, "chunk exceeds 2^beta");
    for (std::size_t k = beta; k-- > 0;) {
      out.push_back(static_cast<std::uint8_t>(boost::multiprecision::bit_test(chunk, static_cast<unsigned>(k))));
    }
  }
  out.resize(original_length);
  return out;
}

std::string bits_to_hex(const Bits& bits) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string hex;
  hex.reserve((bits.size() + 3) / 4);
  for (std::size_t i = 0; i < bits.size(); i += 4) {
    int nibble = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      nibble <<= 1;
      if (i + k < bits.size()) nibble |= bits[i + k] & 1;
    }
    hex.push_back(kDigits[nibble]);
  }
  return hex;
}

Bits hex_to_bits(std::string_view hex, std::optional<std::size_t> bit_length) {
  if (hex.starts_with("0x") || hex.starts_with("0X")) hex.remove_prefix(2);
  if (hex.empty()) throw Error(ErrorCode::kParse, "empty hex string");
  Bits bits;
  bits.reserve(hex.size() * 4);
  for (char c : hex) {
    int v = 0;
    if (c >= '0' && c <= '9') {
      v = c - '0';
    } else if (c >= 'a' && c <= 'f') {
      v = c - 'a' + 10;
    } else if (c >= 'A' && c <= 'F') {
      v = c - 'A' + 10;
    } else {
      throw Error(ErrorCode::kParse, std::string("invalid hex digit '") + c + "'");
    }
    for (int k = 3; k >= 0; --k) bits.push_back(static_cast<std::uint8_t>((v >> k) & 1));
  }
  if (bit_length) {
    if (*bit_length == 0 || *bit_length > bits.size()) {
      throw Error(ErrorCode::kParameter, "bit length must be in [1, 4*hex digits]");
    }
    bits.resize(*bit_length);
  }
  return bits;
}

}  // namespace editmark
