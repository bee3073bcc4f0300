#pragma once

// Watermark chunk <-> answer permutation codec.
//
// An MA question whose integer solutions are {a+1, ..., a+n} admits
// n!/(n-m)! ordered answers of length m. A chunk integer I in that range is
// mapped to one ordered selection by lexicographic unranking (mixed radix
// with digits (n-i)!/(n-m)!), and recovered by ranking.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace editmark {

using BigInt = boost::multiprecision::cpp_int;

// One bit per element, value 0 or 1, most significant first.
using Bits = std::vector<std::uint8_t>;

struct CapacityParams {
  int n = 0;     // solution-interval width
  int m = 0;     // answers per question
  int beta = 0;  // bits carried per question
};

struct WatermarkMessage {
  Bits bits;
  int beta = 0;
  std::vector<BigInt> chunks;
  std::size_t original_length = 0;
};

struct AnswerPermutation {
  std::vector<std::int64_t> values;
  std::int64_t base_offset = 0;

  bool operator==(const AnswerPermutation&) const = default;
};

// n!/(n-m)! computed exactly.
BigInt falling_factorial(int n, int m);

CapacityParams capacity(int n, int m);

AnswerPermutation encode(const BigInt& chunk, std::int64_t a, const CapacityParams& params);
BigInt decode(const AnswerPermutation& answer, std::int64_t a, const CapacityParams& params);

// Non-throwing validity check used by extraction.
bool is_valid_answer(const AnswerPermutation& answer, std::int64_t a, const CapacityParams& params);

WatermarkMessage split_watermark(const Bits& bits, const CapacityParams& params);
Bits join_watermark(const std::vector<BigInt>& chunks, const CapacityParams& params,
                    std::size_t original_length);

// Hex with the most significant nibble first. A bit length that is not a
// multiple of four is zero-padded on the right before formatting.
std::string bits_to_hex(const Bits& bits);
// `bit_length` (when given) truncates the decoded bits; it may not exceed 4*len(hex).
Bits hex_to_bits(std::string_view hex, std::optional<std::size_t> bit_length = std::nullopt);

}  // namespace editmark
