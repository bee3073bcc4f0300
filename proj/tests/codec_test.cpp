#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "editmark/codec.hpp"
#include "editmark/error.hpp"

namespace editmark {
namespace {

// Every ordered m-selection from {a+1..a+n}, in lexicographic order.
std::vector<std::vector<std::int64_t>> enumerate_selections(int n, int m, std::int64_t a) {
  std::vector<std::vector<std::int64_t>> out;
  std::vector<std::int64_t> current;
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  auto rec = [&](auto&& self) -> void {
    if (static_cast<int>(current.size()) == m) {
      out.push_back(current);
      return;
    }
    for (int v = 0; v < n; ++v) {
      if (used[static_cast<std::size_t>(v)]) continue;
      used[static_cast<std::size_t>(v)] = true;
      current.push_back(a + 1 + v);
      self(self);
      current.pop_back();
      used[static_cast<std::size_t>(v)] = false;
    }
  };
  rec(rec);
  return out;
}

int bit_length(const BigInt& x) { return x == 0 ? 0 : static_cast<int>(msb(x)) + 1; }

TEST(Capacity, MatchesPublishedSetting) { EXPECT_EQ(capacity(89, 5).beta, 32); }

TEST(Capacity, SmallCases) {
  EXPECT_EQ(capacity(1, 1).beta, 0);
  EXPECT_EQ(capacity(4, 2).beta, 3);
}

TEST(Capacity, EqualsBitLengthOfFallingFactorialMinusOne) {
  for (int n = 1; n <= 40; ++n) {
    for (int m = 1; m <= std::min(n, 8); ++m) {
      BigInt ff = 1;
      for (int i = 0; i < m; ++i) ff *= (n - i);
      EXPECT_EQ(capacity(n, m).beta, bit_length(ff) - 1) << n << "," << m;
      EXPECT_EQ(falling_factorial(n, m), ff);
    }
  }
}

TEST(Capacity, MonotoneInN) {
  for (int m = 1; m <= 6; ++m) {
    int prev = -1;
    for (int n = m; n <= 120; ++n) {
      const int beta = capacity(n, m).beta;
      EXPECT_GE(beta, prev);
      prev = beta;
    }
  }
}

TEST(Capacity, RejectsMGreaterThanN) {
  try {
    capacity(3, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParameter);
  }
}

TEST(Encode, MatchesEnumerationOracle) {
  const CapacityParams p = capacity(4, 2);
  const auto all = enumerate_selections(4, 2, 0);
  ASSERT_EQ(all.size(), 12u);
  EXPECT_EQ(encode(0, 0, p).values, (std::vector<std::int64_t>{1, 2}));
  EXPECT_EQ(encode(5, 0, p).values, (std::vector<std::int64_t>{2, 4}));
  EXPECT_EQ(encode(11, 0, p).values, (std::vector<std::int64_t>{4, 3}));
  EXPECT_EQ(all[5], (std::vector<std::int64_t>{2, 4}));
  EXPECT_EQ(all[11], (std::vector<std::int64_t>{4, 3}));
  for (int i = 0; i < 12; ++i) EXPECT_EQ(encode(i, 0, p).values, all[static_cast<std::size_t>(i)]);
}

TEST(Decode, MatchesEnumerationOracle) {
  const CapacityParams p = capacity(4, 2);
  EXPECT_EQ(decode({{1, 2}, 0}, 0, p), 0);
  EXPECT_EQ(decode({{2, 4}, 0}, 0, p), 5);
  EXPECT_EQ(decode({{4, 3}, 0}, 0, p), 11);
}

TEST(Encode, RangeErrorAtFallingFactorial) {
  try {
    encode(12, 0, capacity(4, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRange);
  }
}

TEST(Decode, RejectsMalformedAnswers) {
  const CapacityParams p = capacity(4, 2);
  for (const auto& bad : std::vector<std::vector<std::int64_t>>{{0, 1}, {5, 1}, {2, 2}, {1}, {1, 2, 3}}) {
    AnswerPermutation ans{bad, 0};
    EXPECT_FALSE(is_valid_answer(ans, 0, p));
    try {
      decode(ans, 0, p);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kMalformedAnswer);
    }
  }
}

TEST(Codec, ExhaustiveRoundtripAndLexicographicOrder) {
  for (std::int64_t a : {0, 17, -3}) {
    for (int n = 1; n <= 8; ++n) {
      for (int m = 1; m <= std::min(n, 4); ++m) {
        const CapacityParams p = capacity(n, m);
        const auto oracle = enumerate_selections(n, m, a);
        ASSERT_EQ(BigInt(oracle.size()), falling_factorial(n, m));
        std::vector<std::int64_t> prev;
        for (std::size_t i = 0; i < oracle.size(); ++i) {
          const AnswerPermutation ans = encode(i, a, p);
          ASSERT_EQ(ans.values, oracle[i]);
          ASSERT_TRUE(is_valid_answer(ans, a, p));
          ASSERT_EQ(decode(ans, a, p), BigInt(i));
          if (i > 0) ASSERT_TRUE(std::lexicographical_compare(prev.begin(), prev.end(), ans.values.begin(), ans.values.end()));
          prev = ans.values;
        }
      }
    }
  }
}

TEST(Codec, RoundtripAtPublishedSettingSampled) {
  const CapacityParams p = capacity(89, 5);
  std::mt19937_64 gen(11);
  for (int k = 0; k < 2000; ++k) {
    const BigInt chunk = gen() >> 32;
    const std::int64_t a = static_cast<std::int64_t>(gen() % 1000000);
    const auto ans = encode(chunk, a, p);
    ASSERT_TRUE(is_valid_answer(ans, a, p));
    ASSERT_EQ(decode(ans, a, p), chunk);
  }
}

Bits random_bits(std::mt19937_64& gen, std::size_t n) {
  Bits b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(gen() & 1U);
  return b;
}

TEST(Split, ChunkLayout) {
  const CapacityParams p{89, 5, 32};
  std::mt19937_64 gen(3);
  const Bits b32 = random_bits(gen, 32);
  const auto one = split_watermark(b32, p);
  ASSERT_EQ(one.chunks.size(), 1u);
  BigInt expect = 0;
  for (auto bit : b32) expect = (expect << 1) | bit;
  EXPECT_EQ(one.chunks[0], expect);

  EXPECT_EQ(split_watermark(random_bits(gen, 128), p).chunks.size(), 4u);

  const Bits b40 = random_bits(gen, 40);
  const auto two = split_watermark(b40, p);
  ASSERT_EQ(two.chunks.size(), 2u);
  BigInt tail = 0;
  for (std::size_t i = 32; i < 40; ++i) tail = (tail << 1) | b40[i];
  EXPECT_EQ(two.chunks[1], tail << 24);
  EXPECT_EQ(two.original_length, 40u);
}

TEST(Split, RejectsEmpty) {
  try {
    split_watermark({}, CapacityParams{89, 5, 32});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParameter);
  }
}

TEST(Join, SmallExamples) {
  const CapacityParams p{4, 2, 4};
  EXPECT_EQ(join_watermark({0}, p, 4), (Bits{0, 0, 0, 0}));
  EXPECT_EQ(join_watermark({5}, p, 4), (Bits{0, 1, 0, 1}));
  try {
    join_watermark({16}, p, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRange);
  }
}

TEST(SplitJoin, RoundtripAllLengths) {
  std::mt19937_64 gen(5);
  for (int beta : {1, 3, 7, 32}) {
    const CapacityParams p{89, 5, beta};
    for (std::size_t len = 1; len <= 256; ++len) {
      const Bits bits = random_bits(gen, len);
      const auto msg = split_watermark(bits, p);
      ASSERT_EQ(msg.chunks.size(), (len + beta - 1) / beta);
      for (const auto& c : msg.chunks) ASSERT_LT(c, BigInt(1) << beta);
      ASSERT_EQ(join_watermark(msg.chunks, p, len), bits);
    }
  }
}

TEST(Hex, MostSignificantNibbleFirst) {
  EXPECT_EQ(bits_to_hex(Bits{1, 0, 1, 0, 0, 0, 0, 1}), "a1");
  EXPECT_EQ(hex_to_bits("A1"), (Bits{1, 0, 1, 0, 0, 0, 0, 1}));
  EXPECT_EQ(hex_to_bits("f", 2), (Bits{1, 1}));
  EXPECT_EQ(bits_to_hex(Bits{1, 1}), "c");
  EXPECT_THROW(hex_to_bits("zz"), Error);
  EXPECT_THROW(hex_to_bits("f", 5), Error);
}

}  // namespace
}  // namespace editmark
