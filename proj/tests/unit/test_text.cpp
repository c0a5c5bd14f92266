#include <gtest/gtest.h>

#include <cmath>

#include "sprop/random.hpp"
#include "sprop/text.hpp"

using namespace sprop;

TEST(Text, LowercasesAsciiAndLatin1) {
  EXPECT_EQ(text::utf8_lower("HaPPy"), "happy");
  EXPECT_EQ(text::utf8_lower("ÉTÉ"), "été");
  EXPECT_EQ(text::utf8_lower("ΑΒΓ"), "αβγ");
  EXPECT_EQ(text::utf8_lower("ПРИВЕТ"), "привет");
  EXPECT_EQ(text::utf8_lower("日本"), "日本");
}

TEST(Text, ParseDoubleIsStrict) {
  EXPECT_EQ(text::parse_double("0.25"), 0.25);
  EXPECT_EQ(text::parse_double(" 1e-3 "), 1e-3);
  EXPECT_FALSE(text::parse_double("1.0x"));
  EXPECT_FALSE(text::parse_double(""));
  EXPECT_FALSE(text::parse_double("nan"));
  EXPECT_FALSE(text::parse_double("inf"));
  EXPECT_EQ(text::parse_int("42"), 42);
  EXPECT_FALSE(text::parse_int("4.2"));
}

TEST(Text, FormatDoubleRoundTrips) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double v = (uniform01(rng) - 0.5) * std::pow(10.0, static_cast<int>(uniform_index(rng, 20)) - 10);
    EXPECT_EQ(*text::parse_double(text::format_double(v)), v);
  }
}

TEST(Text, SplitRecordHandlesQuotes) {
  const auto f = text::split_record(R"(a,"b,c","say ""hi""",)", ',');
  ASSERT_EQ(f.size(), 4u);
  EXPECT_EQ(f[1], "b,c");
  EXPECT_EQ(f[2], "say \"hi\"");
  EXPECT_EQ(f[3], "");
}

TEST(Text, Fnv1aKnownVectors) {
  EXPECT_EQ(text::fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(text::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(text::hex64(0xabcULL), "0000000000000abc");
}

TEST(Random, DeriveSeedSeparatesStreams) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}

TEST(Random, UniformIndexStaysInRange) {
  Rng rng(1);
  std::array<int, 3> counts{};
  for (int i = 0; i < 3000; ++i) ++counts[uniform_index(rng, 3)];
  for (int c : counts) EXPECT_GT(c, 850);
}
