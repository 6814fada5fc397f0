#include <gtest/gtest.h>

#include <set>

#include "randcon/parallel.hpp"
#include "randcon/rng.hpp"

using namespace randcon;

TEST(Philox, KnownAnswerZeroCounterZeroKey) {
  // Random123 kat_vectors: philox4x32 10 rounds, ctr = 0, key = 0.
  const auto out = Philox::block({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
  const auto out = Philox::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out[0], 0x408f276du);
  EXPECT_EQ(out[1], 0x41c83b0eu);
  EXPECT_EQ(out[2], 0xa20bc7c6u);
  EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, StreamsAreDistinctAndReplayable) {
  Philox a(42, 1), b(42, 1), c(42, 2);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto va = a();
    EXPECT_EQ(va, b());
    EXPECT_NE(va, c());
    seen.insert(va);
  }
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(Distributions, UniformIntStaysInRange) {
  auto rng = make_rng(3, Stream::patterns);
  for (int i = 0; i < 10000; ++i) {
    const auto v = uniform_int(rng, -2, 5);
    EXPECT_GE(v, -2);
    EXPECT_LE(v, 5);
  }
}

TEST(Parallel, ResultsDoNotDependOnThreadCount) {
  std::vector<double> serial(257), threaded(257);
  auto body = [](std::vector<double>& out) {
    return [&out](std::size_t i) {
      auto rng = make_rng(derive_seed(9, i), Stream::noise);
      out[i] = standard_normal(rng);
    };
  };
  parallel_for(serial.size(), body(serial), 1);
  parallel_for(threaded.size(), body(threaded), 4);
  EXPECT_EQ(serial, threaded);
}

TEST(Parallel, RethrowsLowestFailingIndex) {
  try {
    parallel_for(
        64, [](std::size_t i) {
          if (i == 10 || i == 40) throw std::runtime_error(std::to_string(i));
        },
        4);
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "10");
  }
}
