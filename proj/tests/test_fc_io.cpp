#include <gtest/gtest.h>

#include <filesystem>

#include "randcon/fc_io.hpp"

using namespace randcon;

namespace {

FcSeries sample_series(std::uint64_t seed) {
  auto rng = make_rng(seed, Stream::noise);
  Matrix m(5, 30);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  return randcon_fc(RoiTimeSeries(m), sample_gaussian_bank(6, 3, seed), Padding::same);
}

}  // namespace

TEST(FcContainer, RoundTripIsBitExact) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto fc = sample_series(seed);
    const auto decoded = decode_fc_series(encode_fc_series(fc));
    EXPECT_EQ(decoded, fc);
    EXPECT_EQ(decoded.params().seed, seed);
  }
}

TEST(FcContainer, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "randcon_fc_io" / "x.rcfc";
  const auto fc = sample_series(3);
  save_fc_series(path, fc);
  EXPECT_EQ(load_fc_series(path), fc);
}

TEST(FcContainer, EncodingIsDeterministic) {
  EXPECT_EQ(encode_fc_series(sample_series(1)), encode_fc_series(sample_series(1)));
}

TEST(FcContainer, TruncationIsFormatError) {
  const auto bytes = encode_fc_series(sample_series(2));
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{11}, std::size_t{20}, bytes.size() - 1})
    EXPECT_THROW(decode_fc_series(std::string_view(bytes).substr(0, cut)), FormatError) << cut;
}

TEST(FcContainer, VersionAndMagicChecked) {
  auto bytes = encode_fc_series(sample_series(2));
  auto bad_version = bytes;
  bad_version[4] = 2;
  try {
    decode_fc_series(bad_version);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos);
  }
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_fc_series(bad_magic), FormatError);
  EXPECT_THROW(decode_fc_series(bytes + "extra"), FormatError);
}

TEST(FcContainer, EmptySeriesRefused) {
  const FcSeries empty(3, 0, FcMethod::sliding_window, FcParams{});
  EXPECT_THROW(encode_fc_series(empty), DimensionError);
}

TEST(FcContainer, LittleEndianLayout) {
  const FcSeries one(2, 1, FcMethod::sliding_window, FcParams{2, 1, 0, Padding::valid, 0, 0},
                     std::vector<double>{1.0, 0.5, 0.5, 1.0}, 0);
  const auto bytes = encode_fc_series(one);
  EXPECT_EQ(bytes.substr(0, 4), "RCFC");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);
  // 1.0 = 0x3FF0000000000000, low byte first.
  const auto tail = bytes.substr(bytes.size() - 8);
  EXPECT_EQ(static_cast<unsigned char>(tail[7]), 0x3Fu);
  EXPECT_EQ(static_cast<unsigned char>(tail[6]), 0xF0u);
  EXPECT_EQ(static_cast<unsigned char>(tail[0]), 0x00u);
}
