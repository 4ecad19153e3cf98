#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "headscope/safetensors.hpp"
#include "test_support.hpp"

namespace headscope {
namespace {

using testing::TempDir;

void write_raw(const std::filesystem::path& path, const std::string& header, const std::string& payload) {
  std::ofstream out(path, std::ios::binary);
  std::uint64_t n = header.size();
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((n >> (8 * i)) & 0xFF));
  out << header << payload;
}

std::string u16_bytes(std::initializer_list<std::uint16_t> values) {
  std::string out;
  for (auto v : values) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>(v >> 8));
  }
  return out;
}

TEST(Safetensors, WriteThenReadRoundTripsF32) {
  TempDir dir;
  const std::vector<float> a = {1.0f, -2.5f, 3.25f, 0.0f, 1e-30f, 7.0f};
  const std::vector<float> b = {42.0f};
  write_safetensors(dir / "t.safetensors", {{"zeta", {2, 3}, a}, {"alpha", {1}, b}});
  const auto f = SafetensorsFile::open(dir / "t.safetensors");
  EXPECT_EQ(f.names(), (std::vector<std::string>{"alpha", "zeta"}));
  EXPECT_EQ(f.info("zeta").shape, (std::vector<std::int64_t>{2, 3}));
  EXPECT_EQ(f.info("zeta").dtype, DType::F32);
  EXPECT_EQ(f.read_f32("zeta"), a);
  EXPECT_EQ(f.read_f32("alpha"), b);
}

TEST(Safetensors, HalfPrecisionPayloadsAreUpconverted) {
  TempDir dir;
  const std::string payload = u16_bytes({0x3C00, 0xC000, 0x3F80, 0xBF00});
  write_raw(dir / "h.safetensors",
            R"({"h":{"dtype":"F16","shape":[2],"data_offsets":[0,4]},)"
            R"("b":{"dtype":"BF16","shape":[2],"data_offsets":[4,8]},"__metadata__":{"format":"pt"}})",
            payload);
  const auto f = SafetensorsFile::open(dir / "h.safetensors");
  EXPECT_EQ(f.read_f32("h"), (std::vector<float>{1.0f, -2.0f}));
  EXPECT_EQ(f.read_f32("b"), (std::vector<float>{1.0f, -0.5f}));
  EXPECT_EQ(f.metadata().at("format"), "pt");
}

TEST(Safetensors, HalfDecodersCoverSpecialValues) {
  EXPECT_EQ(f16_to_f32(0x0000), 0.0f);
  EXPECT_EQ(f16_to_f32(0x3C00), 1.0f);
  EXPECT_EQ(f16_to_f32(0x7BFF), 65504.0f);
  EXPECT_EQ(f16_to_f32(0x0001), std::ldexp(1.0f, -24));
  EXPECT_EQ(f16_to_f32(0x0400), std::ldexp(1.0f, -14));
  EXPECT_TRUE(std::isinf(f16_to_f32(0x7C00)));
  EXPECT_TRUE(std::isnan(f16_to_f32(0x7E00)));
  EXPECT_TRUE(std::signbit(f16_to_f32(0x8000)));
  EXPECT_EQ(bf16_to_f32(0x3F80), 1.0f);
  EXPECT_EQ(bf16_to_f32(0xC040), -3.0f);
}

TEST(Safetensors, F16DecoderMatchesExhaustiveReference) {
  for (std::uint32_t bits = 0; bits < 0x10000; ++bits) {
    const std::uint16_t h = static_cast<std::uint16_t>(bits);
    const int sign = (h >> 15) ? -1 : 1;
    const int exp = (h >> 10) & 0x1F;
    const int mant = h & 0x3FF;
    if (exp == 31) continue;
    const double expected =
        exp == 0 ? sign * std::ldexp(static_cast<double>(mant), -24) : sign * std::ldexp(1024.0 + mant, exp - 25);
    ASSERT_EQ(static_cast<double>(f16_to_f32(h)), expected) << std::hex << bits;
  }
}

TEST(Safetensors, RejectsMalformedFiles) {
  TempDir dir;
  {
    std::ofstream out(dir / "short.safetensors", std::ios::binary);
    out << "abc";
  }
  EXPECT_ERROR_CODE(SafetensorsFile::open(dir / "short.safetensors"), ErrorCode::MalformedHeader);

  write_raw(dir / "json.safetensors", "{not json", "");
  EXPECT_ERROR_CODE(SafetensorsFile::open(dir / "json.safetensors"), ErrorCode::MalformedHeader);

  write_raw(dir / "range.safetensors", R"({"x":{"dtype":"F32","shape":[4],"data_offsets":[0,16]}})", "1234");
  EXPECT_ERROR_CODE(SafetensorsFile::open(dir / "range.safetensors"), ErrorCode::MalformedHeader);

  write_raw(dir / "span.safetensors", R"({"x":{"dtype":"F32","shape":[2],"data_offsets":[0,4]}})", "1234");
  EXPECT_ERROR_CODE(SafetensorsFile::open(dir / "span.safetensors"), ErrorCode::MalformedHeader);

  write_raw(dir / "dtype.safetensors", R"({"x":{"dtype":"I8","shape":[1],"data_offsets":[0,1]}})", "1");
  EXPECT_ERROR_CODE(SafetensorsFile::open(dir / "dtype.safetensors"), ErrorCode::MalformedHeader);

  {
    std::ofstream out(dir / "huge.safetensors", std::ios::binary);
    out.write("\xFF\xFF\xFF\x00\x00\x00\x00\x00", 8);
    out << "{}";
  }
  EXPECT_ERROR_CODE(SafetensorsFile::open(dir / "huge.safetensors"), ErrorCode::MalformedHeader);
  EXPECT_ERROR_CODE(SafetensorsFile::open(dir / "missing.safetensors"), ErrorCode::Io);
}

TEST(Safetensors, UnknownTensorIsMissingTensor) {
  TempDir dir;
  const std::vector<float> a = {1.0f};
  write_safetensors(dir / "t.safetensors", {{"a", {1}, a}});
  const auto f = SafetensorsFile::open(dir / "t.safetensors");
  EXPECT_ERROR_CODE(f.read_f32("b"), ErrorCode::MissingTensor);
}

}  // namespace
}  // namespace headscope
