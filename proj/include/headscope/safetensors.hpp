#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace headscope {

enum class DType { F32, F16, BF16, F64 };

std::size_t dtype_size(DType dtype) noexcept;

struct TensorInfo {
  DType dtype = DType::F32;
  std::vector<std::int64_t> shape;
  std::size_t begin = 0;  // offsets relative to the payload start
  std::size_t end = 0;

  std::size_t element_count() const;
};

/// Read-only view of a safetensors file: an 8-byte little-endian header
/// length, a JSON header mapping tensor names to {dtype, shape,
/// data_offsets}, then the raw payload. The file is memory-mapped.
class SafetensorsFile {
 public:
  static SafetensorsFile open(const std::filesystem::path& path);

  bool contains(const std::string& name) const { return tensors_.contains(name); }
  const TensorInfo& info(const std::string& name) const;
  std::vector<std::string> names() const;
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  /// Tensor payload converted to f32.
  std::vector<float> read_f32(const std::string& name) const;

 private:
  struct Mapping;
  std::shared_ptr<Mapping> mapping_;
  const unsigned char* payload_ = nullptr;
  std::size_t payload_size_ = 0;
  std::map<std::string, TensorInfo> tensors_;
  std::map<std::string, std::string> metadata_;
  std::filesystem::path path_;
};

struct NamedTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::span<const float> data;
};

/// Writes f32 tensors in safetensors layout, names in lexicographic order.
void write_safetensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);

/// Half-precision decoders, exposed for tests.
float f16_to_f32(std::uint16_t bits) noexcept;
float bf16_to_f32(std::uint16_t bits) noexcept;

}  // namespace headscope
