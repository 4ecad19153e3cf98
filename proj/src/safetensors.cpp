#include "headscope/safetensors.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "headscope/errors.hpp"

namespace headscope {

using nlohmann::json;

struct SafetensorsFile::Mapping {
  Mapping(const Mapping&) = delete;
  Mapping& operator=(const Mapping&) = delete;
  explicit Mapping(const std::filesystem::path& path) {
    fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0) throw Error(ErrorCode::Io, "cannot open " + path.string());
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
      ::close(fd);
      throw Error(ErrorCode::Io, "cannot stat " + path.string());
    }
    size = static_cast<std::size_t>(st.st_size);
    if (size > 0) {
      void* p = ::mmap(nullptr, size, PROT_READ, MAP_PRIVATE, fd, 0);
      if (p == MAP_FAILED) {
        ::close(fd);
        throw Error(ErrorCode::Io, "cannot mmap " + path.string());
      }
      data = static_cast<const unsigned char*>(p);
    }
  }
  ~Mapping() {
    if (data != nullptr) ::munmap(const_cast<unsigned char*>(data), size);
    if (fd >= 0) ::close(fd);
  }
  int fd = -1;
  const unsigned char* data = nullptr;
  std::size_t size = 0;
};

std::size_t dtype_size(DType dtype) noexcept {
  switch (dtype) {
    case DType::F32: return 4;
    case DType::F16: return 2;
    case DType::BF16: return 2;
    case DType::F64: return 8;
  }
  return 0;
}

std::size_t TensorInfo::element_count() const {
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

float f16_to_f32(std::uint16_t h) noexcept {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t exponent = (h >> 10) & 0x1Fu;
  std::uint32_t mantissa = h & 0x3FFu;
  std::uint32_t bits = 0;
  if (exponent == 0x1F) {
    bits = sign | 0x7F800000u | (mantissa << 13);
  } else if (exponent == 0) {
    if (mantissa == 0) {
      bits = sign;
    } else {
      // Subnormal half: renormalise into a normal f32.
      int e = -1;
      do {
        ++e;
        mantissa <<= 1;
      } while ((mantissa & 0x400u) == 0);
      bits = sign | static_cast<std::uint32_t>(127 - 15 - e) << 23 | (mantissa & 0x3FFu) << 13;
    }
  } else {
    bits = sign | (exponent + (127 - 15)) << 23 | mantissa << 13;
  }
  return std::bit_cast<float>(bits);
}

float bf16_to_f32(std::uint16_t b) noexcept {
  return std::bit_cast<float>(static_cast<std::uint32_t>(b) << 16);
}

namespace {

DType parse_dtype(const std::string& s) {
  if (s == "F32") return DType::F32;
  if (s == "F16") return DType::F16;
  if (s == "BF16") return DType::BF16;
  if (s == "F64") return DType::F64;
  throw Error(ErrorCode::MalformedHeader, "unsupported dtype " + s);
}

template <typename T>
T load_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  return v;
}

}  // namespace

SafetensorsFile SafetensorsFile::open(const std::filesystem::path& path) {
  SafetensorsFile file;
  file.path_ = path;
  file.mapping_ = std::make_shared<Mapping>(path);
  const auto* bytes = file.mapping_->data;
  const std::size_t size = file.mapping_->size;
  if (size < 8) throw Error(ErrorCode::MalformedHeader, path.string() + ": file shorter than 8 bytes");
  const auto header_len = load_le<std::uint64_t>(bytes);
  if (header_len > size - 8) {
    throw Error(ErrorCode::MalformedHeader, path.string() + ": header length exceeds file size");
  }
  json header;
  try {
    header = json::parse(bytes + 8, bytes + 8 + header_len);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, path.string() + ": " + e.what());
  }
  if (!header.is_object()) throw Error(ErrorCode::MalformedHeader, path.string() + ": header not an object");

  file.payload_ = bytes + 8 + header_len;
  file.payload_size_ = size - 8 - header_len;

  for (auto it = header.begin(); it != header.end(); ++it) {
    if (it.key() == "__metadata__") {
      if (it->is_object()) {
        for (auto m = it->begin(); m != it->end(); ++m) {
          if (m->is_string()) file.metadata_[m.key()] = m->get<std::string>();
        }
      }
      continue;
    }
    const auto& entry = it.value();
    try {
      TensorInfo info;
      info.dtype = parse_dtype(entry.at("dtype").get<std::string>());
      info.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto offsets = entry.at("data_offsets").get<std::vector<std::size_t>>();
      if (offsets.size() != 2) throw Error(ErrorCode::MalformedHeader, "data_offsets must have 2 entries");
      info.begin = offsets[0];
      info.end = offsets[1];
      for (auto d : info.shape) {
        if (d < 0) throw Error(ErrorCode::MalformedHeader, "negative dimension");
      }
      if (info.begin > info.end || info.end > file.payload_size_) {
        throw Error(ErrorCode::MalformedHeader, "offsets out of range");
      }
      if (info.end - info.begin != info.element_count() * dtype_size(info.dtype)) {
        throw Error(ErrorCode::MalformedHeader, "byte span does not match shape and dtype");
      }
      file.tensors_.emplace(it.key(), std::move(info));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedHeader, path.string() + ": tensor '" + it.key() + "': " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::MalformedHeader, path.string() + ": tensor '" + it.key() + "': " + e.what());
    }
  }
  return file;
}

const TensorInfo& SafetensorsFile::info(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error(ErrorCode::MissingTensor, name);
  return it->second;
}

std::vector<std::string> SafetensorsFile::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [name, _] : tensors_) out.push_back(name);
  return out;
}

std::vector<float> SafetensorsFile::read_f32(const std::string& name) const {
  const auto& t = info(name);
  const std::size_t n = t.element_count();
  std::vector<float> out(n);
  const unsigned char* src = payload_ + t.begin;
  switch (t.dtype) {
    case DType::F32:
      std::memcpy(out.data(), src, n * 4);
      break;
    case DType::F16:
      for (std::size_t i = 0; i < n; ++i) out[i] = f16_to_f32(load_le<std::uint16_t>(src + 2 * i));
      break;
    case DType::BF16:
      for (std::size_t i = 0; i < n; ++i) out[i] = bf16_to_f32(load_le<std::uint16_t>(src + 2 * i));
      break;
    case DType::F64:
      for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(load_le<double>(src + 8 * i));
      break;
  }
  return out;
}

void write_safetensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::vector<const NamedTensor*> order;
  for (const auto& t : tensors) order.push_back(&t);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->name < b->name; });

  json header = json::object();
  std::size_t offset = 0;
  for (const auto* t : order) {
    std::size_t count = 1;
    for (auto d : t->shape) count *= static_cast<std::size_t>(d);
    if (count != t->data.size()) {
      throw Error(ErrorCode::ShapeMismatch, t->name + ": data size does not match shape");
    }
    header[t->name] = {{"dtype", "F32"}, {"shape", t->shape}, {"data_offsets", {offset, offset + 4 * count}}};
    offset += 4 * count;
  }
  std::string header_text = header.dump();
  while ((header_text.size() + 8) % 8 != 0) header_text.push_back(' ');

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  const std::uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), 8);
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto* t : order) {
    out.write(reinterpret_cast<const char*>(t->data.data()),
              static_cast<std::streamsize>(t->data.size() * sizeof(float)));
  }
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

}  // namespace headscope
