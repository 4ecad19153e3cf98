#include "headscope/trace_dump.hpp"

#include <bit>
#include <cstring>

#include "headscope/errors.hpp"
#include "headscope/file_io.hpp"

namespace headscope {
namespace {

static_assert(std::endian::native == std::endian::little, "trace dumps assume a little-endian host");

constexpr char kMagic[] = "HSTRACE1";

template <typename T>
void put(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw Error(ErrorCode::MalformedHeader, "trace dump truncated");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

DumpArray from_matrix(std::string name, const Matrix& m) {
  return {std::move(name), {m.rows(), m.cols()}, std::vector<float>(m.values().begin(), m.values().end())};
}

}  // namespace

void write_dump_arrays(const std::filesystem::path& path, const std::vector<DumpArray>& arrays) {
  std::string out(kMagic, 8);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto dim : a.shape) put<std::uint64_t>(out, dim);
    out.append(reinterpret_cast<const char*>(a.data.data()), a.data.size() * sizeof(float));
  }
  write_file_atomic(path, out);
}

void write_trace_dump(const std::filesystem::path& path, const ForwardTrace& trace) {
  std::vector<DumpArray> arrays;
  DumpArray ids{"token_ids", {trace.token_ids.size()}, {}};
  for (TokenId t : trace.token_ids) ids.data.push_back(static_cast<float>(t));
  arrays.push_back(std::move(ids));
  for (std::size_t l = 0; l < trace.head_contribution.size(); ++l) {
    for (std::size_t h = 0; h < trace.head_contribution[l].size(); ++h) {
      arrays.push_back(from_matrix("head." + std::to_string(l) + "." + std::to_string(h),
                                   trace.head_contribution[l][h]));
    }
  }
  for (std::size_t l = 0; l < trace.mlp_activation.size(); ++l) {
    arrays.push_back(from_matrix("mlp." + std::to_string(l), trace.mlp_activation[l]));
  }
  for (const auto& [n, values] : trace.neuron_activation) {
    arrays.push_back({"neuron." + std::to_string(n.layer) + "." + std::to_string(n.neuron), {values.size()}, values});
  }
  for (std::size_t l = 0; l < trace.residual_stream.size(); ++l) {
    arrays.push_back(from_matrix("residual." + std::to_string(l), trace.residual_stream[l]));
  }
  if (!trace.logits.empty()) arrays.push_back(from_matrix("logits", trace.logits));
  write_dump_arrays(path, arrays);
}

std::vector<DumpArray> read_trace_dump(const std::filesystem::path& path) {
  const std::string in = read_text_file(path);
  if (in.size() < 8 || in.compare(0, 8, kMagic, 8) != 0) {
    throw Error(ErrorCode::MalformedHeader, path.string() + ": not a trace dump");
  }
  std::size_t pos = 8;
  const auto count = take<std::uint32_t>(in, pos);
  std::vector<DumpArray> arrays;
  for (std::uint32_t i = 0; i < count; ++i) {
    DumpArray a;
    const auto name_len = take<std::uint32_t>(in, pos);
    if (pos + name_len > in.size()) throw Error(ErrorCode::MalformedHeader, "trace dump truncated");
    a.name = in.substr(pos, name_len);
    pos += name_len;
    const auto rank = take<std::uint32_t>(in, pos);
    std::uint64_t elements = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      a.shape.push_back(take<std::uint64_t>(in, pos));
      elements *= a.shape.back();
    }
    if (pos + elements * sizeof(float) > in.size()) throw Error(ErrorCode::MalformedHeader, "trace dump truncated");
    a.data.resize(elements);
    std::memcpy(a.data.data(), in.data() + pos, elements * sizeof(float));
    pos += elements * sizeof(float);
    arrays.push_back(std::move(a));
  }
  return arrays;
}

}  // namespace headscope
