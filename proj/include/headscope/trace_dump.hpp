#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "headscope/transformer.hpp"

namespace headscope {

/// One named f32 array in a trace dump.
struct DumpArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;
};

/// Binary layout: magic "HSTRACE1", u32 array count, then per array a u32
/// name length, the name bytes, u32 rank, u64 dims, and the little-endian
/// f32 payload. All integers are little-endian.
void write_trace_dump(const std::filesystem::path& path, const ForwardTrace& trace);
void write_dump_arrays(const std::filesystem::path& path, const std::vector<DumpArray>& arrays);
std::vector<DumpArray> read_trace_dump(const std::filesystem::path& path);

}  // namespace headscope
