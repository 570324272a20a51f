#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "eciin/array.hpp"

// Parameter archive, all integers little-endian:
//
//   magic      8 bytes  "ECIINPAR"
//   version    u32      1
//   count      u32      number of entries
//   entries, sorted by name:
//     name_len u32, name bytes (UTF-8)
//     dtype    u8       0 = float64, 1 = float32
//     ndim     u32
//     dims     u64 x ndim
//     data     product(dims) IEEE-754 values, little-endian
namespace eciin {

enum class DType : std::uint8_t { F64 = 0, F32 = 1 };

using TensorMap = std::map<std::string, Array>;

void write_archive(std::ostream& out, const TensorMap& tensors, DType dtype = DType::F64);
TensorMap read_archive(std::istream& in);

void save_archive(const std::filesystem::path& path, const TensorMap& tensors,
                  DType dtype = DType::F64);
TensorMap load_archive(const std::filesystem::path& path);

}  // namespace eciin
