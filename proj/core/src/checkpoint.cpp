#include "eciin/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "eciin/errors.hpp"

namespace eciin {

namespace {

constexpr char kMagic[8] = {'E', 'C', 'I', 'I', 'N', 'P', 'A', 'R'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw DataError("archive truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace

void write_archive(std::ostream& out, const TensorMap& tensors, DType dtype) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, array] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(array.ndim()));
    for (auto d : array.shape()) put<std::uint64_t>(out, d);
    for (double v : array.data()) {
      if (dtype == DType::F64) {
        put<double>(out, v);
      } else {
        put<float>(out, static_cast<float>(v));
      }
    }
  }
  if (!out) throw DataError("failed writing parameter archive");
}

TensorMap read_archive(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw DataError("not a parameter archive (bad magic)");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw DataError("unsupported archive version " + std::to_string(version));
  const auto count = get<std::uint32_t>(in);
  TensorMap tensors;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw DataError("archive truncated in entry name");
    const auto tag = get<std::uint8_t>(in);
    if (tag > 1) throw DataError("entry '" + name + "': unknown dtype tag " + std::to_string(tag));
    const auto ndim = get<std::uint32_t>(in);
    if (ndim == 0 || ndim > 16) throw DataError("entry '" + name + "': bad rank " + std::to_string(ndim));
    Shape shape(ndim);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in));
    std::vector<double> data(numel(shape));
    for (auto& v : data) {
      v = tag == 0 ? get<double>(in) : static_cast<double>(get<float>(in));
    }
    tensors.emplace(std::move(name), Array(std::move(shape), std::move(data)));
  }
  return tensors;
}

void save_archive(const std::filesystem::path& path, const TensorMap& tensors, DType dtype) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_archive(out, tensors, dtype);
}

TensorMap load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_archive(in);
}

}  // namespace eciin
