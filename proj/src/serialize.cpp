#include "agsfcos/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "agsfcos/errors.hpp"

namespace agsfcos {

namespace {

constexpr std::uint32_t kMaxRank = 16;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw FormatError(".ten: truncated stream");
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(bytes[i]) << (8 * i);
  }
  return value;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kTensorMagic.data(), kTensorMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t extent : t.shape()) {
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(extent));
  }
  for (double v : t.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw FormatError(".ten: write failed");
}

Tensor read_tensor(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kTensorMagic) {
    throw FormatError(".ten: bad magic");
  }
  const auto rank = get_le<std::uint32_t>(in);
  if (rank > kMaxRank) throw FormatError(".ten: implausible rank");
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& extent : shape) {
    extent = get_le<std::uint64_t>(in);
    if (extent != 0 && count > kMaxElements / extent) {
      throw FormatError(".ten: implausible extents");
    }
    count *= extent;
  }
  std::vector<double> values(count);
  for (double& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
  return Tensor(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return read_tensor(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace agsfcos
