#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>

#include "agsfcos/tensor.hpp"

namespace agsfcos {

// `.ten` layout: 8-byte magic, u32 rank, rank x u64 extents, f64 payload,
// all little-endian.
inline constexpr std::array<char, 8> kTensorMagic = {'A', 'G', 'S', 'T',
                                                     'E', 'N', 'S', '1'};

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace agsfcos
