#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "agsfcos/tensor.hpp"

namespace agsfcos {

// Interleaved 8-bit RGB raster.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0) {}
  std::uint8_t* at(std::size_t x, std::size_t y) { return &pixels[(y * width + x) * 3]; }
  const std::uint8_t* at(std::size_t x, std::size_t y) const {
    return &pixels[(y * width + x) * 3];
  }
};

std::string encode_ppm(const RgbImage& image);
RgbImage decode_ppm(const std::string& bytes, const std::string& origin = "<memory>");
void write_ppm(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_ppm(const std::filesystem::path& path);

// [3,H,W] tensor with values in [0,1] normalized per channel.
Tensor image_to_tensor(const RgbImage& image, const std::array<double, 3>& mean,
                       const std::array<double, 3>& std);

// Loads a P6 `.ppm` (scaled and normalized) or a `.ten` tensor (returned as
// stored, which must be [3,H,W]). Anything else raises FormatError.
Tensor load_image(const std::filesystem::path& path, const std::array<double, 3>& mean,
                  const std::array<double, 3>& std);

// Mirror a [3,H,W] tensor along W.
Tensor hflip_image(const Tensor& image);

// Stack equally-sized [3,H,W] tensors into [N,3,H,W].
Tensor stack_images(const std::vector<Tensor>& images);

}  // namespace agsfcos
