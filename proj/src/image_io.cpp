#include "agsfcos/image_io.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "agsfcos/errors.hpp"
#include "agsfcos/serialize.hpp"

namespace agsfcos {

namespace {

class PpmHeaderReader {
 public:
  PpmHeaderReader(const std::string& bytes, const std::string& origin)
      : bytes_(bytes), origin_(origin) {}

  std::size_t number() {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (1u << 24)) fail("header value too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) fail("expected a number in header");
    return value;
  }

  void expect_magic() {
    if (bytes_.size() < 2 || bytes_[0] != 'P' || bytes_[1] != '6') {
      fail("not a binary PPM (P6)");
    }
    pos_ = 2;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      fail("missing separator before raster");
    }
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(origin_ + ": " + what);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string encode_ppm(const RgbImage& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " +
                    std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

RgbImage decode_ppm(const std::string& bytes, const std::string& origin) {
  PpmHeaderReader reader(bytes, origin);
  reader.expect_magic();
  const std::size_t w = reader.number();
  const std::size_t h = reader.number();
  const std::size_t maxval = reader.number();
  if (w == 0 || h == 0) reader.fail("zero image extent");
  if (maxval == 0 || maxval > 255) reader.fail("only 8-bit PPM is supported");
  const std::size_t offset = reader.raster_offset();
  RgbImage image(w, h);
  if (bytes.size() < offset + image.pixels.size()) reader.fail("truncated raster");
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const auto v = static_cast<std::uint8_t>(bytes[offset + i]);
    image.pixels[i] = maxval == 255 ? v : static_cast<std::uint8_t>(
                                              (static_cast<unsigned>(v) * 255 + maxval / 2) / maxval);
  }
  return image;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  const std::string bytes = encode_ppm(image);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

RgbImage read_ppm(const std::filesystem::path& path) {
  return decode_ppm(slurp(path), path.string());
}

Tensor image_to_tensor(const RgbImage& image, const std::array<double, 3>& mean,
                       const std::array<double, 3>& std) {
  const std::size_t plane = image.width * image.height;
  Tensor out({3, image.height, image.width});
  auto v = out.mutable_values();
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double unit = image.pixels[i * 3 + c] / 255.0;
      v[c * plane + i] = (unit - mean[c]) / std[c];
    }
  }
  return out;
}

Tensor load_image(const std::filesystem::path& path, const std::array<double, 3>& mean,
                  const std::array<double, 3>& std) {
  const std::string ext = path.extension().string();
  if (ext == ".ppm") return image_to_tensor(read_ppm(path), mean, std);
  if (ext == ".ten") {
    Tensor t = load_tensor(path);
    if (t.rank() != 3 || t.dim(0) != 3) {
      throw FormatError(path.string() + ": expected a [3,H,W] tensor, got " +
                        shape_str(t.shape()));
    }
    return t;
  }
  throw FormatError(path.string() + ": unsupported image format '" + ext + "'");
}

Tensor hflip_image(const Tensor& image) {
  if (image.rank() != 3) throw DimensionError("hflip_image: expected [C,H,W]");
  const std::size_t rows = image.dim(0) * image.dim(1);
  const std::size_t w = image.dim(2);
  Tensor out(image.shape());
  auto src = image.values();
  auto dst = out.mutable_values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t x = 0; x < w; ++x) dst[r * w + x] = src[r * w + (w - 1 - x)];
  }
  return out;
}

Tensor stack_images(const std::vector<Tensor>& images) {
  if (images.empty()) throw DimensionError("stack_images: empty batch");
  const Shape& first = images.front().shape();
  if (first.size() != 3) throw DimensionError("stack_images: expected [C,H,W] images");
  Shape shape = {images.size(), first[0], first[1], first[2]};
  std::vector<double> data;
  data.reserve(shape_numel(shape));
  for (const Tensor& im : images) {
    if (im.shape() != first) {
      throw DimensionError("stack_images: mixed extents " + shape_str(first) + " vs " +
                           shape_str(im.shape()));
    }
    auto v = im.values();
    data.insert(data.end(), v.begin(), v.end());
  }
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace agsfcos
