#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sketchgrasp/tensor.hpp"

namespace sketchgrasp {

/// 8-bit RGB image, row-major, 3 bytes per pixel.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0) : width(w), height(h), rgb(std::size_t(w) * h * 3, fill) {}
  std::uint8_t* at(int x, int y) { return rgb.data() + (std::size_t(y) * width + x) * 3; }
  const std::uint8_t* at(int x, int y) const { return rgb.data() + (std::size_t(y) * width + x) * 3; }
  friend bool operator==(const Image&, const Image&) = default;
};

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_png(const Image& image);
Image decode_png(std::string_view bytes);
void write_png(const std::string& path, const Image& image);
Image read_png(const std::string& path);

/// [H x W x 3] tensor with values in [0, 1].
Tensor to_tensor(const Image& image);
Image from_tensor(const Tensor& t);

/// Aspect-preserving bilinear fit into a size x size canvas, padded with black
/// at the bottom/right. Source pixel (x, y) lands at (x * scale, y * scale).
struct Letterbox {
  Image image;
  double scale = 1.0;
};
Letterbox letterbox(const Image& image, int size);

Image flip_horizontal(const Image& image);

}  // namespace sketchgrasp
