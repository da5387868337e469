#include "sketchgrasp/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace sketchgrasp {

std::string encode_png(const Image& image) {
  if (image.width <= 0 || image.height <= 0) throw ImageError("encode_png: empty image");
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = image.width;
  png.height = image.height;
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(png, size, 0, image.rgb.data(), 0, nullptr)) {
    throw ImageError(std::string("encode_png: ") + png.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.rgb.data(), 0, nullptr)) {
    throw ImageError(std::string("encode_png: ") + png.message);
  }
  out.resize(size);
  return out;
}

Image decode_png(std::string_view bytes) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw ImageError(std::string("decode_png: ") + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  Image img(static_cast<int>(png.width), static_cast<int>(png.height));
  if (!png_image_finish_read(&png, nullptr, img.rgb.data(), 0, nullptr)) {
    png_image_free(&png);
    throw ImageError(std::string("decode_png: ") + png.message);
  }
  return img;
}

void write_png(const std::string& path, const Image& image) {
  const std::string bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Image read_png(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return decode_png(buf.str());
  } catch (const ImageError& e) {
    throw ImageError(path + ": " + e.what());
  }
}

Tensor to_tensor(const Image& image) {
  std::vector<float> v(image.rgb.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = image.rgb[i] / 255.0f;
  return Tensor::from_data({image.height, image.width, 3}, std::move(v));
}

Image from_tensor(const Tensor& t) {
  if (t.rank() != 3 || t.dim(2) != 3) throw ShapeError("from_tensor: expected H x W x 3");
  Image img(t.dim(1), t.dim(0));
  const auto v = t.data();
  for (std::size_t i = 0; i < img.rgb.size(); ++i) {
    img.rgb[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v[i], 0.0f, 1.0f) * 255.0f));
  }
  return img;
}

Letterbox letterbox(const Image& image, int size) {
  if (image.width <= 0 || image.height <= 0) throw ImageError("letterbox: empty image");
  Letterbox out{Image(size, size), double(size) / std::max(image.width, image.height)};
  if (image.width == size && image.height == size) {
    out.image = image;
    return out;
  }
  const int w = std::max(1, static_cast<int>(std::lround(image.width * out.scale)));
  const int h = std::max(1, static_cast<int>(std::lround(image.height * out.scale)));
  for (int y = 0; y < h; ++y) {
    const double sy = std::clamp((y + 0.5) / out.scale - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double fy = sy - y0;
    for (int x = 0; x < w; ++x) {
      const double sx = std::clamp((x + 0.5) / out.scale - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double fx = sx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = image.at(x0, y0)[c] * (1 - fx) + image.at(x1, y0)[c] * fx;
        const double bottom = image.at(x0, y1)[c] * (1 - fx) + image.at(x1, y1)[c] * fx;
        out.image.at(x, y)[c] = static_cast<std::uint8_t>(std::lround(top * (1 - fy) + bottom * fy));
      }
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      std::copy_n(image.at(image.width - 1 - x, y), 3, out.at(x, y));
    }
  }
  return out;
}

}  // namespace sketchgrasp
