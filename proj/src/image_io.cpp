#include <cmath>
#include <string>

#include <png.h>

#include "binary_io.hpp"
#include "hitok/toycodec.hpp"

namespace hitok {

Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw IoError("cannot read PNG " + path.string() + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&png);
    throw IoError("cannot decode PNG " + path.string() + ": " + png.message);
  }
  const int h = static_cast<int>(png.height);
  const int w = static_cast<int>(png.width);
  Image img(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < 3; ++c)
        img.at(c, i, j) = buffer[(static_cast<std::size_t>(i) * w + j) * 3 + c] / 255.0;
  return img;
}

void write_png(const Image& img, const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width());
  png.height = static_cast<png_uint_32>(img.height());
  png.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(static_cast<std::size_t>(img.height()) * img.width() * 3);
  for (int i = 0; i < img.height(); ++i)
    for (int j = 0; j < img.width(); ++j)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(c, i, j), 0.0, 1.0);
        buffer[(static_cast<std::size_t>(i) * img.width() + j) * 3 + c] =
            static_cast<png_byte>(std::lround(v * 255.0));
      }
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path.string() + ": " + png.message);
}

Image read_raw(const std::filesystem::path& path) {
  io::Reader r(path);
  r.expect_magic("HTIM");
  if (r.u32() != 1) throw IoError("unsupported raw image version in " + path.string());
  const std::uint32_t channels = r.u32();
  const std::uint32_t h = r.u32();
  const std::uint32_t w = r.u32();
  if (channels != 3 || h == 0 || w == 0 || static_cast<std::uint64_t>(h) * w > (1ull << 28))
    throw IoError("corrupt raw image header in " + path.string());
  Image img(static_cast<int>(h), static_cast<int>(w));
  for (double& v : img.planes().values()) v = r.f32();
  return img;
}

void write_raw(const Image& img, const std::filesystem::path& path) {
  io::Writer w(path);
  w.magic("HTIM");
  w.u32(1);
  w.u32(3);
  w.u32(static_cast<std::uint32_t>(img.height()));
  w.u32(static_cast<std::uint32_t>(img.width()));
  for (double v : img.planes().values()) w.f32(v);
  w.finish();
}

Image read_image(const std::filesystem::path& path) {
  return path.extension() == ".png" ? read_png(path) : read_raw(path);
}

void write_image(const Image& img, const std::filesystem::path& path) {
  if (path.extension() == ".png") {
    write_png(img, path);
  } else {
    write_raw(img, path);
  }
}

}  // namespace hitok
