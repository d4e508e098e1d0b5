#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hitok/grid.hpp"

namespace hitok {

// Planar RGB image with values nominally in [0, 1].
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int height, int width, double fill = 0.0) : planes_(kChannels, height, width, fill) {}
  explicit Image(LatentGrid planes);

  int height() const { return planes_.height(); }
  int width() const { return planes_.width(); }
  double& at(int c, int i, int j) { return planes_.at(c, i, j); }
  double at(int c, int i, int j) const { return planes_.at(c, i, j); }
  const LatentGrid& planes() const { return planes_; }
  LatentGrid& planes() { return planes_; }
  bool empty() const { return planes_.empty(); }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  LatentGrid planes_;
};

Image clamp01(Image img);
Image resize_area(const Image& img, int height, int width);
Image resize_bilinear(const Image& img, int height, int width);

// Stand-in autoencoder: every 16x16x3 patch is projected onto n_z
// orthonormal directions (low-frequency DCT atoms in an opponent colour
// space, mixed by a seeded rotation). Decoding applies the transpose.
class PatchCodec {
 public:
  static constexpr int kPatch = 16;
  static constexpr int kPatchValues = kPatch * kPatch * Image::kChannels;

  explicit PatchCodec(int latent_channels = 32, std::uint64_t seed = 0);

  int latent_channels() const { return latent_channels_; }
  std::uint64_t seed() const { return seed_; }
  // latent_channels x kPatchValues, row-major; rows are orthonormal.
  const std::vector<double>& basis() const { return basis_; }

  LatentGrid encode(const Image& img) const;
  // Transpose projection without clamping.
  Image decode_linear(const LatentGrid& z) const;
  Image decode(const LatentGrid& z) const { return clamp01(decode_linear(z)); }

 private:
  int latent_channels_;
  std::uint64_t seed_;
  std::vector<double> basis_;
};

LatentGrid encode_image(const Image& img, const PatchCodec& codec);
Image decode_latent(const LatentGrid& z, const PatchCodec& codec);

struct Degradation {
  double blur_sigma = 1.2;
  int factor = 4;
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;
};

// Gaussian blur, area downsample by `factor`, additive Gaussian noise, clamp.
Image degrade(const Image& img, const Degradation& d);
Image gaussian_blur(const Image& img, double sigma);

inline constexpr double kPsnrCap = 100.0;
double psnr(const Image& a, const Image& b);
// Mean SSIM over pixels and channels; 11x11 Gaussian window (sigma 1.5),
// truncated and renormalized at the borders; K1 = 0.01, K2 = 0.03, peak 1.
double ssim(const Image& a, const Image& b);

// Seeded procedural image: gradient background, Gabor textures and
// soft-edged convex polygons, with feature sizes relative to `size`.
Image synthetic_image(int size, std::uint64_t seed);
std::vector<Image> synthetic_corpus(int count, int size, std::uint64_t seed);

// 8-bit RGB PNG.
Image read_png(const std::filesystem::path& path);
void write_png(const Image& img, const std::filesystem::path& path);
// "HTIM", u32 version, u32 channels, u32 height, u32 width, float32 planar LE.
Image read_raw(const std::filesystem::path& path);
void write_raw(const Image& img, const std::filesystem::path& path);
// Chooses PNG or raw by extension (".png" vs anything else).
Image read_image(const std::filesystem::path& path);
void write_image(const Image& img, const std::filesystem::path& path);

}  // namespace hitok
