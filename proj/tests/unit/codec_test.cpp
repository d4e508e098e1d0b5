#include <doctest.h>

#include <filesystem>

#include "hitok/error.hpp"
#include "hitok/toycodec.hpp"
#include "oracles.hpp"

using namespace hitok;

namespace {

Image image_from(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(h, w);
  for (double& v : img.planes().values()) v = u(rng);
  return img;
}

// Windowed SSIM evaluated directly: every pixel's window is the full
// truncated Gaussian, renormalized over in-bounds pixels.
double ssim_direct(const Image& a, const Image& b) {
  const double c1 = 1e-4, c2 = 9e-4, sigma = 1.5;
  double total = 0.0;
  int n = 0;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < a.height(); ++i)
      for (int j = 0; j < a.width(); ++j) {
        double ws = 0, mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int y = std::max(0, i - 5); y <= std::min(a.height() - 1, i + 5); ++y)
          for (int x = std::max(0, j - 5); x <= std::min(a.width() - 1, j + 5); ++x) {
            const double w = std::exp(-((y - i) * (y - i) + (x - j) * (x - j)) / (2 * sigma * sigma));
            const double p = a.at(c, y, x), q = b.at(c, y, x);
            ws += w, mx += w * p, my += w * q, sxx += w * p * p, syy += w * q * q, sxy += w * p * q;
          }
        mx /= ws, my /= ws, sxx = sxx / ws - mx * mx, syy = syy / ws - my * my, sxy = sxy / ws - mx * my;
        total += (2 * mx * my + c1) * (2 * sxy + c2) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
        ++n;
      }
  return total / n;
}

}  // namespace

TEST_CASE("codec basis is orthonormal and decode inverts encode on latents") {
  const PatchCodec codec(32, 11);
  const auto& b = codec.basis();
  const int p = PatchCodec::kPatchValues;
  double worst = 0.0;
  for (int r = 0; r < 32; ++r)
    for (int s = 0; s < 32; ++s) {
      double dot = 0.0;
      for (int k = 0; k < p; ++k) dot += b[r * p + k] * b[s * p + k];
      worst = std::max(worst, std::abs(dot - (r == s ? 1.0 : 0.0)));
    }
  CHECK(worst < 1e-12);
  const LatentGrid z = oracle::random_grid(32, 3, 2, 5);
  const Image img = codec.decode_linear(z);
  CHECK(img.height() == 48);
  CHECK(img.width() == 32);
  CHECK(oracle::max_abs_diff(codec.encode(img), z) < 1e-12);
  CHECK(PatchCodec(32, 11).basis() == b);
}

TEST_CASE("codec shape checks and flat images round trip") {
  const PatchCodec codec(8, 1);
  const Image a = image_from(32, 32, 3);
  CHECK(codec.encode(a).channels() == 8);
  CHECK(codec.encode(a).height() == 2);
  CHECK_THROWS_AS(codec.encode(Image(20, 32)), PreconditionError);
  // Flat images live in the span of the constant atoms, so they round trip.
  const Image flat(32, 16, 0.4);
  const Image back = codec.decode_linear(codec.encode(flat));
  CHECK(oracle::max_abs_diff(back.planes(), flat.planes()) < 1e-12);
}

TEST_CASE("PSNR follows its definition") {
  Image a(2, 2, 0.5), b(2, 2, 0.5);
  b.at(0, 0, 0) = 0.6;
  const double mse = 0.01 / 12.0;
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-12));
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK_THROWS_AS(psnr(a, Image(2, 3)), PreconditionError);
}

TEST_CASE("SSIM matches direct windowed evaluation") {
  for (const auto& [h, w] : {std::pair{2, 2}, {7, 5}, {16, 16}}) {
    const Image a = image_from(h, w, 10 + h), b = image_from(h, w, 20 + w);
    CHECK(ssim(a, b) == doctest::Approx(ssim_direct(a, b)).epsilon(1e-10));
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("degradation output size and noise statistics") {
  const Image flat(256, 256, 0.5);
  Degradation d;
  d.seed = 4;
  const Image lr = degrade(flat, d);
  CHECK(lr.height() == 64);
  CHECK(lr.width() == 64);
  double mean = 0.0, sq = 0.0;
  const auto v = lr.planes().values();
  for (double x : v) mean += x;
  mean /= v.size();
  for (double x : v) sq += (x - mean) * (x - mean);
  const double sd = std::sqrt(sq / (v.size() - 1));
  CHECK(std::abs(mean - 0.5) < 0.002);
  CHECK(sd == doctest::Approx(d.noise_sigma).epsilon(0.05));
  CHECK(degrade(flat, d) == lr);

  Degradation clean = d;
  clean.noise_sigma = 0.0;
  const Image clean_lr = degrade(flat, clean);
  for (double x : clean_lr.planes().values()) CHECK(std::abs(x - 0.5) < 1e-12);
  CHECK_THROWS_AS(degrade(Image(30, 30), d), PreconditionError);
}

TEST_CASE("gaussian blur preserves constants") {
  const Image flat(9, 13, 0.25);
  const Image blurred = gaussian_blur(flat, 2.0);
  for (double x : blurred.planes().values()) CHECK(std::abs(x - 0.25) < 1e-12);
}

TEST_CASE("synthetic images are seeded and in range") {
  const Image a = synthetic_image(64, 3);
  CHECK(a == synthetic_image(64, 3));
  CHECK_FALSE(a == synthetic_image(64, 4));
  for (double v : a.planes().values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(synthetic_corpus(3, 32, 9).size() == 3);
}

TEST_CASE("image files round trip") {
  const Image img = image_from(17, 9, 30);
  const auto dir = std::filesystem::temp_directory_path();
  write_image(img, dir / "hitok_unit.png");
  const Image png = read_image(dir / "hitok_unit.png");
  CHECK(oracle::max_abs_diff(png.planes(), img.planes()) <= 0.5 / 255.0 + 1e-12);
  write_image(img, dir / "hitok_unit.htim");
  const Image raw = read_image(dir / "hitok_unit.htim");
  CHECK(oracle::max_abs_diff(raw.planes(), img.planes()) < 1e-7);
  std::filesystem::remove(dir / "hitok_unit.png");
  std::filesystem::remove(dir / "hitok_unit.htim");
  CHECK_THROWS_AS(read_image(dir / "hitok_unit_missing.png"), IoError);
}
