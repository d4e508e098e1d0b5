#include "hitok/toycodec.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

namespace hitok {

Image::Image(LatentGrid planes) : planes_(std::move(planes)) {
  require(planes_.channels() == kChannels, "Image: expected 3 channels");
}

Image clamp01(Image img) {
  for (double& v : img.planes().values()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

Image resize_area(const Image& img, int height, int width) {
  return Image(area_downsample(img.planes(), {height, width}));
}

Image resize_bilinear(const Image& img, int height, int width) {
  return Image(bilinear_upsample(img.planes(), {height, width}));
}

namespace {

// Orthonormal colour transform: luma then two opponent axes.
constexpr double kInvSqrt3 = 0.57735026918962576451;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt6 = 0.40824829046386301637;
constexpr std::array<std::array<double, 3>, 3> kColour = {{
    {kInvSqrt3, kInvSqrt3, kInvSqrt3},
    {kInvSqrt2, 0.0, -kInvSqrt2},
    {kInvSqrt6, -2.0 * kInvSqrt6, kInvSqrt6},
}};

double dct_atom(int u, int x) {
  const double n = PatchCodec::kPatch;
  const double alpha = u == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
  return alpha * std::cos(std::numbers::pi * (2.0 * x + 1.0) * u / (2.0 * n));
}

// Low-frequency (u, v) pairs ordered by u + v, then u.
std::vector<std::pair<int, int>> zigzag(int count) {
  std::vector<std::pair<int, int>> out;
  for (int s = 0; static_cast<int>(out.size()) < count && s <= 2 * (PatchCodec::kPatch - 1); ++s) {
    for (int u = 0; u <= s && static_cast<int>(out.size()) < count; ++u) {
      const int v = s - u;
      if (u < PatchCodec::kPatch && v < PatchCodec::kPatch) out.emplace_back(u, v);
    }
  }
  return out;
}

// Seeded orthogonal matrix (Gram-Schmidt on Gaussian rows).
std::vector<double> random_rotation(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> q(static_cast<std::size_t>(n) * n);
  for (double& x : q) x = normal(rng);
  for (int i = 0; i < n; ++i) {
    double* row = q.data() + static_cast<std::size_t>(i) * n;
    for (int pass = 0; pass < 2; ++pass) {
      for (int k = 0; k < i; ++k) {
        const double* prev = q.data() + static_cast<std::size_t>(k) * n;
        double d = 0.0;
        for (int j = 0; j < n; ++j) d += row[j] * prev[j];
        for (int j = 0; j < n; ++j) row[j] -= d * prev[j];
      }
    }
    double norm = 0.0;
    for (int j = 0; j < n; ++j) norm += row[j] * row[j];
    norm = std::sqrt(norm);
    for (int j = 0; j < n; ++j) row[j] /= norm;
  }
  return q;
}

}  // namespace

PatchCodec::PatchCodec(int latent_channels, std::uint64_t seed)
    : latent_channels_(latent_channels), seed_(seed) {
  require(latent_channels >= 3 && latent_channels <= kPatchValues,
          "PatchCodec: latent channels must lie in [3, 768]");
  const int chroma = latent_channels / 4;
  const int luma = latent_channels - 2 * chroma;
  std::vector<double> atoms;
  atoms.reserve(static_cast<std::size_t>(latent_channels) * kPatchValues);
  auto add_atoms = [&](int colour, int count) {
    for (auto [u, v] : zigzag(count)) {
      for (int c = 0; c < Image::kChannels; ++c)
        for (int y = 0; y < kPatch; ++y)
          for (int x = 0; x < kPatch; ++x) atoms.push_back(kColour[colour][c] * dct_atom(u, y) * dct_atom(v, x));
    }
  };
  add_atoms(0, luma);
  add_atoms(1, chroma);
  add_atoms(2, chroma);

  const auto rot = random_rotation(latent_channels, seed);
  basis_.assign(atoms.size(), 0.0);
  for (int i = 0; i < latent_channels; ++i)
    for (int k = 0; k < latent_channels; ++k) {
      const double r = rot[static_cast<std::size_t>(i) * latent_channels + k];
      const double* src = atoms.data() + static_cast<std::size_t>(k) * kPatchValues;
      double* dst = basis_.data() + static_cast<std::size_t>(i) * kPatchValues;
      for (int p = 0; p < kPatchValues; ++p) dst[p] += r * src[p];
    }
}

LatentGrid PatchCodec::encode(const Image& img) const {
  require(img.height() % kPatch == 0 && img.width() % kPatch == 0,
          "encode_image: dimensions " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
              " not divisible by 16");
  const int rows = img.height() / kPatch;
  const int cols = img.width() / kPatch;
  LatentGrid z(latent_channels_, rows, cols);
  const int cells = rows * cols;
#pragma omp parallel
  {
    std::vector<double> patch(kPatchValues);
#pragma omp for schedule(static)
    for (int cell = 0; cell < cells; ++cell) {
      const int pi = cell / cols;
      const int pj = cell % cols;
      for (int c = 0; c < Image::kChannels; ++c)
        for (int y = 0; y < kPatch; ++y)
          for (int x = 0; x < kPatch; ++x)
            patch[(c * kPatch + y) * kPatch + x] = img.at(c, pi * kPatch + y, pj * kPatch + x);
      for (int k = 0; k < latent_channels_; ++k) {
        const double* b = basis_.data() + static_cast<std::size_t>(k) * kPatchValues;
        double s = 0.0;
        for (int p = 0; p < kPatchValues; ++p) s += b[p] * patch[p];
        z.at(k, pi, pj) = s;
      }
    }
  }
  return z;
}

Image PatchCodec::decode_linear(const LatentGrid& z) const {
  require(z.channels() == latent_channels_, "decode_latent: channel mismatch");
  Image img(z.height() * kPatch, z.width() * kPatch);
  const int cells = z.height() * z.width();
#pragma omp parallel
  {
    std::vector<double> patch(kPatchValues);
#pragma omp for schedule(static)
    for (int cell = 0; cell < cells; ++cell) {
      const int pi = cell / z.width();
      const int pj = cell % z.width();
      std::fill(patch.begin(), patch.end(), 0.0);
      for (int k = 0; k < latent_channels_; ++k) {
        const double coef = z.at(k, pi, pj);
        const double* b = basis_.data() + static_cast<std::size_t>(k) * kPatchValues;
        for (int p = 0; p < kPatchValues; ++p) patch[p] += coef * b[p];
      }
      for (int c = 0; c < Image::kChannels; ++c)
        for (int y = 0; y < kPatch; ++y)
          for (int x = 0; x < kPatch; ++x)
            img.at(c, pi * kPatch + y, pj * kPatch + x) = patch[(c * kPatch + y) * kPatch + x];
    }
  }
  return img;
}

LatentGrid encode_image(const Image& img, const PatchCodec& codec) { return codec.encode(img); }
Image decode_latent(const LatentGrid& z, const PatchCodec& codec) { return codec.decode(z); }

namespace {

std::vector<double> gaussian_weights(double sigma, int radius) {
  std::vector<double> w(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k) w[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
  return w;
}

// Separable filter; out-of-range taps are dropped and the remaining weights
// renormalized (or, with `clamp_edges`, redirected to the nearest edge pixel).
LatentGrid separable_filter(const LatentGrid& g, const std::vector<double>& w, bool clamp_edges) {
  const int radius = static_cast<int>(w.size() / 2);
  const int h = g.height();
  const int wd = g.width();
  LatentGrid tmp(g.channels(), h, wd);
  LatentGrid out(g.channels(), h, wd);
  for (int c = 0; c < g.channels(); ++c) {
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < wd; ++j) {
        double s = 0.0, norm = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          int jj = j + k;
          if (jj < 0 || jj >= wd) {
            if (!clamp_edges) continue;
            jj = std::clamp(jj, 0, wd - 1);
          }
          s += w[k + radius] * g.at(c, i, jj);
          norm += w[k + radius];
        }
        tmp.at(c, i, j) = s / norm;
      }
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < wd; ++j) {
        double s = 0.0, norm = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          int ii = i + k;
          if (ii < 0 || ii >= h) {
            if (!clamp_edges) continue;
            ii = std::clamp(ii, 0, h - 1);
          }
          s += w[k + radius] * tmp.at(c, ii, j);
          norm += w[k + radius];
        }
        out.at(c, i, j) = s / norm;
      }
  }
  return out;
}

}  // namespace

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  return Image(separable_filter(img.planes(), gaussian_weights(sigma, radius), true));
}

Image degrade(const Image& img, const Degradation& d) {
  require(d.factor >= 1, "degrade: factor must be positive");
  require(img.height() % d.factor == 0 && img.width() % d.factor == 0,
          "degrade: image size not divisible by factor " + std::to_string(d.factor));
  Image out = gaussian_blur(img, d.blur_sigma);
  if (d.factor > 1) out = resize_area(out, img.height() / d.factor, img.width() / d.factor);
  if (d.noise_sigma > 0.0) {
    std::mt19937_64 rng(d.seed);
    std::normal_distribution<double> normal(0.0, d.noise_sigma);
    for (double& v : out.planes().values()) v = std::clamp(v + normal(rng), 0.0, 1.0);
  }
  return out;
}

double psnr(const Image& a, const Image& b) {
  require(a.planes().same_shape(b.planes()), "psnr: shape mismatch");
  const double d = distance(a.planes(), b.planes());
  const double mse = d * d / static_cast<double>(a.planes().size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  require(a.planes().same_shape(b.planes()), "ssim: shape mismatch");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const auto w = gaussian_weights(1.5, 5);
  const LatentGrid& x = a.planes();
  const LatentGrid& y = b.planes();
  LatentGrid xx = x, yy = y, xy = x;
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t k = 0; k < xv.size(); ++k) {
    xx.values()[k] = xv[k] * xv[k];
    yy.values()[k] = yv[k] * yv[k];
    xy.values()[k] = xv[k] * yv[k];
  }
  const LatentGrid mx = separable_filter(x, w, false);
  const LatentGrid my = separable_filter(y, w, false);
  const LatentGrid sxx = separable_filter(xx, w, false);
  const LatentGrid syy = separable_filter(yy, w, false);
  const LatentGrid sxy = separable_filter(xy, w, false);
  double total = 0.0;
  for (std::size_t k = 0; k < xv.size(); ++k) {
    const double ux = mx.values()[k], uy = my.values()[k];
    const double vx = sxx.values()[k] - ux * ux;
    const double vy = syy.values()[k] - uy * uy;
    const double cov = sxy.values()[k] - ux * uy;
    total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(xv.size());
}

Image synthetic_image(int size, std::uint64_t seed) {
  require(size > 0, "synthetic_image: size must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };
  const double s = size;

  std::array<double, 3> c0{}, c1{};
  for (auto& v : c0) v = range(0.15, 0.85);
  for (auto& v : c1) v = range(0.15, 0.85);
  const double angle = range(0.0, 2.0 * std::numbers::pi);
  const double gx = std::cos(angle), gy = std::sin(angle);

  struct Gabor {
    double cx, cy, sigma, kx, ky, phase, amp;
    std::array<double, 3> colour;
  };
  std::vector<Gabor> gabors(2);
  for (auto& g : gabors) {
    g.cx = range(0.2, 0.8) * s;
    g.cy = range(0.2, 0.8) * s;
    g.sigma = range(0.12, 0.3) * s;
    const double wavelength = range(s / 10.0, s / 4.0);
    const double th = range(0.0, std::numbers::pi);
    g.kx = 2.0 * std::numbers::pi / wavelength * std::cos(th);
    g.ky = 2.0 * std::numbers::pi / wavelength * std::sin(th);
    g.phase = range(0.0, 2.0 * std::numbers::pi);
    g.amp = range(0.06, 0.14);
    for (auto& v : g.colour) v = range(0.3, 1.0);
  }

  struct Polygon {
    std::vector<std::array<double, 2>> pts;
    std::array<double, 3> colour;
    double alpha;
  };
  std::vector<Polygon> polys(3);
  for (auto& p : polys) {
    const double cx = range(0.15, 0.85) * s, cy = range(0.15, 0.85) * s;
    const double radius = range(0.1, 0.25) * s;
    const int n = 3 + static_cast<int>(uni(rng) * 4.0);
    std::vector<double> angles(n);
    for (auto& a : angles) a = range(0.0, 2.0 * std::numbers::pi);
    std::sort(angles.begin(), angles.end());
    for (double a : angles) p.pts.push_back({cx + radius * std::cos(a), cy + radius * std::sin(a)});
    for (auto& v : p.colour) v = range(0.05, 0.95);
    p.alpha = range(0.5, 0.85);
  }
  const double softness = std::max(1.0, s / 96.0);

  Image img(size, size);
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double x = j + 0.5, y = i + 0.5;
      const double t = std::clamp(0.5 + ((x / s - 0.5) * gx + (y / s - 0.5) * gy), 0.0, 1.0);
      std::array<double, 3> px{};
      for (int c = 0; c < 3; ++c) px[c] = (1.0 - t) * c0[c] + t * c1[c];
      for (const auto& g : gabors) {
        const double dx = x - g.cx, dy = y - g.cy;
        const double env = std::exp(-(dx * dx + dy * dy) / (2.0 * g.sigma * g.sigma));
        const double wave = std::cos(g.kx * dx + g.ky * dy + g.phase);
        for (int c = 0; c < 3; ++c) px[c] += g.amp * env * wave * g.colour[c];
      }
      for (const auto& p : polys) {
        // Signed distance to a convex polygon (positive inside), via edge lines.
        double d = std::numeric_limits<double>::infinity();
        const std::size_t n = p.pts.size();
        for (std::size_t k = 0; k < n; ++k) {
          const auto& a = p.pts[k];
          const auto& b = p.pts[(k + 1) % n];
          const double ex = b[0] - a[0], ey = b[1] - a[1];
          const double len = std::hypot(ex, ey);
          if (len == 0.0) continue;
          d = std::min(d, ((x - a[0]) * ey - (y - a[1]) * ex) / len * -1.0);
        }
        const double u = std::clamp((d + softness) / (2.0 * softness), 0.0, 1.0);
        const double cover = u * u * (3.0 - 2.0 * u) * p.alpha;
        for (int c = 0; c < 3; ++c) px[c] = (1.0 - cover) * px[c] + cover * p.colour[c];
      }
      for (int c = 0; c < 3; ++c) img.at(c, i, j) = std::clamp(px[c], 0.0, 1.0);
    }
  }
  return img;
}

std::vector<Image> synthetic_corpus(int count, int size, std::uint64_t seed) {
  std::vector<Image> out(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < count; ++k) out[k] = synthetic_image(size, seed * 1000003ull + static_cast<std::uint64_t>(k));
  return out;
}

}  // namespace hitok
