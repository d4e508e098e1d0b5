#include "hitok/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hitok/kernels.hpp"

namespace hitok {

LatentGrid::LatentGrid(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
  require(channels > 0 && height > 0 && width > 0, "LatentGrid: dimensions must be positive");
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

LatentGrid::LatentGrid(int channels, int height, int width, std::vector<double> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  require(channels > 0 && height > 0 && width > 0, "LatentGrid: dimensions must be positive");
  require(data_.size() == static_cast<std::size_t>(channels) * height * width,
          "LatentGrid: data size does not match shape");
}

std::vector<double> LatentGrid::cell(int i, int j) const {
  std::vector<double> v(channels_);
  for (int c = 0; c < channels_; ++c) v[c] = at(c, i, j);
  return v;
}

void LatentGrid::set_cell(int i, int j, std::span<const double> v) {
  require(static_cast<int>(v.size()) == channels_, "set_cell: channel mismatch");
  for (int c = 0; c < channels_; ++c) at(c, i, j) = v[c];
}

bool LatentGrid::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

LatentGrid& LatentGrid::operator+=(const LatentGrid& other) {
  require(same_shape(other), "LatentGrid +=: shape mismatch");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
  return *this;
}

LatentGrid& LatentGrid::operator-=(const LatentGrid& other) {
  require(same_shape(other), "LatentGrid -=: shape mismatch");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= other.data_[k];
  return *this;
}

LatentGrid& LatentGrid::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

LatentGrid operator+(LatentGrid a, const LatentGrid& b) { return a += b; }
LatentGrid operator-(LatentGrid a, const LatentGrid& b) { return a -= b; }
LatentGrid operator*(double s, LatentGrid a) { return a *= s; }

double frobenius_norm(const LatentGrid& g) {
  double s = 0.0;
  for (double x : g.values()) s += x * x;
  return std::sqrt(s);
}

double distance(const LatentGrid& a, const LatentGrid& b) {
  require(a.same_shape(b), "distance: shape mismatch");
  double s = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t k = 0; k < av.size(); ++k) {
    const double d = av[k] - bv[k];
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<double> channel_means(const LatentGrid& g) {
  std::vector<double> means(g.channels());
  for (int c = 0; c < g.channels(); ++c) {
    double s = 0.0;
    for (double x : g.plane(c)) s += x;
    means[c] = s / static_cast<double>(g.plane_size());
  }
  return means;
}

double cubic_kernel(double x, double a) {
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

ResampleTaps area_taps(int source, int target) {
  require(source > 0 && target > 0, "area_taps: sizes must be positive");
  ResampleTaps taps{source, target, {0}, {}, {}};
  // Work in units of 1/(source*target): output o spans [o*S, (o+1)*S) and
  // source cell k spans [k*T, (k+1)*T), so overlaps are exact integers.
  const long long S = source;
  const long long T = target;
  for (long long o = 0; o < T; ++o) {
    const long long lo = o * S;
    const long long hi = (o + 1) * S;
    for (long long k = lo / T; k < source && k * T < hi; ++k) {
      const long long overlap = std::min(hi, (k + 1) * T) - std::max(lo, k * T);
      if (overlap <= 0) continue;
      taps.index.push_back(static_cast<int>(k));
      taps.weight.push_back(static_cast<double>(overlap) / static_cast<double>(S));
    }
    taps.begin.push_back(static_cast<int>(taps.index.size()));
  }
  return taps;
}

ResampleTaps bicubic_taps(int source, int target, double a) {
  require(source > 0 && target > 0, "bicubic_taps: sizes must be positive");
  ResampleTaps taps{source, target, {0}, {}, {}};
  const double scale = static_cast<double>(source) / static_cast<double>(target);
  for (int o = 0; o < target; ++o) {
    const double x = (o + 0.5) * scale - 0.5;
    const double x0 = std::floor(x);
    const double t = x - x0;
    const double w[4] = {cubic_kernel(t + 1.0, a), cubic_kernel(t, a), cubic_kernel(1.0 - t, a),
                         cubic_kernel(2.0 - t, a)};
    for (int k = 0; k < 4; ++k) {
      const int idx = std::clamp(static_cast<int>(x0) - 1 + k, 0, source - 1);
      taps.index.push_back(idx);
      taps.weight.push_back(w[k]);
    }
    taps.begin.push_back(static_cast<int>(taps.index.size()));
  }
  return taps;
}

ResampleTaps bilinear_taps(int source, int target) {
  require(source > 0 && target > 0, "bilinear_taps: sizes must be positive");
  ResampleTaps taps{source, target, {0}, {}, {}};
  const double scale = static_cast<double>(source) / static_cast<double>(target);
  for (int o = 0; o < target; ++o) {
    const double x = std::max(0.0, (o + 0.5) * scale - 0.5);
    const int x0 = std::min(static_cast<int>(x), source - 1);
    const int x1 = std::min(x0 + 1, source - 1);
    const double lambda = x - x0;
    taps.index.push_back(x0);
    taps.weight.push_back(1.0 - lambda);
    taps.index.push_back(x1);
    taps.weight.push_back(lambda);
    taps.begin.push_back(static_cast<int>(taps.index.size()));
  }
  return taps;
}

namespace {

LatentGrid apply_taps(const LatentGrid& g, const ResampleTaps& rows, const ResampleTaps& cols) {
  LatentGrid out(g.channels(), rows.target, cols.target);
  kernels::parallel::resample(g, rows, cols, out);
  return out;
}

}  // namespace

LatentGrid area_downsample(const LatentGrid& g, Extent target) {
  require(target.rows >= 1 && target.cols >= 1, "area_downsample: target must be positive");
  require(target.rows <= g.height() && target.cols <= g.width(),
          "area_downsample: target " + std::to_string(target.rows) + "x" +
              std::to_string(target.cols) + " larger than source");
  if (target == g.extent()) return g;
  return apply_taps(g, area_taps(g.height(), target.rows), area_taps(g.width(), target.cols));
}

LatentGrid bicubic_upsample(const LatentGrid& g, Extent target) {
  require(target.rows >= g.height() && target.cols >= g.width(),
          "bicubic_upsample: target smaller than source");
  if (target == g.extent()) return g;
  return apply_taps(g, bicubic_taps(g.height(), target.rows),
                    bicubic_taps(g.width(), target.cols));
}

LatentGrid bilinear_upsample(const LatentGrid& g, Extent target) {
  require(target.rows >= g.height() && target.cols >= g.width(),
          "bilinear_upsample: target smaller than source");
  if (target == g.extent()) return g;
  return apply_taps(g, bilinear_taps(g.height(), target.rows),
                    bilinear_taps(g.width(), target.cols));
}

PhiParams PhiParams::zero(int channels) {
  require(channels > 0, "PhiParams: channels must be positive");
  PhiParams p;
  p.channels = channels;
  p.weight.assign(static_cast<std::size_t>(channels) * channels * 9, 0.0);
  p.bias.assign(channels, 0.0);
  return p;
}

PhiParams PhiParams::identity(int channels) {
  PhiParams p = zero(channels);
  for (int c = 0; c < channels; ++c) p.w(c, c, 1, 1) = 1.0;
  return p;
}

PhiParams PhiParams::box(int channels) {
  PhiParams p = zero(channels);
  for (int c = 0; c < channels; ++c)
    for (int di = 0; di < 3; ++di)
      for (int dj = 0; dj < 3; ++dj) p.w(c, c, di, dj) = 1.0 / 9.0;
  return p;
}

bool PhiParams::is_identity() const {
  return *this == identity(channels);
}

LatentGrid phi_refine(const LatentGrid& g, const PhiParams& phi) {
  require(phi.channels == g.channels(), "phi_refine: kernel channels " +
                                            std::to_string(phi.channels) + " != grid channels " +
                                            std::to_string(g.channels()));
  if (phi.is_identity()) return g;
  LatentGrid out(g.channels(), g.height(), g.width());
  kernels::parallel::conv3x3(g, phi, out);
  return out;
}

}  // namespace hitok
