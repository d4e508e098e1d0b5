#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hitok/error.hpp"

namespace hitok {

struct Extent {
  int rows = 0;
  int cols = 0;
  friend bool operator==(const Extent&, const Extent&) = default;
};

// A channels x height x width real field, stored channel-major
// (index = (c * height + i) * width + j).
class LatentGrid {
 public:
  LatentGrid() = default;
  LatentGrid(int channels, int height, int width, double fill = 0.0);
  LatentGrid(int channels, int height, int width, std::vector<double> data);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  Extent extent() const { return {height_, width_}; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int c, int i, int j) { return data_[offset(c, i, j)]; }
  double at(int c, int i, int j) const { return data_[offset(c, i, j)]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(int c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }

  // Channel vector at one spatial cell, copied out (the layout is planar).
  std::vector<double> cell(int i, int j) const;
  void set_cell(int i, int j, std::span<const double> v);

  bool all_finite() const;
  bool same_shape(const LatentGrid& other) const {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }

  LatentGrid& operator+=(const LatentGrid& other);
  LatentGrid& operator-=(const LatentGrid& other);
  LatentGrid& operator*=(double s);

  friend bool operator==(const LatentGrid&, const LatentGrid&) = default;

 private:
  std::size_t offset(int c, int i, int j) const {
    return (static_cast<std::size_t>(c) * height_ + i) * width_ + j;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

LatentGrid operator+(LatentGrid a, const LatentGrid& b);
LatentGrid operator-(LatentGrid a, const LatentGrid& b);
LatentGrid operator*(double s, LatentGrid a);

double frobenius_norm(const LatentGrid& g);
double distance(const LatentGrid& a, const LatentGrid& b);
std::vector<double> channel_means(const LatentGrid& g);

// Cubic-convolution parameter used by bicubic_upsample.
inline constexpr double kBicubicA = -0.75;

// Cubic convolution kernel W(x) with parameter a.
double cubic_kernel(double x, double a = kBicubicA);

// Separable 1-D interpolation taps: output index o reads
// index[begin[o] .. begin[o+1]) with the matching weights.
struct ResampleTaps {
  int source = 0;
  int target = 0;
  std::vector<int> begin;
  std::vector<int> index;
  std::vector<double> weight;
};

// Exact fractional-overlap box weights from `source` cells to `target` cells.
ResampleTaps area_taps(int source, int target);
// Cubic convolution, half-pixel centres, clamped edges.
ResampleTaps bicubic_taps(int source, int target, double a = kBicubicA);
// Linear interpolation, half-pixel centres, clamped edges.
ResampleTaps bilinear_taps(int source, int target);

// Mean over the half-open source region covered by each target cell.
// Requires target <= source along both axes.
LatentGrid area_downsample(const LatentGrid& g, Extent target);
// Requires target >= source along both axes; same size returns a copy.
LatentGrid bicubic_upsample(const LatentGrid& g, Extent target);
LatentGrid bilinear_upsample(const LatentGrid& g, Extent target);

// 3x3 same-padding convolution applied after upsampling a level's embeddings.
struct PhiParams {
  int channels = 0;
  std::vector<double> weight;  // [out][in][3][3]
  std::vector<double> bias;    // [out]

  static PhiParams identity(int channels);
  static PhiParams zero(int channels);
  // Every tap 1/9 from the same channel, zero bias.
  static PhiParams box(int channels);

  double& w(int out, int in, int di, int dj) {
    return weight[((static_cast<std::size_t>(out) * channels + in) * 3 + di) * 3 + dj];
  }
  double w(int out, int in, int di, int dj) const {
    return weight[((static_cast<std::size_t>(out) * channels + in) * 3 + di) * 3 + dj];
  }
  bool is_identity() const;
  friend bool operator==(const PhiParams&, const PhiParams&) = default;
};

LatentGrid phi_refine(const LatentGrid& g, const PhiParams& phi);

}  // namespace hitok
