#pragma once

// Per-element bodies shared by the serial and OpenMP kernels so both
// evaluate every output with the same operation order.

#include <cstdint>
#include <span>

#include "hitok/grid.hpp"
#include "hitok/kernels.hpp"

namespace hitok::kernels::detail {

inline double squared_l2(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int d = 0; d < dim; ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

inline double dot(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int d = 0; d < dim; ++d) s += a[d] * b[d];
  return s;
}

inline std::uint32_t nearest(const double* q, const CodeView& codes) {
  const int dim = codes.dim;
  const double* rows = codes.rows.data();
  std::uint32_t best = 0;
  if (codes.metric == Metric::L2) {
    double best_d = squared_l2(q, rows, dim);
    for (int k = 1; k < codes.count; ++k) {
      const double d = squared_l2(q, rows + static_cast<std::size_t>(k) * dim, dim);
      if (d < best_d) {
        best_d = d;
        best = static_cast<std::uint32_t>(k);
      }
    }
    return best;
  }
  // Cosine: the query norm is a positive constant across codes and does not
  // change the argmax, so only code norms are divided out.
  double best_s = dot(q, rows, dim) * codes.inverse_norms[0];
  for (int k = 1; k < codes.count; ++k) {
    const double s =
        dot(q, rows + static_cast<std::size_t>(k) * dim, dim) * codes.inverse_norms[k];
    if (s > best_s) {
      best_s = s;
      best = static_cast<std::uint32_t>(k);
    }
  }
  return best;
}

// tmp row (c, i) of the vertical pass.
inline void resample_rows_line(const LatentGrid& src, const ResampleTaps& rows, int c, int i,
                               double* out) {
  const int w = src.width();
  for (int x = 0; x < w; ++x) out[x] = 0.0;
  const double* plane = src.plane(c).data();
  for (int t = rows.begin[i]; t < rows.begin[i + 1]; ++t) {
    const double wt = rows.weight[t];
    const double* line = plane + static_cast<std::size_t>(rows.index[t]) * w;
    for (int x = 0; x < w; ++x) out[x] += wt * line[x];
  }
}

inline void resample_cols_line(const double* in, const ResampleTaps& cols, double* out) {
  for (int j = 0; j < cols.target; ++j) {
    double s = 0.0;
    for (int t = cols.begin[j]; t < cols.begin[j + 1]; ++t) s += cols.weight[t] * in[cols.index[t]];
    out[j] = s;
  }
}

inline void conv3x3_line(const LatentGrid& src, const PhiParams& phi, int o, int i, double* out) {
  const int h = src.height();
  const int w = src.width();
  const int channels = src.channels();
  for (int j = 0; j < w; ++j) out[j] = phi.bias[o];
  for (int c = 0; c < channels; ++c) {
    const double* plane = src.plane(c).data();
    for (int di = 0; di < 3; ++di) {
      const int si = i + di - 1;
      if (si < 0 || si >= h) continue;
      const double* line = plane + static_cast<std::size_t>(si) * w;
      for (int dj = 0; dj < 3; ++dj) {
        const double wt = phi.w(o, c, di, dj);
        if (wt == 0.0) continue;
        const int shift = dj - 1;
        const int j0 = shift < 0 ? 1 : 0;
        const int j1 = shift > 0 ? w - 1 : w;
        for (int j = j0; j < j1; ++j) out[j] += wt * line[j + shift];
      }
    }
  }
}

}  // namespace hitok::kernels::detail
