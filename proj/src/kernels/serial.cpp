#include <vector>

#include "hitok/kernels.hpp"
#include "kernel_ops.hpp"

namespace hitok::kernels {

std::uint32_t nearest_one(std::span<const double> query, const CodeView& codes) {
  return detail::nearest(query.data(), codes);
}

namespace serial {

void assign_nearest(std::span<const double> queries, const CodeView& codes,
                    std::span<std::uint32_t> out) {
  const std::size_t n = out.size();
  for (std::size_t q = 0; q < n; ++q) {
    out[q] = detail::nearest(queries.data() + q * codes.dim, codes);
  }
}

void resample(const LatentGrid& src, const ResampleTaps& rows, const ResampleTaps& cols,
              LatentGrid& dst) {
  std::vector<double> line(src.width());
  for (int c = 0; c < src.channels(); ++c) {
    double* plane = dst.plane(c).data();
    for (int i = 0; i < rows.target; ++i) {
      detail::resample_rows_line(src, rows, c, i, line.data());
      detail::resample_cols_line(line.data(), cols, plane + static_cast<std::size_t>(i) * cols.target);
    }
  }
}

void conv3x3(const LatentGrid& src, const PhiParams& phi, LatentGrid& dst) {
  for (int o = 0; o < src.channels(); ++o) {
    for (int i = 0; i < src.height(); ++i) {
      detail::conv3x3_line(src, phi, o, i, &dst.at(o, i, 0));
    }
  }
}

}  // namespace serial
}  // namespace hitok::kernels
