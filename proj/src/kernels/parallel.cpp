#include <vector>

#include "hitok/kernels.hpp"
#include "kernel_ops.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hitok::kernels {

void set_thread_count(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace parallel {

void assign_nearest(std::span<const double> queries, const CodeView& codes,
                    std::span<std::uint32_t> out) {
  const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t q = 0; q < n; ++q) {
    out[q] = detail::nearest(queries.data() + q * codes.dim, codes);
  }
}

void resample(const LatentGrid& src, const ResampleTaps& rows, const ResampleTaps& cols,
              LatentGrid& dst) {
  const int channels = src.channels();
  const int lines = channels * rows.target;
#pragma omp parallel
  {
    std::vector<double> line(src.width());
#pragma omp for schedule(static)
    for (int t = 0; t < lines; ++t) {
      const int c = t / rows.target;
      const int i = t % rows.target;
      detail::resample_rows_line(src, rows, c, i, line.data());
      detail::resample_cols_line(line.data(), cols,
                                 dst.plane(c).data() + static_cast<std::size_t>(i) * cols.target);
    }
  }
}

void conv3x3(const LatentGrid& src, const PhiParams& phi, LatentGrid& dst) {
  const int lines = src.channels() * src.height();
#pragma omp parallel for schedule(static)
  for (int t = 0; t < lines; ++t) {
    const int o = t / src.height();
    const int i = t % src.height();
    detail::conv3x3_line(src, phi, o, i, &dst.at(o, i, 0));
  }
}

}  // namespace parallel
}  // namespace hitok::kernels
