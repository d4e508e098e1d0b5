#pragma once

// Data-parallel inner loops. `serial` is the reference implementation kept
// for testing and benchmarking; `parallel` is the OpenMP build of the same
// arithmetic (identical per-element evaluation order, so results are
// bit-identical for any thread count). Library code calls `parallel`.

#include <cstdint>
#include <span>

#include "hitok/grid.hpp"

namespace hitok {

enum class Metric { L2, Cosine };

namespace kernels {

// Row-major K x dim code matrix. `inverse_norms` is only read for Cosine.
struct CodeView {
  std::span<const double> rows;
  std::span<const double> inverse_norms;
  int count = 0;
  int dim = 0;
  Metric metric = Metric::L2;
};

// Best code for one query; ties go to the smallest index. Under Cosine a
// zero query scores 0 against every code and therefore maps to index 0.
std::uint32_t nearest_one(std::span<const double> query, const CodeView& codes);

namespace serial {
// queries: row-major n x dim.
void assign_nearest(std::span<const double> queries, const CodeView& codes,
                    std::span<std::uint32_t> out);
void resample(const LatentGrid& src, const ResampleTaps& rows, const ResampleTaps& cols,
              LatentGrid& dst);
void conv3x3(const LatentGrid& src, const PhiParams& phi, LatentGrid& dst);
}  // namespace serial

namespace parallel {
void assign_nearest(std::span<const double> queries, const CodeView& codes,
                    std::span<std::uint32_t> out);
void resample(const LatentGrid& src, const ResampleTaps& rows, const ResampleTaps& cols,
              LatentGrid& dst);
void conv3x3(const LatentGrid& src, const PhiParams& phi, LatentGrid& dst);
}  // namespace parallel

// Thread control shared by the CLI and benchmarks; no-ops without OpenMP.
void set_thread_count(int threads);
int thread_count();

}  // namespace kernels
}  // namespace hitok
