#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hitok/grid.hpp"
#include "hitok/kernels.hpp"

namespace hitok {

const char* metric_name(Metric m);
Metric parse_metric(const std::string& name);

// The token vocabulary: K embeddings of dimension n_z. Under Cosine every
// row is kept unit-normalized.
class Codebook {
 public:
  Codebook() = default;
  Codebook(int size, int dim, Metric metric, std::vector<double> rows);

  int size() const { return size_; }
  int dim() const { return dim_; }
  Metric metric() const { return metric_; }
  std::span<const double> row(int k) const {
    return {rows_.data() + static_cast<std::size_t>(k) * dim_, static_cast<std::size_t>(dim_)};
  }
  std::span<const double> rows() const { return rows_; }

  void set_row(int k, std::span<const double> v);
  kernels::CodeView view() const;
  bool all_finite() const;

  // Rounds every entry to float32 so the in-memory codebook equals what
  // save/load round-trips.
  void round_to_float();

  friend bool operator==(const Codebook& a, const Codebook& b) {
    return a.size_ == b.size_ && a.dim_ == b.dim_ && a.metric_ == b.metric_ && a.rows_ == b.rows_;
  }

 private:
  void refresh_row(int k);

  int size_ = 0;
  int dim_ = 0;
  Metric metric_ = Metric::L2;
  std::vector<double> rows_;
  std::vector<double> inverse_norms_;
};

// Row-major grid of token indices.
struct IndexGrid {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint32_t> values;

  IndexGrid() = default;
  IndexGrid(int r, int c, std::uint32_t fill = 0)
      : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, fill) {}
  std::uint32_t& at(int i, int j) { return values[static_cast<std::size_t>(i) * cols + j]; }
  std::uint32_t at(int i, int j) const { return values[static_cast<std::size_t>(i) * cols + j]; }
  friend bool operator==(const IndexGrid&, const IndexGrid&) = default;
};

struct QuantizationResult {
  IndexGrid indices;
  LatentGrid embeddings;
  double residual_norm = 0.0;
};

std::uint32_t nearest_code(std::span<const double> v, const Codebook& cb);

// Spatial layout of the selected code vectors.
LatentGrid embed(const IndexGrid& indices, const Codebook& cb);

QuantizationResult quantize_grid(const LatentGrid& g, const Codebook& cb);
IndexGrid assign_grid(const LatentGrid& g, const Codebook& cb);

struct KMeansOptions {
  int lloyd_iterations = 10;
  Metric metric = Metric::L2;
};

// k-means++ seeding followed by Lloyd refinement; deterministic given seed.
Codebook init_codebook(std::span<const std::vector<double>> samples, int size, std::uint64_t seed,
                       const KMeansOptions& options = {});

// Exponential moving averages of per-code assignment counts and sums.
// A fresh state treats each current code as one pseudo-observation.
struct EmaState {
  std::vector<double> counts;
  std::vector<double> sums;  // K x dim

  static EmaState from(const Codebook& cb);
};

// One EMA k-means step. `features` is row-major n x dim; codes that receive
// no assignment keep their vector. Optional per-feature `weights` (default 1)
// scale each feature's contribution to the count and sum averages.
void ema_update(Codebook& cb, EmaState& state, std::span<const double> features,
                std::span<const std::uint32_t> indices, double decay,
                std::span<const double> weights = {});

struct CommitmentLoss {
  double value = 0.0;
  LatentGrid gradient;
};

// Mean squared error between the latent and its (constant) embeddings.
CommitmentLoss commitment_loss(const LatentGrid& g, const QuantizationResult& q);

// Binary: "HTCB", u32 version, u32 K, u32 dim, u32 metric, K*dim float32 LE.
void save_codebook(const Codebook& cb, const std::filesystem::path& path);
Codebook load_codebook(const std::filesystem::path& path);
std::string codebook_to_json(const Codebook& cb);

}  // namespace hitok
