#include "hitok/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include <json.hpp>

#include "binary_io.hpp"

namespace hitok {

const char* metric_name(Metric m) { return m == Metric::L2 ? "l2" : "cosine"; }

Metric parse_metric(const std::string& name) {
  if (name == "l2" || name == "L2") return Metric::L2;
  if (name == "cosine" || name == "Cosine") return Metric::Cosine;
  throw PreconditionError("unknown metric: " + name);
}

Codebook::Codebook(int size, int dim, Metric metric, std::vector<double> rows)
    : size_(size), dim_(dim), metric_(metric), rows_(std::move(rows)) {
  require(size > 0 && dim > 0, "Codebook: size and dim must be positive");
  require(rows_.size() == static_cast<std::size_t>(size) * dim, "Codebook: row data size mismatch");
  inverse_norms_.assign(size, 1.0);
  for (int k = 0; k < size_; ++k) refresh_row(k);
  require(all_finite(), "Codebook: non-finite entries");
}

void Codebook::refresh_row(int k) {
  double* r = rows_.data() + static_cast<std::size_t>(k) * dim_;
  double n2 = 0.0;
  for (int d = 0; d < dim_; ++d) n2 += r[d] * r[d];
  const double n = std::sqrt(n2);
  if (metric_ == Metric::Cosine && n > 0.0) {
    for (int d = 0; d < dim_; ++d) r[d] /= n;
    inverse_norms_[k] = 1.0;
  } else {
    inverse_norms_[k] = n > 0.0 ? 1.0 / n : 0.0;
  }
}

void Codebook::set_row(int k, std::span<const double> v) {
  require(k >= 0 && k < size_, "Codebook::set_row: index out of range");
  require(static_cast<int>(v.size()) == dim_, "Codebook::set_row: dimension mismatch");
  std::copy(v.begin(), v.end(), rows_.begin() + static_cast<std::ptrdiff_t>(k) * dim_);
  refresh_row(k);
}

kernels::CodeView Codebook::view() const {
  return {rows_, inverse_norms_, size_, dim_, metric_};
}

bool Codebook::all_finite() const {
  for (double x : rows_)
    if (!std::isfinite(x)) return false;
  return true;
}

void Codebook::round_to_float() {
  for (double& x : rows_) x = static_cast<double>(static_cast<float>(x));
  for (int k = 0; k < size_; ++k) {
    // Re-normalizing would move entries off the float grid again.
    const double* r = rows_.data() + static_cast<std::size_t>(k) * dim_;
    double n2 = 0.0;
    for (int d = 0; d < dim_; ++d) n2 += r[d] * r[d];
    inverse_norms_[k] = n2 > 0.0 ? 1.0 / std::sqrt(n2) : 0.0;
  }
}

std::uint32_t nearest_code(std::span<const double> v, const Codebook& cb) {
  require(static_cast<int>(v.size()) == cb.dim(), "nearest_code: dimension mismatch");
  return kernels::nearest_one(v, cb.view());
}

LatentGrid embed(const IndexGrid& indices, const Codebook& cb) {
  LatentGrid out(cb.dim(), indices.rows, indices.cols);
  const std::size_t plane = out.plane_size();
  auto values = out.values();
  for (std::size_t p = 0; p < plane; ++p) {
    const std::uint32_t k = indices.values[p];
    require(k < static_cast<std::uint32_t>(cb.size()), "embed: index out of range");
    auto r = cb.row(static_cast<int>(k));
    for (int c = 0; c < cb.dim(); ++c) values[c * plane + p] = r[c];
  }
  return out;
}

IndexGrid assign_grid(const LatentGrid& g, const Codebook& cb) {
  require(g.channels() == cb.dim(), "quantize_grid: grid channels " +
                                        std::to_string(g.channels()) + " != codebook dim " +
                                        std::to_string(cb.dim()));
  const std::size_t plane = g.plane_size();
  const int dim = cb.dim();
  std::vector<double> queries(plane * dim);
  auto values = g.values();
  for (std::size_t p = 0; p < plane; ++p)
    for (int c = 0; c < dim; ++c) queries[p * dim + c] = values[c * plane + p];
  IndexGrid out(g.height(), g.width());
  kernels::parallel::assign_nearest(queries, cb.view(), out.values);
  return out;
}

QuantizationResult quantize_grid(const LatentGrid& g, const Codebook& cb) {
  QuantizationResult q;
  q.indices = assign_grid(g, cb);
  q.embeddings = embed(q.indices, cb);
  q.residual_norm = distance(g, q.embeddings);
  return q;
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

}  // namespace

Codebook init_codebook(std::span<const std::vector<double>> samples, int size, std::uint64_t seed,
                       const KMeansOptions& options) {
  require(size > 0, "init_codebook: K must be positive");
  require(static_cast<int>(samples.size()) >= size,
          "init_codebook: need at least K=" + std::to_string(size) + " samples, got " +
              std::to_string(samples.size()));
  const int dim = static_cast<int>(samples.front().size());
  require(dim > 0, "init_codebook: empty sample vectors");
  for (const auto& s : samples) require(static_cast<int>(s.size()) == dim, "init_codebook: ragged samples");

  const std::size_t n = samples.size();
  std::mt19937_64 rng(seed);
  std::vector<double> centers;
  centers.reserve(static_cast<std::size_t>(size) * dim);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  auto add_center = [&](std::size_t idx) {
    const auto& c = samples[idx];
    centers.insert(centers.end(), c.begin(), c.end());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(samples[i], c));
  };

  add_center(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  for (int k = 1; k < size; ++k) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc >= target) break;
      }
    }
    if (pick == n) pick = static_cast<std::size_t>(k) % n;  // all samples coincide with centers
    add_center(pick);
  }

  // Lloyd refinement; empty clusters keep their seed.
  std::vector<double> flat(n * dim);
  for (std::size_t i = 0; i < n; ++i) std::copy(samples[i].begin(), samples[i].end(), flat.begin() + i * dim);
  std::vector<std::uint32_t> assign(n);
  std::vector<double> inv(size, 1.0);
  for (int it = 0; it < options.lloyd_iterations; ++it) {
    kernels::CodeView view{centers, inv, size, dim, Metric::L2};
    kernels::parallel::assign_nearest(flat, view, assign);
    std::vector<double> sums(static_cast<std::size_t>(size) * dim, 0.0);
    std::vector<std::size_t> counts(size, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (int d = 0; d < dim; ++d) sums[assign[i] * dim + d] += flat[i * dim + d];
    }
    bool moved = false;
    for (int k = 0; k < size; ++k) {
      if (counts[k] == 0) continue;
      for (int d = 0; d < dim; ++d) {
        const double m = sums[static_cast<std::size_t>(k) * dim + d] / static_cast<double>(counts[k]);
        double& c = centers[static_cast<std::size_t>(k) * dim + d];
        if (m != c) moved = true;
        c = m;
      }
    }
    if (!moved) break;
  }
  return Codebook(size, dim, options.metric, std::move(centers));
}

EmaState EmaState::from(const Codebook& cb) {
  EmaState s;
  s.counts.assign(cb.size(), 1.0);
  s.sums.assign(cb.rows().begin(), cb.rows().end());
  return s;
}

void ema_update(Codebook& cb, EmaState& state, std::span<const double> features,
                std::span<const std::uint32_t> indices, double decay, std::span<const double> weights) {
  require(decay > 0.0 && decay < 1.0, "ema_update: decay must lie in (0, 1)");
  const int dim = cb.dim();
  require(features.size() == indices.size() * static_cast<std::size_t>(dim),
          "ema_update: features and indices differ in length");
  require(weights.empty() || weights.size() == indices.size(), "ema_update: weights length mismatch");
  require(state.counts.size() == static_cast<std::size_t>(cb.size()) &&
              state.sums.size() == cb.rows().size(),
          "ema_update: state does not match codebook");

  std::vector<double> batch_counts(cb.size(), 0.0);
  std::vector<double> batch_sums(cb.rows().size(), 0.0);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::uint32_t k = indices[i];
    require(k < static_cast<std::uint32_t>(cb.size()), "ema_update: index out of range");
    const double w = weights.empty() ? 1.0 : weights[i];
    batch_counts[k] += w;
    for (int d = 0; d < dim; ++d) batch_sums[k * dim + d] += w * features[i * dim + d];
  }

  std::vector<double> row(dim);
  for (int k = 0; k < cb.size(); ++k) {
    state.counts[k] = decay * state.counts[k] + (1.0 - decay) * batch_counts[k];
    for (int d = 0; d < dim; ++d) {
      double& s = state.sums[static_cast<std::size_t>(k) * dim + d];
      s = decay * s + (1.0 - decay) * batch_sums[static_cast<std::size_t>(k) * dim + d];
    }
    if (batch_counts[k] == 0.0 || state.counts[k] <= 0.0) continue;
    for (int d = 0; d < dim; ++d) row[d] = state.sums[static_cast<std::size_t>(k) * dim + d] / state.counts[k];
    cb.set_row(k, row);
  }
}

CommitmentLoss commitment_loss(const LatentGrid& g, const QuantizationResult& q) {
  require(g.same_shape(q.embeddings), "commitment_loss: shape mismatch");
  CommitmentLoss out{0.0, LatentGrid(g.channels(), g.height(), g.width())};
  const double count = static_cast<double>(g.size());
  auto gv = g.values();
  auto ev = q.embeddings.values();
  auto grad = out.gradient.values();
  double s = 0.0;
  for (std::size_t k = 0; k < gv.size(); ++k) {
    const double d = gv[k] - ev[k];
    s += d * d;
    grad[k] = 2.0 * d / count;
  }
  out.value = s / count;
  return out;
}

void save_codebook(const Codebook& cb, const std::filesystem::path& path) {
  io::Writer w(path);
  w.magic("HTCB");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(cb.size()));
  w.u32(static_cast<std::uint32_t>(cb.dim()));
  w.u32(cb.metric() == Metric::L2 ? 0u : 1u);
  for (double x : cb.rows()) w.f32(x);
  w.finish();
}

Codebook load_codebook(const std::filesystem::path& path) {
  io::Reader r(path);
  r.expect_magic("HTCB");
  const std::uint32_t version = r.u32();
  if (version != 1) throw IoError("unsupported codebook version " + std::to_string(version));
  const std::uint32_t size = r.u32();
  const std::uint32_t dim = r.u32();
  const std::uint32_t metric = r.u32();
  if (size == 0 || dim == 0 || metric > 1 || static_cast<std::uint64_t>(size) * dim > (1ull << 28))
    throw IoError("corrupt codebook header in " + path.string());
  std::vector<double> rows(static_cast<std::size_t>(size) * dim);
  for (double& x : rows) x = r.f32();
  Codebook cb(static_cast<int>(size), static_cast<int>(dim), metric == 0 ? Metric::L2 : Metric::Cosine,
              std::move(rows));
  cb.round_to_float();
  return cb;
}

std::string codebook_to_json(const Codebook& cb) {
  nlohmann::json j;
  j["size"] = cb.size();
  j["dim"] = cb.dim();
  j["metric"] = metric_name(cb.metric());
  nlohmann::json rows = nlohmann::json::array();
  for (int k = 0; k < cb.size(); ++k) {
    auto r = cb.row(k);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  j["vectors"] = std::move(rows);
  return j.dump(2);
}

}  // namespace hitok
