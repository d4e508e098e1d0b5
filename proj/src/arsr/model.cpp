#include <cmath>
#include <random>

#include "hitok/arsr.hpp"
#include "hitok/error.hpp"

namespace hitok {

int BlockMask::level_of(std::size_t p) const {
  require(p < limit.size(), "BlockMask::level_of: position out of range");
  if (p < cond_len) return -1;
  for (std::size_t l = 0; l < level_end.size(); ++l)
    if (p < level_end[l]) return static_cast<int>(l);
  return -1;
}

BlockMask block_causal_mask(const ScaleSchedule& schedule, std::size_t cond_len, int level_count) {
  require(level_count >= 1 && level_count <= schedule.levels(), "block_causal_mask: level count out of range");
  BlockMask m;
  m.cond_len = cond_len;
  m.limit.assign(cond_len, cond_len);
  std::size_t end = cond_len;
  for (int l = 0; l < level_count; ++l) {
    const std::size_t n = static_cast<std::size_t>(schedule.side(l)) * schedule.side(l);
    end += n;
    m.level_end.push_back(end);
    m.limit.insert(m.limit.end(), n, end);
  }
  return m;
}

BlockMask block_causal_mask(const ScaleSchedule& schedule, std::size_t cond_len) {
  return block_causal_mask(schedule, cond_len, schedule.levels());
}

namespace {

template <typename M>
void fill_normal(M& m, std::mt19937_64& rng, double std) {
  std::normal_distribution<double> nd(0.0, std);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
}

// Kronecker product of 1-D area taps as a sparse (r^2 x n^2) operator.
Eigen::SparseMatrix<double, Eigen::RowMajor> area_operator(int n, int r) {
  const ResampleTaps t = area_taps(n, r);
  std::vector<Eigen::Triplet<double>> entries;
  for (int i = 0; i < r; ++i)
    for (int a = t.begin[i]; a < t.begin[i + 1]; ++a)
      for (int j = 0; j < r; ++j)
        for (int b = t.begin[j]; b < t.begin[j + 1]; ++b)
          entries.emplace_back(i * r + j, t.index[a] * n + t.index[b], t.weight[a] * t.weight[b]);
  Eigen::SparseMatrix<double, Eigen::RowMajor> op(r * r, n * n);
  op.setFromTriplets(entries.begin(), entries.end());
  return op;
}

constexpr double kLnEps = 1e-5;

void layer_norm(const Matrix& x, const RowVector& g, const RowVector& b, Matrix& xhat, RowVector& rstd, Matrix& y) {
  const Eigen::Index n = x.rows(), d = x.cols();
  xhat.resize(n, d);
  rstd.resize(n);
  y.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    rstd(i) = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(i) = (x.row(i).array() - mean) * rstd(i);
    y.row(i) = xhat.row(i).cwiseProduct(g) + b;
  }
}

// Adds the input gradient of a layer norm to dx.
void layer_norm_backward(const Matrix& dy, const Matrix& xhat, const RowVector& rstd, const RowVector& g,
                         RowVector& dg, RowVector& db, Matrix& dx) {
  dg += dy.cwiseProduct(xhat).colwise().sum();
  db += dy.colwise().sum();
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const RowVector dxhat = dy.row(i).cwiseProduct(g);
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
    dx.row(i).array() += rstd(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2);
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluK = 0.044715;

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluK * x * x * x))); }

double gelu_grad(double x) {
  const double t = std::tanh(kGeluC * (x + kGeluK * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluK * x * x);
}

// Rows sharing one attention limit.
struct RowBlock {
  Eigen::Index begin, end, limit;
};

std::vector<RowBlock> row_blocks(const BlockMask& mask) {
  std::vector<RowBlock> out;
  if (mask.cond_len > 0)
    out.push_back({0, static_cast<Eigen::Index>(mask.cond_len), static_cast<Eigen::Index>(mask.cond_len)});
  std::size_t begin = mask.cond_len;
  for (std::size_t e : mask.level_end) {
    out.push_back({static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(e)});
    begin = e;
  }
  return out;
}

void softmax_rows(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - mx).exp();
    s.row(i) /= s.row(i).sum();
  }
}

}  // namespace

ArModel::ArModel(const ArConfig& config, const ScaleSchedule& schedule, std::uint64_t seed)
    : config_(config), schedule_(schedule) {
  if (config_.cond_side == 0) config_.cond_side = schedule_.native();
  require(config_.width > 0 && config_.depth > 0 && config_.heads > 0 && config_.ff_mult > 0,
          "ArModel: width, depth, heads and ff_mult must be positive");
  require(config_.width % config_.heads == 0, "ArModel: width must be divisible by heads");
  require(config_.vocab > 0 && config_.code_dim > 0 && config_.cond_dim > 0 && config_.cond_side > 0,
          "ArModel: vocab, code_dim, cond_dim and cond_side must be positive");
  require(config_.init_std > 0.0, "ArModel: init_std must be positive");

  const int d = config_.width, f = config_.ff_mult * d, n = schedule_.native();
  std::mt19937_64 rng(seed);
  const double s = config_.init_std;
  ArWeights& w = weights_;
  w.w_in = Matrix(config_.code_dim, d);
  w.w_cond = Matrix(config_.cond_dim, d);
  w.pos = Matrix(n * n, d);
  w.cond_pos = Matrix(config_.cond_side * config_.cond_side, d);
  w.level_emb = Matrix(schedule_.levels(), d);
  fill_normal(w.w_in, rng, 1.0 / std::sqrt(config_.code_dim));
  fill_normal(w.w_cond, rng, 1.0 / std::sqrt(config_.cond_dim));
  fill_normal(w.pos, rng, s);
  fill_normal(w.cond_pos, rng, s);
  fill_normal(w.level_emb, rng, s);
  w.b_in = RowVector::Zero(d);
  w.b_cond = RowVector::Zero(d);
  const double proj = s / std::sqrt(2.0 * config_.depth);
  for (int i = 0; i < config_.depth; ++i) {
    BlockWeights b;
    b.ln1_g = b.ln2_g = RowVector::Ones(d);
    b.ln1_b = b.ln2_b = RowVector::Zero(d);
    b.wq = Matrix(d, d);
    b.wk = Matrix(d, d);
    b.wv = Matrix(d, d);
    b.wo = Matrix(d, d);
    b.w1 = Matrix(d, f);
    b.w2 = Matrix(f, d);
    fill_normal(b.wq, rng, s);
    fill_normal(b.wk, rng, s);
    fill_normal(b.wv, rng, s);
    fill_normal(b.wo, rng, proj);
    fill_normal(b.w1, rng, s);
    fill_normal(b.w2, rng, proj);
    b.bq = b.bk = b.bv = b.bo = b.b2 = RowVector::Zero(d);
    b.b1 = RowVector::Zero(f);
    w.blocks.push_back(std::move(b));
  }
  w.lnf_g = RowVector::Ones(d);
  w.lnf_b = RowVector::Zero(d);
  w.w_out = Matrix::Zero(d, config_.vocab);
  w.b_out = RowVector::Zero(config_.vocab);
  if (!config_.zero_head) fill_normal(w.w_out, rng, s);

  for (int l = 0; l < schedule_.levels(); ++l) pos_maps_.push_back(area_operator(n, schedule_.side(l)));
}

void ArModel::check_batch(const PackedBatch& b) const {
  require(b.levels() >= 1 && b.levels() <= schedule_.levels(), "ArModel: batch level count out of range");
  require(b.offsets.size() == b.sides.size() + 1 && b.offsets.front() == 0 && b.offsets.back() == b.tokens(),
          "ArModel: inconsistent batch offsets");
  for (int l = 0; l < b.levels(); ++l) {
    require(b.sides[l] == schedule_.side(l), "ArModel: batch level sides do not match the model schedule");
    require(b.offsets[l + 1] - b.offsets[l] == static_cast<std::size_t>(b.sides[l]) * b.sides[l],
            "ArModel: level span does not match its side");
  }
  require(b.inputs.cols() == config_.code_dim, "ArModel: input feature width mismatch");
  require(b.cond_len() == cond_len() && b.cond.cols() == config_.cond_dim,
          "ArModel: conditioning shape mismatch (expected " + std::to_string(cond_len()) + " tokens of width " +
              std::to_string(config_.cond_dim) + ")");
  require(b.targets.size() == b.tokens(), "ArModel: target count mismatch");
}

Matrix ArModel::forward(const PackedBatch& b) const {
  ForwardCache cache;
  return forward(b, cache);
}

Matrix ArModel::forward(const PackedBatch& b, ForwardCache& cache) const {
  check_batch(b);
  const ArWeights& w = weights_;
  const Eigen::Index c = static_cast<Eigen::Index>(b.cond_len()), t = static_cast<Eigen::Index>(b.tokens());
  const int d = config_.width, heads = config_.heads, dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix x(c + t, d);
  if (c > 0) x.topRows(c) = (b.cond * w.w_cond).rowwise() + w.b_cond + w.cond_pos;
  x.bottomRows(t) = (b.inputs * w.w_in).rowwise() + w.b_in;
  for (int l = 0; l < b.levels(); ++l) {
    const Eigen::Index off = c + static_cast<Eigen::Index>(b.offsets[l]);
    const Eigen::Index n = static_cast<Eigen::Index>(b.offsets[l + 1] - b.offsets[l]);
    x.middleRows(off, n) += pos_map(l) * w.pos;
    x.middleRows(off, n).rowwise() += w.level_emb.row(l);
  }

  cache.mask = block_causal_mask(schedule_, b.cond_len(), b.levels());
  const std::vector<RowBlock> rb = row_blocks(cache.mask);
  cache.blocks.assign(w.blocks.size(), {});
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    const BlockWeights& bw = w.blocks[i];
    ForwardCache::Block& cb = cache.blocks[i];
    cb.x_in = x;
    layer_norm(x, bw.ln1_g, bw.ln1_b, cb.xhat1, cb.rstd1, cb.h1);
    cb.q = (cb.h1 * bw.wq).rowwise() + bw.bq;
    cb.k = (cb.h1 * bw.wk).rowwise() + bw.bk;
    cb.v = (cb.h1 * bw.wv).rowwise() + bw.bv;
    cb.attn.resize(x.rows(), d);
    cb.probs.clear();
    for (int h = 0; h < heads; ++h) {
      const Eigen::Index col = static_cast<Eigen::Index>(h) * dh;
      for (const RowBlock& r : rb) {
        const Eigen::Index rows = r.end - r.begin;
        Matrix s = cb.q.block(r.begin, col, rows, dh) * cb.k.block(0, col, r.limit, dh).transpose() * scale;
        softmax_rows(s);
        cb.attn.block(r.begin, col, rows, dh) = s * cb.v.block(0, col, r.limit, dh);
        cb.probs.push_back(std::move(s));
      }
    }
    x += (cb.attn * bw.wo).rowwise() + bw.bo;
    cb.x_mid = x;
    layer_norm(x, bw.ln2_g, bw.ln2_b, cb.xhat2, cb.rstd2, cb.h2);
    cb.pre = (cb.h2 * bw.w1).rowwise() + bw.b1;
    cb.act = cb.pre.unaryExpr([](double v) { return gelu(v); });
    x += (cb.act * bw.w2).rowwise() + bw.b2;
  }
  cache.x_final = x;
  Matrix y;
  layer_norm(x, w.lnf_g, w.lnf_b, cache.xhat_f, cache.rstd_f, y);
  return (y.bottomRows(t) * w.w_out).rowwise() + w.b_out;
}

void ArModel::backward(const PackedBatch& b, const ForwardCache& cache, const Matrix& dlogits,
                       ArWeights& grad) const {
  const ArWeights& w = weights_;
  const Eigen::Index c = static_cast<Eigen::Index>(b.cond_len()), t = static_cast<Eigen::Index>(b.tokens());
  require(dlogits.rows() == t && dlogits.cols() == config_.vocab, "ArModel::backward: dlogits shape mismatch");
  const int d = config_.width, heads = config_.heads, dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const Matrix y_tok =
      (cache.xhat_f.bottomRows(t).array().rowwise() * w.lnf_g.array()).rowwise() + w.lnf_b.array();
  grad.w_out.noalias() += y_tok.transpose() * dlogits;
  grad.b_out += dlogits.colwise().sum();
  Matrix dy = Matrix::Zero(c + t, d);
  dy.bottomRows(t).noalias() = dlogits * w.w_out.transpose();
  Matrix dx = Matrix::Zero(c + t, d);
  layer_norm_backward(dy, cache.xhat_f, cache.rstd_f, w.lnf_g, grad.lnf_g, grad.lnf_b, dx);

  const std::vector<RowBlock> rb = row_blocks(cache.mask);
  for (std::size_t i = w.blocks.size(); i-- > 0;) {
    const BlockWeights& bw = w.blocks[i];
    BlockWeights& gw = grad.blocks[i];
    const ForwardCache::Block& cb = cache.blocks[i];

    gw.w2.noalias() += cb.act.transpose() * dx;
    gw.b2 += dx.colwise().sum();
    Matrix dpre = (dx * bw.w2.transpose()).cwiseProduct(cb.pre.unaryExpr([](double v) { return gelu_grad(v); }));
    gw.w1.noalias() += cb.h2.transpose() * dpre;
    gw.b1 += dpre.colwise().sum();
    const Matrix dh2 = dpre * bw.w1.transpose();
    layer_norm_backward(dh2, cb.xhat2, cb.rstd2, bw.ln2_g, gw.ln2_g, gw.ln2_b, dx);

    gw.wo.noalias() += cb.attn.transpose() * dx;
    gw.bo += dx.colwise().sum();
    const Matrix dattn = dx * bw.wo.transpose();
    Matrix dq = Matrix::Zero(c + t, d), dk = Matrix::Zero(c + t, d), dv = Matrix::Zero(c + t, d);
    std::size_t pi = 0;
    for (int h = 0; h < heads; ++h) {
      const Eigen::Index col = static_cast<Eigen::Index>(h) * dh;
      for (const RowBlock& r : rb) {
        const Eigen::Index rows = r.end - r.begin;
        const Matrix& p = cb.probs[pi++];
        const auto d_o = dattn.block(r.begin, col, rows, dh);
        dv.block(0, col, r.limit, dh).noalias() += p.transpose() * d_o;
        Matrix dp = d_o * cb.v.block(0, col, r.limit, dh).transpose();
        const Eigen::VectorXd inner = dp.cwiseProduct(p).rowwise().sum();
        Matrix ds = p.cwiseProduct(dp.colwise() - inner) * scale;
        dq.block(r.begin, col, rows, dh).noalias() += ds * cb.k.block(0, col, r.limit, dh);
        dk.block(0, col, r.limit, dh).noalias() += ds.transpose() * cb.q.block(r.begin, col, rows, dh);
      }
    }
    gw.wq.noalias() += cb.h1.transpose() * dq;
    gw.wk.noalias() += cb.h1.transpose() * dk;
    gw.wv.noalias() += cb.h1.transpose() * dv;
    gw.bq += dq.colwise().sum();
    gw.bk += dk.colwise().sum();
    gw.bv += dv.colwise().sum();
    const Matrix dh1 = dq * bw.wq.transpose() + dk * bw.wk.transpose() + dv * bw.wv.transpose();
    layer_norm_backward(dh1, cb.xhat1, cb.rstd1, bw.ln1_g, gw.ln1_g, gw.ln1_b, dx);
  }

  if (c > 0) {
    const auto dxc = dx.topRows(c);
    grad.w_cond.noalias() += b.cond.transpose() * dxc;
    grad.b_cond += dxc.colwise().sum();
    grad.cond_pos += dxc;
  }
  const auto dxt = dx.bottomRows(t);
  grad.w_in.noalias() += b.inputs.transpose() * dxt;
  grad.b_in += dxt.colwise().sum();
  for (int l = 0; l < b.levels(); ++l) {
    const Eigen::Index off = static_cast<Eigen::Index>(b.offsets[l]);
    const Eigen::Index n = static_cast<Eigen::Index>(b.offsets[l + 1] - b.offsets[l]);
    grad.pos += pos_map(l).transpose() * dxt.middleRows(off, n);
    grad.level_emb.row(l) += dxt.middleRows(off, n).colwise().sum();
  }
}

ArWeights ArWeights::zeros_like() const {
  ArWeights z = *this;
  z.visit([](const std::string&, auto& m) { m.setZero(); });
  return z;
}

std::size_t ArWeights::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const auto& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

bool ArWeights::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const auto& m) { ok = ok && m.allFinite(); });
  return ok;
}

void ArWeights::add_scaled(const ArWeights& other, double scale) {
  std::vector<const double*> src;
  other.visit([&](const std::string&, const auto& m) { src.push_back(m.data()); });
  std::size_t i = 0;
  visit([&](const std::string&, auto& m) {
    const double* s = src[i++];
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] += scale * s[k];
  });
}

double ArWeights::squared_norm() const {
  double s = 0.0;
  visit([&](const std::string&, const auto& m) { s += m.squaredNorm(); });
  return s;
}

}  // namespace hitok
