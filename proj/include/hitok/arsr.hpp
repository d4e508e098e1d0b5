#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hitok/hit.hpp"
#include "hitok/toycodec.hpp"

namespace hitok {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

// Attention pattern over [conditioning | level 1 | ... | level L]. Every row
// attends to a prefix of the sequence, so one limit per row describes it:
// conditioning rows see all conditioning, level-l rows see everything up to
// the end of level l.
struct BlockMask {
  std::size_t cond_len = 0;
  std::vector<std::size_t> level_end;  // exclusive end of each level, in positions
  std::vector<std::size_t> limit;      // per position

  bool allows(std::size_t p, std::size_t q) const { return q < limit[p]; }
  std::size_t positions() const { return limit.size(); }
  // Level of position p (-1 for conditioning).
  int level_of(std::size_t p) const;
};

BlockMask block_causal_mask(const ScaleSchedule& schedule, std::size_t cond_len);
// Mask over the first `level_count` levels only.
BlockMask block_causal_mask(const ScaleSchedule& schedule, std::size_t cond_len, int level_count);

// One teacher-forced training sequence, or a prefix of one during sampling.
struct PackedBatch {
  Matrix cond;    // cond_len x cond_dim conditioning features
  Matrix inputs;  // tokens x code_dim input features
  std::vector<std::uint32_t> targets;
  std::vector<int> sides;             // token-grid side of each packed level
  std::vector<std::size_t> offsets;   // token offset of each level, plus the end

  std::size_t cond_len() const { return static_cast<std::size_t>(cond.rows()); }
  std::size_t tokens() const { return static_cast<std::size_t>(inputs.rows()); }
  std::size_t positions() const { return cond_len() + tokens(); }
  int levels() const { return static_cast<int>(sides.size()); }
};

// Conditioning latent: the LR image bilinearly upsampled to `hr_side` and encoded.
LatentGrid conditioning_latent(const Image& lr, const PatchCodec& codec, int hr_side);
// Row-major cells of a latent, one row per token.
Matrix grid_tokens(const LatentGrid& g);

// Teacher-forcing layout. Level 1's input is the mean conditioning feature
// at every cell; level l > 1 sees the area-downsampled sum of the
// contributions of levels < l accumulated at the native side. Only the
// first `level_count` levels are packed (-1 = all); `t.levels` needs grids
// for every packed level except the last, whose targets are zero if absent.
PackedBatch pack_sequence(const TokenSequence& t, const LatentGrid& cond, const Codebook& cb,
                          const PhiBank& phi, int level_count = -1);

struct ArConfig {
  int width = 64;
  int depth = 2;
  int heads = 4;
  int ff_mult = 4;
  int vocab = 512;
  int code_dim = 32;
  int cond_dim = 32;
  int cond_side = 0;  // conditioning grid side; 0 = native latent side
  double init_std = 0.02;
  bool zero_head = true;
};

struct BlockWeights {
  RowVector ln1_g, ln1_b;
  Matrix wq, wk, wv, wo;
  RowVector bq, bk, bv, bo;
  RowVector ln2_g, ln2_b;
  Matrix w1, w2;
  RowVector b1, b2;
};

struct ArWeights {
  Matrix w_in, w_cond;
  RowVector b_in, b_cond;
  Matrix pos;        // native^2 x width
  Matrix cond_pos;   // cond_side^2 x width
  Matrix level_emb;  // L x width
  std::vector<BlockWeights> blocks;
  RowVector lnf_g, lnf_b;
  Matrix w_out;
  RowVector b_out;

  // Calls f(name, matrix) for every parameter in a fixed order.
  template <typename F>
  void visit(F&& f) { visit_all(*this, f); }
  template <typename F>
  void visit(F&& f) const { visit_all(*this, f); }

  ArWeights zeros_like() const;
  std::size_t parameter_count() const;
  bool all_finite() const;
  void add_scaled(const ArWeights& other, double scale);
  double squared_norm() const;

 private:
  template <typename Self, typename F>
  static void visit_all(Self& w, F&& f);
};

// Activations kept by a forward pass for the backward pass.
struct ForwardCache;

class ArModel {
 public:
  ArModel() = default;
  ArModel(const ArConfig& config, const ScaleSchedule& schedule, std::uint64_t seed);

  const ArConfig& config() const { return config_; }
  const ScaleSchedule& schedule() const { return schedule_; }
  ArWeights& weights() { return weights_; }
  const ArWeights& weights() const { return weights_; }
  std::size_t cond_len() const { return static_cast<std::size_t>(config_.cond_side) * config_.cond_side; }

  // Logits (tokens x vocab) for every packed token position.
  Matrix forward(const PackedBatch& b) const;
  Matrix forward(const PackedBatch& b, ForwardCache& cache) const;
  // Accumulates parameter gradients of a loss whose logit gradient is `dlogits`.
  void backward(const PackedBatch& b, const ForwardCache& cache, const Matrix& dlogits, ArWeights& grad) const;

 private:
  void check_batch(const PackedBatch& b) const;
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& pos_map(int level) const { return pos_maps_.at(level); }

  ArConfig config_;
  ScaleSchedule schedule_;
  ArWeights weights_;
  // Area-downsampling operator from the native positional grid to each level.
  std::vector<Eigen::SparseMatrix<double, Eigen::RowMajor>> pos_maps_;
};

struct ForwardCache {
  struct Block {
    Matrix x_in, xhat1, h1, q, k, v, attn, x_mid, xhat2, h2, pre, act;
    RowVector rstd1, rstd2;
    std::vector<Matrix> probs;  // [head * row_blocks + row_block]
  };
  BlockMask mask;
  std::vector<Block> blocks;
  Matrix x_final, xhat_f;
  RowVector rstd_f;
};

struct LossValue {
  double value = 0.0;
  Matrix dlogits;  // d value / d logits
};

// Mean over positions of -log softmax(logits)[target].
LossValue ce_loss(const Matrix& logits, std::span<const std::uint32_t> targets);

// Per position -log sigmoid(beta * (logit[hr] - logit[lr])), averaged and
// halved. With `sequence_level` the gaps are summed under one sigmoid
// instead (no halving).
LossValue dpo_loss(const Matrix& logits, std::span<const std::uint32_t> z_hr, std::span<const std::uint32_t> z_lr,
                   double beta, bool sequence_level = false);

// Mean over positions of logit[hr] - logit[lr].
double preference_margin(const Matrix& logits, std::span<const std::uint32_t> z_hr,
                         std::span<const std::uint32_t> z_lr);

struct ArSample {
  PackedBatch batch;                     // teacher-forced on the HR tokens
  std::vector<std::uint32_t> lr_tokens;  // tokens of the upsampled LR image; empty disables DPO
};

struct ObjectiveOptions {
  double dpo_weight = 0.0;  // 0 disables the DPO term
  double beta = 0.2;
  bool sequence_level_dpo = false;
};

struct ObjectiveValue {
  double ce = 0.0;
  double dpo = 0.0;
  double total = 0.0;
  ArWeights grad;
};

// Sample-averaged CE + dpo_weight * DPO and its parameter gradient. Samples
// run in parallel; per-sample gradients are reduced in sample order, so the
// result does not depend on the thread count.
ObjectiveValue evaluate_objective(const ArModel& m, std::span<const ArSample> samples, const ObjectiveOptions& o,
                                  bool with_gradient = true);

struct TrainOptions {
  int steps = 500;
  int batch_size = 0;  // 0 = all samples each step
  double lr = 3e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
  double clip_norm = 1.0;  // 0 disables global-norm clipping
  std::uint64_t seed = 0;  // batch selection
  int log_every = 10;
  ObjectiveOptions objective;
};

struct TrainRecord {
  int step = 0;
  double ce = 0.0;
  double dpo = 0.0;
  double total = 0.0;
};

// Adam on the composite objective. `on_record` receives every log_every-th
// step plus the first and last.
std::vector<TrainRecord> train_ar(ArModel& m, std::span<const ArSample> samples, const TrainOptions& o,
                                  const std::function<void(const TrainRecord&)>& on_record = {});

std::string train_record_json(const TrainRecord& r);

enum class SampleStrategy { Greedy, TopK };

struct SamplingOptions {
  SampleStrategy strategy = SampleStrategy::Greedy;
  int top_k = 8;
  std::uint64_t seed = 0;
};

// Generates levels 1..L in order, each level in one step from the prefix.
TokenSequence sample_nextscale(const ArModel& m, const LatentGrid& cond, const Codebook& cb, const PhiBank& phi,
                               const SamplingOptions& o = {});

// Binary: "HTAR", u32 version, config, schedule, then named parameter arrays
// (string name, u32 rows, u32 cols, rows*cols float32 LE).
void save_checkpoint(const ArModel& m, const std::filesystem::path& path);
ArModel load_checkpoint(const std::filesystem::path& path);

template <typename Self, typename F>
void ArWeights::visit_all(Self& w, F&& f) {
  f("w_in", w.w_in);
  f("b_in", w.b_in);
  f("w_cond", w.w_cond);
  f("b_cond", w.b_cond);
  f("pos", w.pos);
  f("cond_pos", w.cond_pos);
  f("level_emb", w.level_emb);
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    auto& b = w.blocks[i];
    const std::string p = "block" + std::to_string(i) + ".";
    f(p + "ln1_g", b.ln1_g);
    f(p + "ln1_b", b.ln1_b);
    f(p + "wq", b.wq);
    f(p + "bq", b.bq);
    f(p + "wk", b.wk);
    f(p + "bk", b.bk);
    f(p + "wv", b.wv);
    f(p + "bv", b.bv);
    f(p + "wo", b.wo);
    f(p + "bo", b.bo);
    f(p + "ln2_g", b.ln2_g);
    f(p + "ln2_b", b.ln2_b);
    f(p + "w1", b.w1);
    f(p + "b1", b.b1);
    f(p + "w2", b.w2);
    f(p + "b2", b.b2);
  }
  f("lnf_g", w.lnf_g);
  f("lnf_b", w.lnf_b);
  f("w_out", w.w_out);
  f("b_out", w.b_out);
}

}  // namespace hitok
