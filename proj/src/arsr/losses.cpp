#include <cmath>

#include "hitok/arsr.hpp"
#include "hitok/error.hpp"

namespace hitok {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_targets(const Matrix& logits, std::span<const std::uint32_t> targets, const char* what) {
  require(static_cast<std::size_t>(logits.rows()) == targets.size(),
          std::string(what) + ": sequence length differs from logits rows");
  require(logits.rows() > 0, std::string(what) + ": empty sequence");
  for (std::uint32_t k : targets)
    require(k < static_cast<std::uint32_t>(logits.cols()),
            std::string(what) + ": target index " + std::to_string(k) + " >= vocab " + std::to_string(logits.cols()));
}

}  // namespace

LossValue ce_loss(const Matrix& logits, std::span<const std::uint32_t> targets) {
  check_targets(logits, targets, "ce_loss");
  const Eigen::Index n = logits.rows();
  LossValue out;
  out.dlogits.resize(n, logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    out.dlogits.row(i) = (logits.row(i).array() - mx).exp();
    const double z = out.dlogits.row(i).sum();
    total += std::log(z) + mx - logits(i, targets[i]);
    out.dlogits.row(i) /= z;
    out.dlogits(i, targets[i]) -= 1.0;
  }
  out.dlogits /= static_cast<double>(n);
  out.value = total / static_cast<double>(n);
  return out;
}

LossValue dpo_loss(const Matrix& logits, std::span<const std::uint32_t> z_hr, std::span<const std::uint32_t> z_lr,
                   double beta, bool sequence_level) {
  check_targets(logits, z_hr, "dpo_loss");
  check_targets(logits, z_lr, "dpo_loss");
  require(beta > 0.0, "dpo_loss: beta must be positive");
  const Eigen::Index n = logits.rows();
  LossValue out;
  out.dlogits = Matrix::Zero(n, logits.cols());
  if (sequence_level) {
    double gap = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) gap += logits(i, z_hr[i]) - logits(i, z_lr[i]);
    out.value = softplus(-beta * gap);
    const double g = -beta * sigmoid(-beta * gap);
    for (Eigen::Index i = 0; i < n; ++i) {
      out.dlogits(i, z_hr[i]) += g;
      out.dlogits(i, z_lr[i]) -= g;
    }
    return out;
  }
  const double w = 0.5 / static_cast<double>(n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double gap = logits(i, z_hr[i]) - logits(i, z_lr[i]);
    total += softplus(-beta * gap);
    const double g = -beta * sigmoid(-beta * gap) * w;
    out.dlogits(i, z_hr[i]) += g;
    out.dlogits(i, z_lr[i]) -= g;
  }
  out.value = w * total;
  return out;
}

double preference_margin(const Matrix& logits, std::span<const std::uint32_t> z_hr,
                         std::span<const std::uint32_t> z_lr) {
  check_targets(logits, z_hr, "preference_margin");
  check_targets(logits, z_lr, "preference_margin");
  double s = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) s += logits(i, z_hr[i]) - logits(i, z_lr[i]);
  return s / static_cast<double>(logits.rows());
}

}  // namespace hitok
