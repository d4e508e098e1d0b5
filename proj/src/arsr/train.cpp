#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <random>

#include "hitok/arsr.hpp"
#include "hitok/error.hpp"

namespace hitok {

ObjectiveValue evaluate_objective(const ArModel& m, std::span<const ArSample> samples, const ObjectiveOptions& o,
                                  bool with_gradient) {
  require(!samples.empty(), "evaluate_objective: no samples");
  require(o.dpo_weight >= 0.0, "evaluate_objective: dpo_weight must be non-negative");
  const std::size_t n = samples.size();
  const bool use_dpo = o.dpo_weight > 0.0;
  if (use_dpo)
    for (const ArSample& s : samples)
      require(!s.lr_tokens.empty(), "evaluate_objective: DPO enabled but a sample has no LR tokens");

  std::vector<double> ce(n, 0.0), dpo(n, 0.0);
  std::vector<ArWeights> grads(with_gradient ? n : 0);
  const ArWeights zero = with_gradient ? m.weights().zeros_like() : ArWeights{};
  std::string failure;

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      const ArSample& s = samples[i];
      ForwardCache cache;
      const Matrix logits = m.forward(s.batch, cache);
      LossValue c = ce_loss(logits, s.batch.targets);
      ce[i] = c.value;
      Matrix dlogits = std::move(c.dlogits);
      if (use_dpo) {
        LossValue d = dpo_loss(logits, s.batch.targets, s.lr_tokens, o.beta, o.sequence_level_dpo);
        dpo[i] = d.value;
        dlogits += o.dpo_weight * d.dlogits;
      }
      if (with_gradient) {
        grads[i] = zero;
        m.backward(s.batch, cache, dlogits, grads[i]);
      }
    } catch (const std::exception& e) {
#pragma omp critical
      if (failure.empty()) failure = e.what();
    }
  }
  if (!failure.empty()) throw PreconditionError(failure);

  ObjectiveValue out;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.ce += ce[i] * inv;
    out.dpo += dpo[i] * inv;
  }
  out.total = out.ce + o.dpo_weight * out.dpo;
  if (with_gradient) {
    out.grad = zero;
    for (std::size_t i = 0; i < n; ++i) out.grad.add_scaled(grads[i], inv);
  }
  return out;
}

std::vector<TrainRecord> train_ar(ArModel& m, std::span<const ArSample> samples, const TrainOptions& o,
                                  const std::function<void(const TrainRecord&)>& on_record) {
  require(!samples.empty(), "train_ar: no samples");
  require(o.steps >= 0 && o.batch_size >= 0 && o.log_every > 0, "train_ar: invalid step, batch or log settings");
  require(o.lr > 0.0 && o.beta1 >= 0.0 && o.beta1 < 1.0 && o.beta2 > 0.0 && o.beta2 < 1.0 && o.eps > 0.0,
          "train_ar: invalid optimizer settings");

  const std::size_t n = samples.size();
  const std::size_t batch = o.batch_size == 0 ? n : std::min<std::size_t>(o.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(o.seed);
  std::size_t cursor = n;

  ArWeights first = m.weights().zeros_like(), second = first;
  std::vector<TrainRecord> records;
  std::vector<ArSample> picked;
  for (int step = 0; step < o.steps; ++step) {
    std::span<const ArSample> current = samples;
    if (batch < n) {
      picked.clear();
      for (std::size_t k = 0; k < batch; ++k) {
        if (cursor == n) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        picked.push_back(samples[order[cursor++]]);
      }
      current = picked;
    }
    ObjectiveValue v = evaluate_objective(m, current, o.objective);
    if (step % o.log_every == 0 || step + 1 == o.steps) {
      records.push_back({step, v.ce, v.dpo, v.total});
      if (on_record) on_record(records.back());
    }

    double clip = 1.0;
    if (o.clip_norm > 0.0) {
      const double norm = std::sqrt(v.grad.squared_norm());
      if (norm > o.clip_norm) clip = o.clip_norm / norm;
    }
    const double t = step + 1;
    const double c1 = o.beta1 > 0.0 ? 1.0 - std::pow(o.beta1, t) : 1.0;
    const double c2 = 1.0 - std::pow(o.beta2, t);
    std::vector<double*> g, m1, m2;
    v.grad.visit([&](const std::string&, auto& x) { g.push_back(x.data()); });
    first.visit([&](const std::string&, auto& x) { m1.push_back(x.data()); });
    second.visit([&](const std::string&, auto& x) { m2.push_back(x.data()); });
    std::size_t k = 0;
    m.weights().visit([&](const std::string&, auto& p) {
      double* gk = g[k];
      double* a = m1[k];
      double* b = m2[k];
      ++k;
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double gi = gk[i] * clip;
        a[i] = o.beta1 * a[i] + (1.0 - o.beta1) * gi;
        b[i] = o.beta2 * b[i] + (1.0 - o.beta2) * gi * gi;
        p.data()[i] -= o.lr * (a[i] / c1) / (std::sqrt(b[i] / c2) + o.eps);
      }
    });
    require(m.weights().all_finite(), "train_ar: parameters became non-finite at step " + std::to_string(step));
  }
  return records;
}

std::string train_record_json(const TrainRecord& r) {
  nlohmann::json j;
  j["step"] = r.step;
  j["ce"] = r.ce;
  j["dpo"] = r.dpo;
  j["total"] = r.total;
  return j.dump();
}

}  // namespace hitok
