#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "prefmix/core/error.hpp"

namespace prefmix::optim {

/// The learning rate used for 8B-parameter models; too small to move the
/// desk-scale models, so `TrainConfig::max_lr` defaults to 1e-3 instead.
inline constexpr double large_model_max_lr = 5e-7;

/// The link function is always the logistic sigmoid.
struct DpoConfig {
  double beta = 0.1;

  void validate() const { require(beta > 0.0, Errc::invalid_argument, "beta must be > 0"); }
};

/// HyPO adds  -lambda * mean_y[ log pi(y|x) * sg(pi(y|x) / pi_ref(y|x)) ]
/// over fresh rollouts y ~ pi. The log term is read as the policy's own
/// log-probability.
struct HypoConfig {
  DpoConfig dpo;
  double lambda = 0.1;
  int onpolicy_samples_per_step = 4;

  void validate() const {
    dpo.validate();
    require(lambda >= 0.0, Errc::invalid_argument, "lambda must be >= 0");
    require(onpolicy_samples_per_step >= 1, Errc::invalid_argument, "onpolicy_samples_per_step must be >= 1");
  }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double max_lr = 1e-3;
  double warmup_fraction = 0.03;
  int epochs = 1;
  int batch_size = 8;
  AdamConfig adam;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const {
    require(max_lr >= 0.0, Errc::invalid_argument, "max_lr must be >= 0");
    require(warmup_fraction >= 0.0 && warmup_fraction < 1.0, Errc::invalid_argument,
            "warmup_fraction must lie in [0, 1)");
    require(epochs >= 1, Errc::invalid_argument, "epochs must be >= 1");
    require(batch_size >= 1, Errc::invalid_argument, "batch_size must be >= 1");
  }
};

/// Linear warmup over ceil(warmup_fraction * total) steps, then cosine decay
/// to zero at step `total`.
inline double learning_rate(const TrainConfig& cfg, std::size_t step, std::size_t total) {
  if (total == 0) return 0.0;
  const auto warmup = static_cast<std::size_t>(std::ceil(cfg.warmup_fraction * static_cast<double>(total)));
  if (step < warmup) return cfg.max_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return cfg.max_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

class Adam {
 public:
  Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, double lr) {
    require(params.size() == m_.size() && grad.size() == m_.size(), Errc::invalid_argument,
            "Adam state does not match parameter count");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
    }
  }

  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace prefmix::optim
