#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "elnet/tensor.hpp"

namespace elnet {

enum class OptimizerKind { adam, sgd_momentum };

inline const char* to_string(OptimizerKind k) {
  return k == OptimizerKind::adam ? "adam" : "sgd_momentum";
}
inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd_momentum" || s == "sgd") return OptimizerKind::sgd_momentum;
  throw std::invalid_argument("unknown optimizer: " + s);
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;
};

// Owns per-parameter state; parameters must be passed in the same order on
// every step.
template <typename T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {
    if (cfg.lr < 0) throw std::invalid_argument("optimizer: lr must be >= 0");
  }

  void step(std::vector<TensorT<T>>& params) {
    if (state_.empty()) {
      state_.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i) {
        state_[i].m.assign(params[i].values().size(), T(0));
        if (cfg_.kind == OptimizerKind::adam)
          state_[i].v.assign(params[i].values().size(), T(0));
      }
    }
    if (state_.size() != params.size())
      throw std::invalid_argument("optimizer: parameter count changed");
    ++t_;
    for (size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i].values();
      const auto& g = params[i].grad();
      if (g.size() != p.size())
        throw std::invalid_argument("optimizer: gradient shape mismatch");
      auto& st = state_[i];
      if (cfg_.kind == OptimizerKind::adam) {
        const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
        const T corr1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, t_));
        const T corr2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, t_));
        const T lr = static_cast<T>(cfg_.lr);
        const T eps = static_cast<T>(cfg_.eps);
        for (size_t j = 0; j < p.size(); ++j) {
          st.m[j] = b1 * st.m[j] + (T(1) - b1) * g[j];
          st.v[j] = b2 * st.v[j] + (T(1) - b2) * g[j] * g[j];
          const T mhat = st.m[j] / corr1;
          const T vhat = st.v[j] / corr2;
          p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
      } else {
        const T mu = static_cast<T>(cfg_.momentum);
        const T lr = static_cast<T>(cfg_.lr);
        for (size_t j = 0; j < p.size(); ++j) {
          st.m[j] = mu * st.m[j] + g[j];
          p[j] -= lr * st.m[j];
        }
      }
    }
  }

  const OptimizerConfig& config() const { return cfg_; }

 private:
  struct State {
    std::vector<T> m;  // first moment / velocity
    std::vector<T> v;  // second moment (adam only)
  };
  OptimizerConfig cfg_;
  std::vector<State> state_;
  int64_t t_ = 0;
};

}  // namespace elnet
