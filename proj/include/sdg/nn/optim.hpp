#pragma once

#include <cmath>
#include <vector>

#include "sdg/nn/param.hpp"

namespace sdg::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global gradient norm; <= 0 disables clipping
};

class Adam {
 public:
  Adam(const ParamList& params, AdamConfig cfg) : params_(params), cfg_(cfg) {
    for (const Param* p : params_) {
      m_.emplace_back(p->value.size(), 0.0f);
      v_.emplace_back(p->value.size(), 0.0f);
    }
  }

  /// Applies one update from the accumulated gradients. Returns the
  /// pre-clipping gradient norm.
  double step(double lr_scale = 1.0) {
    ++t_;
    double sq = 0.0;
    for (const Param* p : params_)
      for (float g : p->grad.values()) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    const double clip = cfg_.clip_norm > 0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double lr = cfg_.lr * lr_scale;
    std::size_t pi = 0;
    for (Param* p : params_) {
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double g = static_cast<double>(p->grad[i]) * clip;
        m[i] = static_cast<float>(cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g);
        v[i] = static_cast<float>(cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g);
        const double mh = m[i] / bc1, vh = v[i] / bc2;
        p->value[i] -= static_cast<float>(lr * mh / (std::sqrt(vh) + cfg_.eps));
      }
      ++pi;
    }
    return norm;
  }

  long steps_taken() const { return t_; }

 private:
  ParamList params_;
  AdamConfig cfg_;
  std::vector<std::vector<float>> m_, v_;
  long t_ = 0;
};

/// Exponential moving average of parameter values.
class Ema {
 public:
  explicit Ema(const ParamList& params) {
    for (const Param* p : params) shadow_.push_back(p->value.storage());
  }

  void update(const ParamList& params, double decay) {
    std::size_t pi = 0;
    for (const Param* p : params) {
      auto& s = shadow_[pi++];
      for (std::size_t i = 0; i < s.size(); ++i)
        s[i] = static_cast<float>(decay * s[i] + (1.0 - decay) * p->value[i]);
    }
  }

  void copy_to(const ParamList& params) const {
    std::size_t pi = 0;
    for (Param* p : params) p->value.storage() = shadow_[pi++];
  }

 private:
  std::vector<std::vector<float>> shadow_;
};

}  // namespace sdg::nn
