#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sdg/core/rng.hpp"
#include "sdg/core/tensor.hpp"

namespace sdg::nn {

using Tensorf = Tensor<float>;

struct Param {
  std::string name;
  Tensorf value;
  Tensorf grad;

  Param() = default;
  Param(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(std::move(shape)) {}

  void zero_grad() { grad.fill(0.0f); }
};

/// Ordered, non-owning view over a model's parameters. Order defines the
/// checkpoint layout.
class ParamList {
 public:
  void add(Param& p) { params_.push_back(&p); }
  void extend(const ParamList& other) {
    params_.insert(params_.end(), other.params_.begin(), other.params_.end());
  }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }
  Param& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const Param* p : params_) n += p->value.size();
    return n;
  }
  void zero_grad() const {
    for (Param* p : params_) p->zero_grad();
  }

 private:
  std::vector<Param*> params_;
};

inline void init_normal(Param& p, Rng& rng, double stddev) {
  for (auto& v : p.value.values()) v = static_cast<float>(rng.normal() * stddev);
}

inline void init_constant(Param& p, float value) { p.value.fill(value); }

}  // namespace sdg::nn
