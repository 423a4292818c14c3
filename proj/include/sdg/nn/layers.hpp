#pragma once

#include <cmath>
#include <string>

#include "sdg/nn/graph.hpp"

namespace sdg::nn {

struct Linear {
  Param weight;  // (out, in)
  Param bias;    // (out), empty when bias is disabled

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, bool with_bias = true)
      : weight(name + ".weight", {out, in}) {
    if (with_bias) bias = Param(name + ".bias", {out});
  }

  bool has_bias() const { return !bias.value.empty(); }

  void init(Rng& rng, double stddev) {
    init_normal(weight, rng, stddev);
    if (has_bias()) init_constant(bias, 0.0f);
  }
  void init(Rng& rng) { init(rng, 1.0 / std::sqrt(static_cast<double>(weight.value.dim(1)))); }

  Var operator()(Graph& g, Var x) const {
    Var y = g.linear(x, g.param(weight));
    return has_bias() ? g.add_row_bias(y, g.param(bias)) : y;
  }

  void collect(ParamList& out) {
    out.add(weight);
    if (has_bias()) out.add(bias);
  }
};

struct Conv2d {
  Param weight;  // (out, in, k, k)
  Param bias;    // (out)
  std::size_t stride = 1;
  std::size_t pad = 1;

  Conv2d() = default;
  Conv2d(const std::string& name, std::size_t in, std::size_t out, std::size_t k = 3,
         std::size_t stride_ = 1)
      : weight(name + ".weight", {out, in, k, k}), bias(name + ".bias", {out}), stride(stride_),
        pad(k / 2) {}

  void init(Rng& rng, double gain = 1.0) {
    const double fan_in = static_cast<double>(weight.value.size() / weight.value.dim(0));
    init_normal(weight, rng, gain / std::sqrt(fan_in));
    init_constant(bias, 0.0f);
  }

  Var operator()(Graph& g, Var x) const {
    return g.conv2d(x, g.param(weight), g.param(bias), stride, pad);
  }

  void collect(ParamList& out) {
    out.add(weight);
    out.add(bias);
  }
};

/// Affine parameters shared by layer norm and group norm.
struct Norm {
  Param gamma;
  Param beta;

  Norm() = default;
  Norm(const std::string& name, std::size_t width)
      : gamma(name + ".gamma", {width}), beta(name + ".beta", {width}) {}

  void init() {
    init_constant(gamma, 1.0f);
    init_constant(beta, 0.0f);
  }

  Var layer(Graph& g, Var x) const { return g.layer_norm(x, g.param(gamma), g.param(beta)); }
  Var group(Graph& g, Var x, std::size_t groups) const {
    return g.group_norm(x, groups, g.param(gamma), g.param(beta));
  }

  void collect(ParamList& out) {
    out.add(gamma);
    out.add(beta);
  }
};

}  // namespace sdg::nn
