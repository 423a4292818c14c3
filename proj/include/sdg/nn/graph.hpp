#pragma once

#include <cmath>
#include <algorithm>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdg/attention/attention.hpp"
#include "sdg/core/error.hpp"
#include "sdg/core/gemm.hpp"
#include "sdg/nn/param.hpp"

// Tape-based reverse-mode differentiation over float tensors. A Graph built
// with gradients disabled records no backward closures and serves as the plain
// inference path, so training and sampling share every forward kernel.

namespace sdg::nn {

struct Var {
  std::size_t id = 0;
};

class Graph {
 public:
  explicit Graph(bool grad_enabled = false) : grad_enabled_(grad_enabled) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var constant(Tensorf value) { return push(std::move(value), false); }

  /// Binds a parameter. Only a gradient-enabled graph writes to Param::grad;
  /// inference graphs treat the parameter as read-only.
  Var param(const Param& p) {
    Node n;
    n.external = &p.value;
    if (grad_enabled_) n.param = const_cast<Param*>(&p);
    n.needs_grad = grad_enabled_;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  const Tensorf& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.external ? *n.external : n.value;
  }

  const Shape& shape(Var v) const { return value(v).shape(); }

  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  /// Gradient buffer of a node; parameter leaves accumulate into Param::grad.
  Tensorf& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.param) return n.param->grad;
    if (n.grad.size() != value(v).size()) n.grad = Tensorf(value(v).shape());
    return n.grad;
  }

  /// Seeds d(loss)/d(loss) = scale and runs the tape in reverse.
  void backward(Var loss, float scale = 1.0f) {
    require(grad_enabled_, ErrorCode::InvalidConfig, "backward on a graph without gradients");
    require(value(loss).size() == 1, ErrorCode::ShapeMismatch, "backward needs a scalar loss");
    grad(loss)[0] += scale;
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
      if (nodes_[it->first].grad.empty() && !nodes_[it->first].param) continue;
      it->second();
    }
  }

  // ---- elementwise -------------------------------------------------------

  Var add(Var a, Var b) {
    const Tensorf &x = value(a), &y = value(b);
    require(x.shape() == y.shape(), ErrorCode::ShapeMismatch,
            "add: " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
    Tensorf out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
    const Var o = push(std::move(out), needs_grad(a) || needs_grad(b));
    record(o, [this, a, b, o] {
      const Tensorf& g = grad(o);
      if (needs_grad(a)) accumulate(grad(a), g);
      if (needs_grad(b)) accumulate(grad(b), g);
    });
    return o;
  }

  Var scale(Var a, float s) {
    Tensorf out = value(a);
    for (auto& v : out.values()) v *= s;
    const Var o = push(std::move(out), needs_grad(a));
    record(o, [this, a, o, s] {
      Tensorf& ga = grad(a);
      const Tensorf& g = grad(o);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    });
    return o;
  }

  Var silu(Var a) {
    const Tensorf& x = value(a);
    Tensorf out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * sigmoid(x[i]);
    const Var o = push(std::move(out), needs_grad(a));
    record(o, [this, a, o] {
      const Tensorf& x = value(a);
      const Tensorf& g = grad(o);
      Tensorf& ga = grad(a);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const float s = sigmoid(x[i]);
        ga[i] += g[i] * s * (1.0f + x[i] * (1.0f - s));
      }
    });
    return o;
  }

  /// x * sigmoid(1.702 x)
  Var quick_gelu(Var a) {
    const Tensorf& x = value(a);
    Tensorf out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * sigmoid(1.702f * x[i]);
    const Var o = push(std::move(out), needs_grad(a));
    record(o, [this, a, o] {
      const Tensorf& x = value(a);
      const Tensorf& g = grad(o);
      Tensorf& ga = grad(a);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const float s = sigmoid(1.702f * x[i]);
        ga[i] += g[i] * (s + 1.702f * x[i] * s * (1.0f - s));
      }
    });
    return o;
  }

  // ---- dense -------------------------------------------------------------

  /// x (r, in) times w (out, in) transposed.
  Var linear(Var x, Var w) {
    const Tensorf &xv = value(x), &wv = value(w);
    require(xv.rank() == 2 && wv.rank() == 2 && xv.dim(1) == wv.dim(1), ErrorCode::ShapeMismatch,
            "linear: " + shape_string(xv.shape()) + " x " + shape_string(wv.shape()) + "^T");
    const std::size_t r = xv.dim(0), in = xv.dim(1), out_dim = wv.dim(0);
    Tensorf out({r, out_dim});
    gemm::nt(r, out_dim, in, xv.data(), wv.data(), out.data());
    const Var o = push(std::move(out), needs_grad(x) || needs_grad(w));
    record(o, [this, x, w, o, r, in, out_dim] {
      const Tensorf& g = grad(o);
      if (needs_grad(x)) gemm::nn(r, in, out_dim, g.data(), value(w).data(), grad(x).data(), true);
      if (needs_grad(w)) gemm::tn(out_dim, in, r, g.data(), value(x).data(), grad(w).data(), true);
    });
    return o;
  }

  /// Adds a (n) bias to every row of a (r, n) matrix.
  Var add_row_bias(Var x, Var b) {
    const Tensorf &xv = value(x), &bv = value(b);
    const std::size_t n = bv.size();
    require(xv.size() % n == 0 && xv.shape().back() == n, ErrorCode::ShapeMismatch,
            "add_row_bias: width mismatch");
    Tensorf out = xv;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
    const Var o = push(std::move(out), needs_grad(x) || needs_grad(b));
    record(o, [this, x, b, o, n] {
      const Tensorf& g = grad(o);
      if (needs_grad(x)) accumulate(grad(x), g);
      if (needs_grad(b)) {
        Tensorf& gb = grad(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
      }
    });
    return o;
  }

  /// Adds v (C) to every spatial position of x (C, H, W).
  Var add_channel_bias(Var x, Var v) {
    const Tensorf &xv = value(x), &vv = value(v);
    const std::size_t c = xv.dim(0), hw = xv.size() / c;
    require(vv.size() == c, ErrorCode::ShapeMismatch, "add_channel_bias: channel mismatch");
    Tensorf out = xv;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] += vv[ch];
    const Var o = push(std::move(out), needs_grad(x) || needs_grad(v));
    record(o, [this, x, v, o, c, hw] {
      const Tensorf& g = grad(o);
      if (needs_grad(x)) accumulate(grad(x), g);
      if (needs_grad(v)) {
        Tensorf& gv = grad(v);
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t i = 0; i < hw; ++i) gv[ch] += g[ch * hw + i];
      }
    });
    return o;
  }

  Var reshape(Var a, Shape shape) {
    Tensorf out = value(a);
    out.reshape(std::move(shape));
    const Var o = push(std::move(out), needs_grad(a));
    record(o, [this, a, o] { accumulate(grad(a), grad(o)); });
    return o;
  }

  /// (r, c) -> (c, r); higher-rank inputs are treated as (dim0, rest).
  Var transpose(Var a, Shape out_shape) {
    const Tensorf& x = value(a);
    const std::size_t r = x.dim(0), c = x.size() / r;
    require(shape_size(out_shape) == x.size() && out_shape[0] == c, ErrorCode::ShapeMismatch,
            "transpose: bad output shape");
    Tensorf out(std::move(out_shape));
    gemm::transpose(r, c, x.data(), out.data());
    const Var o = push(std::move(out), needs_grad(a));
    record(o, [this, a, o, r, c] {
      const Tensorf& g = grad(o);
      Tensorf& ga = grad(a);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
    });
    return o;
  }

  /// Rows of `table` (V, c) selected by ids.
  Var embedding(std::span<const int> ids, Var table) {
    const Tensorf& t = value(table);
    const std::size_t c = t.dim(1);
    Tensorf out({ids.size(), c});
    for (std::size_t i = 0; i < ids.size(); ++i) {
      require(ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < t.dim(0), ErrorCode::ShapeMismatch,
              "embedding id " + std::to_string(ids[i]) + " out of range");
      std::copy_n(t.data() + static_cast<std::size_t>(ids[i]) * c, c, out.data() + i * c);
    }
    std::vector<int> idv(ids.begin(), ids.end());
    const Var o = push(std::move(out), needs_grad(table));
    record(o, [this, table, o, idv = std::move(idv), c] {
      const Tensorf& g = grad(o);
      Tensorf& gt = grad(table);
      for (std::size_t i = 0; i < idv.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) gt[static_cast<std::size_t>(idv[i]) * c + j] += g[i * c + j];
    });
    return o;
  }

  // ---- normalization -----------------------------------------------------

  /// Per-row layer norm over the last dimension of a (r, n) matrix.
  Var layer_norm(Var x, Var gamma, Var beta, float eps = 1e-5f) {
    const Tensorf& xv = value(x);
    const std::size_t n = xv.shape().back(), r = xv.size() / n;
    return normalize(x, gamma, beta, r, n, n, eps);
  }

  /// Group norm over a (C, H, W) map; affine parameters are per channel.
  Var group_norm(Var x, std::size_t groups, Var gamma, Var beta, float eps = 1e-5f) {
    const Tensorf& xv = value(x);
    const std::size_t c = xv.dim(0);
    require(c % groups == 0, ErrorCode::IndivisibleDim, "group_norm: channels not divisible");
    const std::size_t per_group = xv.size() / groups;
    const std::size_t per_channel = xv.size() / c;
    return normalize(x, gamma, beta, groups, per_group, per_channel, eps);
  }

  // ---- convolution and resampling ----------------------------------------

  /// x (Cin, H, W), w (Cout, Cin, k, k), b (Cout); zero padding.
  Var conv2d(Var x, Var w, Var b, std::size_t stride, std::size_t pad) {
    const Tensorf &xv = value(x), &wv = value(w);
    const std::size_t cin = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
    const std::size_t cout = wv.dim(0), k = wv.dim(2);
    require(wv.dim(1) == cin && wv.dim(3) == k, ErrorCode::ShapeMismatch, "conv2d: weight shape");
    const std::size_t ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
    const std::size_t patch = cin * k * k, npos = ho * wo;
    auto col = std::make_shared<std::vector<float>>(patch * npos, 0.0f);
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          float* dst = col->data() + ((ci * k + ky) * k + kx) * npos;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (ix < 0 || ix >= static_cast<long>(wd)) continue;
              dst[oy * wo + ox] = xv[(ci * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)];
            }
          }
        }
    Tensorf out({cout, ho, wo});
    gemm::nn(cout, npos, patch, wv.data(), col->data(), out.data());
    const Tensorf& bv = value(b);
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t i = 0; i < npos; ++i) out[co * npos + i] += bv[co];
    const Var o = push(std::move(out), needs_grad(x) || needs_grad(w) || needs_grad(b));
    record(o, [this, x, w, b, o, col, cin, h, wd, cout, k, ho, wo, stride, pad, patch, npos] {
      const Tensorf& g = grad(o);
      if (needs_grad(b)) {
        Tensorf& gb = grad(b);
        for (std::size_t co = 0; co < cout; ++co)
          for (std::size_t i = 0; i < npos; ++i) gb[co] += g[co * npos + i];
      }
      if (needs_grad(w)) gemm::nt(cout, patch, npos, g.data(), col->data(), grad(w).data(), true);
      if (needs_grad(x)) {
        std::vector<float> dcol(patch * npos);
        gemm::tn(patch, npos, cout, value(w).data(), g.data(), dcol.data());
        Tensorf& gx = grad(x);
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const float* src = dcol.data() + ((ci * k + ky) * k + kx) * npos;
              for (std::size_t oy = 0; oy < ho; ++oy) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                if (iy < 0 || iy >= static_cast<long>(h)) continue;
                for (std::size_t ox = 0; ox < wo; ++ox) {
                  const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                  if (ix < 0 || ix >= static_cast<long>(wd)) continue;
                  gx[(ci * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)] += src[oy * wo + ox];
                }
              }
            }
      }
    });
    return o;
  }

  /// Nearest-neighbour 2x upsampling of (C, H, W).
  Var upsample2x(Var x) {
    const Tensorf& xv = value(x);
    const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    Tensorf out({c, 2 * h, 2 * w});
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < 2 * h; ++y)
        for (std::size_t xx = 0; xx < 2 * w; ++xx)
          out[(ch * 2 * h + y) * 2 * w + xx] = xv[(ch * h + y / 2) * w + xx / 2];
    const Var o = push(std::move(out), needs_grad(x));
    record(o, [this, x, o, c, h, w] {
      const Tensorf& g = grad(o);
      Tensorf& gx = grad(x);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < 2 * h; ++y)
          for (std::size_t xx = 0; xx < 2 * w; ++xx)
            gx[(ch * h + y / 2) * w + xx / 2] += g[(ch * 2 * h + y) * 2 * w + xx];
    });
    return o;
  }

  /// Channel concatenation of (Ca, H, W) and (Cb, H, W).
  Var concat_channels(Var a, Var b) {
    const Tensorf &av = value(a), &bv = value(b);
    require(av.rank() == 3 && bv.rank() == 3 && av.dim(1) == bv.dim(1) && av.dim(2) == bv.dim(2),
            ErrorCode::ShapeMismatch, "concat_channels: spatial mismatch");
    Tensorf out({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
    std::copy(av.storage().begin(), av.storage().end(), out.storage().begin());
    std::copy(bv.storage().begin(), bv.storage().end(),
              out.storage().begin() + static_cast<long>(av.size()));
    const std::size_t na = av.size();
    const Var o = push(std::move(out), needs_grad(a) || needs_grad(b));
    record(o, [this, a, b, o, na] {
      const Tensorf& g = grad(o);
      if (needs_grad(a)) {
        Tensorf& ga = grad(a);
        for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
      }
      if (needs_grad(b)) {
        Tensorf& gb = grad(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
      }
    });
    return o;
  }

  // ---- attention ---------------------------------------------------------

  /// Causal multi-head attention core on projected rows q, k, v (l, inner).
  /// Row i reads keys 0..i only, and its arithmetic touches no later row.
  Var causal_attention(Var q, Var k, Var v, std::size_t heads) {
    const Tensorf &qv = value(q), &kv = value(k), &vv = value(v);
    require(qv.shape() == kv.shape() && kv.shape() == vv.shape() && qv.rank() == 2,
            ErrorCode::ShapeMismatch, "causal_attention: q/k/v shapes differ");
    const std::size_t l = qv.dim(0), inner = qv.dim(1), d = inner / heads;
    require(d * heads == inner, ErrorCode::IndivisibleDim, "causal_attention: heads");
    const float sc = 1.0f / std::sqrt(static_cast<float>(d));
    auto probs = std::make_shared<std::vector<float>>(heads * l * l, 0.0f);
    Tensorf out({l, inner});
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < l; ++i) {
        float* p = probs->data() + (h * l + i) * l;
        const float* qi = qv.data() + i * inner + h * d;
        for (std::size_t j = 0; j <= i; ++j) {
          const float* kj = kv.data() + j * inner + h * d;
          float s = 0.0f;
          for (std::size_t t = 0; t < d; ++t) s += qi[t] * kj[t];
          p[j] = s * sc;
        }
        attention::softmax_row(std::span<float>(p, i + 1));
        float* oi = out.data() + i * inner + h * d;
        for (std::size_t j = 0; j <= i; ++j) {
          const float* vj = vv.data() + j * inner + h * d;
          for (std::size_t t = 0; t < d; ++t) oi[t] += p[j] * vj[t];
        }
      }
    }
    const Var o = push(std::move(out), needs_grad(q) || needs_grad(k) || needs_grad(v));
    record(o, [this, q, k, v, o, probs, l, inner, d, heads, sc] {
      const Tensorf& g = grad(o);
      const Tensorf &qv = value(q), &kv = value(k), &vv = value(v);
      Tensorf dq({l, inner}), dk({l, inner}), dv({l, inner});
      std::vector<float> dp(l);
      for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < l; ++i) {
          const float* p = probs->data() + (h * l + i) * l;
          const float* gi = g.data() + i * inner + h * d;
          float dot = 0.0f;
          for (std::size_t j = 0; j <= i; ++j) {
            const float* vj = vv.data() + j * inner + h * d;
            float s = 0.0f;
            for (std::size_t t = 0; t < d; ++t) s += gi[t] * vj[t];
            dp[j] = s;
            dot += s * p[j];
            float* dvj = dv.data() + j * inner + h * d;
            for (std::size_t t = 0; t < d; ++t) dvj[t] += p[j] * gi[t];
          }
          const float* qi = qv.data() + i * inner + h * d;
          float* dqi = dq.data() + i * inner + h * d;
          for (std::size_t j = 0; j <= i; ++j) {
            const float ds = p[j] * (dp[j] - dot) * sc;
            const float* kj = kv.data() + j * inner + h * d;
            float* dkj = dk.data() + j * inner + h * d;
            for (std::size_t t = 0; t < d; ++t) {
              dqi[t] += ds * kj[t];
              dkj[t] += ds * qi[t];
            }
          }
        }
      }
      if (needs_grad(q)) accumulate(grad(q), dq);
      if (needs_grad(k)) accumulate(grad(k), dk);
      if (needs_grad(v)) accumulate(grad(v), dv);
    });
    return o;
  }

  /// Observer for prompt-term attention maps (n, h*w, l).
  using MapObserver = std::function<void(const Tensorf&)>;

  struct CrossAttentionParams {
    const Param& to_q;
    const Param& to_k;
    const Param& to_v;
    const Param& to_out;
    std::size_t heads;
  };

  /// Cross-attention of feature rows x (h*w, C) onto the prompt context
  /// (l, c_ctx) plus optional constant concept contexts. The forward pass is
  /// attention::fuse; gradients exist for the plain single-context case.
  Var cross_attention(Var x, Var prompt_ctx, const std::vector<const Tensorf*>& spans,
                      const std::vector<attention::TermKey>& keys,
                      const attention::FuseOptions& options, const CrossAttentionParams& p,
                      const MapObserver* observer = nullptr) {
    const Var wq = param(p.to_q), wk = param(p.to_k), wv = param(p.to_v), wo = param(p.to_out);
    const attention::ProjectionWeights<float> w{value(wq), value(wk), value(wv), value(wo), p.heads};
    const std::size_t hw = value(x).dim(0), cdim = value(x).dim(1);
    auto qh = std::make_shared<Tensorf>(
        attention::split_heads(attention::linear(value(x), value(wq)), p.heads));
    attention::Conditioning<float> cond{&value(prompt_ctx), spans, keys};
    const bool want_grad = needs_grad(x) || needs_grad(prompt_ctx) || grad_enabled_;
    require(!want_grad || spans.empty() || options.mode == attention::FusionMode::Baseline,
            ErrorCode::InvalidConfig, "structured fusion is inference-only");
    auto r = std::make_shared<attention::FuseResult<float>>(
        attention::fuse(*qh, cond, options, w, want_grad));
    if (observer && *observer) (*observer)(r->prompt_map);
    const Var o = push(r->out, want_grad);
    record(o, [this, x, prompt_ctx, wq, wk, wv, wo, o, qh, r, hw, cdim, heads = p.heads] {
      const Tensorf& g = grad(o);
      const Tensorf& ctx = value(prompt_ctx);
      const std::size_t l = ctx.dim(0), cctx = ctx.dim(1);
      const std::size_t inner = value(wq).dim(0), d = inner / heads;
      const float sc = 1.0f / std::sqrt(static_cast<float>(d));
      // out = merged Wo^T
      gemm::tn(cdim, inner, hw, g.data(), r->merged.data(), grad(wo).data(), true);
      Tensorf dmerged({hw, inner});
      gemm::nn(hw, inner, cdim, g.data(), value(wo).data(), dmerged.data());
      const Tensorf doh = attention::split_heads(dmerged, heads);
      Tensorf dqh({heads, hw, d}), dkh({heads, l, d}), dvh({heads, l, d});
      std::vector<float> dm(hw * l);
      for (std::size_t h = 0; h < heads; ++h) {
        const float* m = r->prompt_map.data() + h * hw * l;
        const float* go = doh.data() + h * hw * d;
        const float* vh = r->prompt_values.data() + h * l * d;
        const float* kh = r->prompt_keys.data() + h * l * d;
        gemm::nt(hw, l, d, go, vh, dm.data());
        gemm::tn(l, d, hw, m, go, dvh.data() + h * l * d);
        for (std::size_t i = 0; i < hw; ++i) {
          float dot = 0.0f;
          for (std::size_t j = 0; j < l; ++j) dot += dm[i * l + j] * m[i * l + j];
          for (std::size_t j = 0; j < l; ++j)
            dm[i * l + j] = m[i * l + j] * (dm[i * l + j] - dot) * sc;
        }
        gemm::nn(hw, d, l, dm.data(), kh, dqh.data() + h * hw * d);
        gemm::tn(l, d, hw, dm.data(), qh->data() + h * hw * d, dkh.data() + h * l * d);
      }
      const Tensorf dq = attention::merge_heads(dqh);
      const Tensorf dk = attention::merge_heads(dkh);
      const Tensorf dv = attention::merge_heads(dvh);
      gemm::tn(inner, cdim, hw, dq.data(), value(x).data(), grad(wq).data(), true);
      if (needs_grad(x)) gemm::nn(hw, cdim, inner, dq.data(), value(wq).data(), grad(x).data(), true);
      gemm::tn(inner, cctx, l, dk.data(), ctx.data(), grad(wk).data(), true);
      gemm::tn(inner, cctx, l, dv.data(), ctx.data(), grad(wv).data(), true);
      if (needs_grad(prompt_ctx)) {
        Tensorf& gc = grad(prompt_ctx);
        gemm::nn(l, cctx, inner, dk.data(), value(wk).data(), gc.data(), true);
        gemm::nn(l, cctx, inner, dv.data(), value(wv).data(), gc.data(), true);
      }
    });
    return o;
  }

  // ---- losses ------------------------------------------------------------

  /// Mean squared error against a constant target.
  Var mse(Var pred, const Tensorf& target) {
    const Tensorf& p = value(pred);
    require(p.shape() == target.shape(), ErrorCode::ShapeMismatch, "mse: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = static_cast<double>(p[i]) - target[i];
      acc += d * d;
    }
    const Var o = push(Tensorf(Shape{1}, std::vector<float>{static_cast<float>(acc / static_cast<double>(p.size()))}),
                       needs_grad(pred));
    record(o, [this, pred, o, target] {
      const float g = grad(o)[0] * 2.0f / static_cast<float>(target.size());
      const Tensorf& p = value(pred);
      Tensorf& gp = grad(pred);
      for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g * (p[i] - target[i]);
    });
    return o;
  }

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensorf value;
    const Tensorf* external = nullptr;
    Param* param = nullptr;
    Tensorf grad;
    bool needs_grad = false;
  };

  static float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

  static void accumulate(Tensorf& dst, const Tensorf& src) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  }

  Var push(Tensorf value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = grad_enabled_ && needs_grad;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  template <class Fn>
  void record(Var out, Fn&& fn) {
    if (!nodes_[out.id].needs_grad) return;
    tape_.emplace_back(out.id, std::forward<Fn>(fn));
  }

  /// Shared normalization: `groups` blocks of `block` contiguous values, with
  /// affine parameters indexed by (position / per_param) modulo the width.
  Var normalize(Var x, Var gamma, Var beta, std::size_t groups, std::size_t block,
                std::size_t per_param, float eps) {
    const Tensorf &xv = value(x), &gv = value(gamma), &bv = value(beta);
    const std::size_t width = gv.size();
    const bool rowwise = per_param == block;  // layer norm: params index within the row
    auto xhat = std::make_shared<std::vector<float>>(xv.size());
    auto rstd = std::make_shared<std::vector<float>>(groups);
    Tensorf out(xv.shape());
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const float* src = xv.data() + gi * block;
      double mean = 0.0;
      for (std::size_t i = 0; i < block; ++i) mean += src[i];
      mean /= static_cast<double>(block);
      double var = 0.0;
      for (std::size_t i = 0; i < block; ++i) var += (src[i] - mean) * (src[i] - mean);
      var /= static_cast<double>(block);
      const float rs = static_cast<float>(1.0 / std::sqrt(var + eps));
      (*rstd)[gi] = rs;
      for (std::size_t i = 0; i < block; ++i) {
        const std::size_t idx = gi * block + i;
        const float xh = static_cast<float>(src[i] - mean) * rs;
        (*xhat)[idx] = xh;
        const std::size_t pi = rowwise ? i : (idx / per_param) % width;
        out[idx] = xh * gv[pi] + bv[pi];
      }
    }
    const Var o = push(std::move(out), needs_grad(x) || needs_grad(gamma) || needs_grad(beta));
    record(o, [this, x, gamma, beta, o, xhat, rstd, groups, block, per_param, width, rowwise] {
      const Tensorf& g = grad(o);
      const Tensorf& gv = value(gamma);
      const bool gx_needed = needs_grad(x);
      Tensorf* gx = gx_needed ? &grad(x) : nullptr;
      Tensorf* gg = needs_grad(gamma) ? &grad(gamma) : nullptr;
      Tensorf* gb = needs_grad(beta) ? &grad(beta) : nullptr;
      std::vector<float> dxh(block);
      for (std::size_t gi = 0; gi < groups; ++gi) {
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t i = 0; i < block; ++i) {
          const std::size_t idx = gi * block + i;
          const std::size_t pi = rowwise ? i : (idx / per_param) % width;
          if (gg) (*gg)[pi] += g[idx] * (*xhat)[idx];
          if (gb) (*gb)[pi] += g[idx];
          dxh[i] = g[idx] * gv[pi];
          mean_d += dxh[i];
          mean_dx += dxh[i] * (*xhat)[idx];
        }
        if (!gx) continue;
        mean_d /= static_cast<double>(block);
        mean_dx /= static_cast<double>(block);
        const float rs = (*rstd)[gi];
        for (std::size_t i = 0; i < block; ++i) {
          const std::size_t idx = gi * block + i;
          (*gx)[idx] += rs * static_cast<float>(dxh[i] - mean_d - (*xhat)[idx] * mean_dx);
        }
      }
    });
    return o;
  }

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::vector<std::pair<std::size_t, std::function<void()>>> tape_;
};

}  // namespace sdg::nn
