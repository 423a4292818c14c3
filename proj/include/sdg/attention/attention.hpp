#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sdg/core/error.hpp"
#include "sdg/core/gemm.hpp"
#include "sdg/core/tensor.hpp"

// Multi-head cross-attention with structured fusion.
//
// Query features are (h*w, model_dim) rows; text contexts are (l, ctx_dim)
// embedding rows. Per-head tensors use the layout (heads, rows, head_dim) and
// attention maps (heads, h*w, l). Projections carry no bias.

namespace sdg::attention {

enum class FusionMode { Baseline, MultiValue, MultiKey };

/// How per-concept maps are paired with values in MultiKey mode.
enum class KeyPairing { Paired, FixedK };

struct AttentionConfig {
  std::size_t heads = 1;
  std::size_t head_dim = 1;
  std::size_t kv_len = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  void validate() const {
    require(heads > 0 && head_dim > 0 && kv_len > 0 && height > 0 && width > 0,
            ErrorCode::InvalidConfig, "attention dimensions must be positive");
  }
  std::size_t queries() const { return height * width; }
};

template <class T>
struct ProjectionWeights {
  const Tensor<T>& to_q;    // (heads*head_dim, model_dim)
  const Tensor<T>& to_k;    // (heads*head_dim, ctx_dim)
  const Tensor<T>& to_v;    // (heads*head_dim, ctx_dim)
  const Tensor<T>& to_out;  // (model_dim, heads*head_dim)
  std::size_t heads;

  std::size_t inner_dim() const { return to_q.dim(0); }
  std::size_t head_dim() const { return inner_dim() / heads; }
  std::size_t model_dim() const { return to_q.dim(1); }
  std::size_t ctx_dim() const { return to_k.dim(1); }

  void validate() const {
    require(to_q.rank() == 2 && to_k.rank() == 2 && to_v.rank() == 2 && to_out.rank() == 2,
            ErrorCode::ShapeMismatch, "projection weights must be matrices");
    require(heads > 0 && inner_dim() % heads == 0, ErrorCode::IndivisibleDim,
            "inner dim " + std::to_string(inner_dim()) + " not divisible by " +
                std::to_string(heads) + " heads");
    require(to_k.dim(0) == inner_dim() && to_v.dim(0) == inner_dim() &&
                to_v.dim(1) == ctx_dim() && to_out.dim(0) == model_dim() &&
                to_out.dim(1) == inner_dim(),
            ErrorCode::ShapeMismatch, "inconsistent projection weight shapes");
  }
};

/// x (rows, in) times w (out, in) transposed.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w) {
  require(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(1), ErrorCode::ShapeMismatch,
          "linear: " + shape_string(x.shape()) + " x " + shape_string(w.shape()) + "^T");
  Tensor<T> out({x.dim(0), w.dim(0)});
  gemm::nt(x.dim(0), w.dim(0), x.dim(1), x.data(), w.data(), out.data());
  return out;
}

template <class T>
Tensor<T> split_heads(const Tensor<T>& rows, std::size_t heads) {
  const std::size_t r = rows.dim(0), inner = rows.dim(1), d = inner / heads;
  require(d * heads == inner, ErrorCode::IndivisibleDim, "split_heads: indivisible width");
  Tensor<T> out({heads, r, d});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < d; ++j) out.at(h, i, j) = rows.at(i, h * d + j);
  return out;
}

template <class T>
Tensor<T> merge_heads(const Tensor<T>& heads_t) {
  const std::size_t n = heads_t.dim(0), r = heads_t.dim(1), d = heads_t.dim(2);
  Tensor<T> out({r, n * d});
  for (std::size_t h = 0; h < n; ++h)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < d; ++j) out.at(i, h * d + j) = heads_t.at(h, i, j);
  return out;
}

template <class T>
struct Projected {
  Tensor<T> q;                  // (n, h*w, d)
  std::vector<Tensor<T>> keys;    // (n, l_i, d) each
  std::vector<Tensor<T>> values;  // (n, l_i, d) each
};

/// Q = f_Q(X); K_i = f_K(W_i), V_i = f_V(W_i) for every supplied context.
template <class T>
Projected<T> project(const Tensor<T>& x, std::span<const Tensor<T>* const> contexts,
                     const ProjectionWeights<T>& w) {
  w.validate();
  require(x.rank() == 2 && x.dim(1) == w.model_dim(), ErrorCode::ShapeMismatch,
          "project: features " + shape_string(x.shape()) + " vs model dim " +
              std::to_string(w.model_dim()));
  Projected<T> p;
  p.q = split_heads(linear(x, w.to_q), w.heads);
  for (const Tensor<T>* ctx : contexts) {
    require(ctx->rank() == 2 && ctx->dim(1) == w.ctx_dim(), ErrorCode::ShapeMismatch,
            "project: context " + shape_string(ctx->shape()) + " vs ctx dim " +
                std::to_string(w.ctx_dim()));
    p.keys.push_back(split_heads(linear(*ctx, w.to_k), w.heads));
    p.values.push_back(split_heads(linear(*ctx, w.to_v), w.heads));
  }
  return p;
}

/// In-place numerically stable softmax over a row.
template <class T>
void softmax_row(std::span<T> row) {
  T mx = row[0];
  for (T v : row) mx = std::max(mx, v);
  T sum = 0;
  for (T& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  const T inv = T{1} / sum;
  for (T& v : row) v *= inv;
}

/// Softmax(Q K^T / sqrt(d)) per head: (n, h*w, d) x (n, l, d) -> (n, h*w, l).
template <class T>
Tensor<T> attention_maps(const Tensor<T>& q, const Tensor<T>& k) {
  require(q.rank() == 3 && k.rank() == 3 && q.dim(0) == k.dim(0) && q.dim(2) == k.dim(2),
          ErrorCode::ShapeMismatch,
          "attention_maps: " + shape_string(q.shape()) + " vs " + shape_string(k.shape()));
  const std::size_t n = q.dim(0), rows = q.dim(1), l = k.dim(1), d = q.dim(2);
  const T scale = T{1} / std::sqrt(static_cast<T>(d));
  Tensor<T> m({n, rows, l});
  for (std::size_t h = 0; h < n; ++h) {
    T* mh = m.data() + h * rows * l;
    gemm::nt(rows, l, d, q.data() + h * rows * d, k.data() + h * l * d, mh);
    for (std::size_t i = 0; i < rows; ++i) {
      std::span<T> row(mh + i * l, l);
      for (T& v : row) v *= scale;
      softmax_row(row);
    }
  }
  return m;
}

/// M V per head: (n, h*w, l) x (n, l, d) -> (n, h*w, d).
template <class T>
Tensor<T> apply_maps(const Tensor<T>& m, const Tensor<T>& v) {
  require(m.rank() == 3 && v.rank() == 3 && m.dim(0) == v.dim(0) && m.dim(2) == v.dim(1),
          ErrorCode::ShapeMismatch,
          "apply_maps: " + shape_string(m.shape()) + " vs " + shape_string(v.shape()));
  const std::size_t n = m.dim(0), rows = m.dim(1), l = m.dim(2), d = v.dim(2);
  Tensor<T> out({n, rows, d});
  for (std::size_t h = 0; h < n; ++h)
    gemm::nn(rows, d, l, m.data() + h * rows * l, v.data() + h * l * d, out.data() + h * rows * d);
  return out;
}

struct FuseOptions {
  FusionMode mode = FusionMode::Baseline;
  KeyPairing pairing = KeyPairing::Paired;
  /// Empty means uniform 1/(k+1); otherwise one weight per term, prompt first.
  std::vector<double> concept_weights;
};

template <class T>
struct FuseHeadsResult {
  Tensor<T> out;         // (n, h*w, d)
  Tensor<T> prompt_map;  // (n, h*w, l) computed from the prompt keys
};

/// Combines per-head values. keys[0]/values[0] belong to the prompt and the
/// remaining entries to concepts, already in summation order.
template <class T>
FuseHeadsResult<T> fuse_heads(const Tensor<T>& q, std::span<const Tensor<T>> keys,
                              std::span<const Tensor<T>> values, const FuseOptions& opt) {
  require(!keys.empty() && keys.size() == values.size(), ErrorCode::ShapeMismatch,
          "fuse: need matching prompt keys and values");
  const std::size_t terms = keys.size();
  const std::size_t k = terms - 1;
  FuseHeadsResult<T> r;
  r.prompt_map = attention_maps(q, keys[0]);
  if (k == 0 || opt.mode == FusionMode::Baseline) {
    r.out = apply_maps(r.prompt_map, values[0]);
    return r;
  }
  require(opt.concept_weights.empty() || opt.concept_weights.size() == terms,
          ErrorCode::InvalidConfig,
          "expected " + std::to_string(terms) + " concept weights, got " +
              std::to_string(opt.concept_weights.size()));
  const bool uniform = opt.concept_weights.empty();

  auto term = [&](std::size_t i) -> Tensor<T> {
    if (opt.mode == FusionMode::MultiValue) return apply_maps(r.prompt_map, values[i]);
    const Tensor<T> own = i == 0 ? r.prompt_map : attention_maps(q, keys[i]);
    const Tensor<T>& v = opt.pairing == KeyPairing::Paired ? values[i] : values[k];
    return apply_maps(own, v);
  };

  for (std::size_t i = 0; i < terms; ++i) {
    Tensor<T> t = term(i);
    require(i == 0 || t.shape() == r.out.shape(), ErrorCode::ShapeMismatch,
            "fuse: concept term shape differs from prompt term");
    if (!uniform) {
      const T w = static_cast<T>(opt.concept_weights[i]);
      for (auto& v : t.values()) v *= w;
    }
    if (i == 0) {
      r.out = std::move(t);
    } else {
      for (std::size_t j = 0; j < t.size(); ++j) r.out[j] += t[j];
    }
  }
  if (uniform) {
    const T denom = static_cast<T>(terms);
    for (auto& v : r.out.values()) v /= denom;
  }
  return r;
}

/// Ordering key for concept terms: span start, then end.
struct TermKey {
  std::size_t start = 0;
  std::size_t end = 0;
  friend auto operator<=>(const TermKey&, const TermKey&) = default;
};

template <class T>
struct Conditioning {
  const Tensor<T>* prompt = nullptr;     // (l, ctx_dim), the aligned full prompt
  std::vector<const Tensor<T>*> spans;   // (l, ctx_dim) each, realigned concepts
  std::vector<TermKey> keys;             // one per span
};

template <class T>
struct FuseResult {
  Tensor<T> out;         // (h*w, model_dim)
  Tensor<T> prompt_map;  // (n, h*w, l)
  // Populated only when requested; used by the training backward pass.
  Tensor<T> prompt_keys, prompt_values, merged;
};

/// Full structured cross-attention given projected queries.
///
/// Concept terms are summed prompt first, then by (start, end), so the result
/// does not depend on the order in which spans are supplied.
template <class T>
FuseResult<T> fuse(const Tensor<T>& q, const Conditioning<T>& cond, const FuseOptions& opt,
                   const ProjectionWeights<T>& w, bool keep_intermediates = false) {
  w.validate();
  require(cond.prompt != nullptr, ErrorCode::ShapeMismatch, "fuse: missing prompt conditioning");
  require(cond.spans.size() == cond.keys.size(), ErrorCode::ShapeMismatch,
          "fuse: one ordering key per span required");
  require(q.rank() == 3 && q.dim(0) == w.heads && q.dim(2) == w.head_dim(),
          ErrorCode::ShapeMismatch, "fuse: queries " + shape_string(q.shape()));

  std::vector<std::size_t> order(cond.spans.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cond.keys[a] < cond.keys[b]; });

  std::vector<const Tensor<T>*> contexts{cond.prompt};
  const bool structured = opt.mode != FusionMode::Baseline;
  if (structured)
    for (std::size_t i : order) contexts.push_back(cond.spans[i]);

  std::vector<Tensor<T>> keys, values;
  for (const Tensor<T>* ctx : contexts) {
    require(ctx->rank() == 2 && ctx->dim(1) == w.ctx_dim(), ErrorCode::ShapeMismatch,
            "fuse: context " + shape_string(ctx->shape()));
    require(ctx->dim(0) == contexts[0]->dim(0), ErrorCode::ShapeMismatch,
            "fuse: concept sequence length differs from prompt");
    keys.push_back(split_heads(linear(*ctx, w.to_k), w.heads));
    values.push_back(split_heads(linear(*ctx, w.to_v), w.heads));
  }

  auto heads = fuse_heads<T>(q, keys, values, opt);
  FuseResult<T> r;
  Tensor<T> merged = merge_heads(heads.out);
  r.out = linear(merged, w.to_out);
  r.prompt_map = std::move(heads.prompt_map);
  if (keep_intermediates) {
    r.prompt_keys = std::move(keys[0]);
    r.prompt_values = std::move(values[0]);
    r.merged = std::move(merged);
  }
  return r;
}

/// Projects queries from features and fuses.
template <class T>
FuseResult<T> cross_attention(const Tensor<T>& x, const Conditioning<T>& cond,
                              const FuseOptions& opt, const ProjectionWeights<T>& w) {
  w.validate();
  require(x.rank() == 2 && x.dim(1) == w.model_dim(), ErrorCode::ShapeMismatch,
          "cross_attention: features " + shape_string(x.shape()));
  return fuse(split_heads(linear(x, w.to_q), w.heads), cond, opt, w);
}

/// Map averaged over heads: (n, h*w, l) -> (h*w, l).
template <class T>
Tensor<T> head_average(const Tensor<T>& m) {
  const std::size_t n = m.dim(0), rows = m.dim(1), l = m.dim(2);
  Tensor<T> out({rows, l});
  for (std::size_t h = 0; h < n; ++h)
    for (std::size_t i = 0; i < rows * l; ++i) out[i] += m[h * rows * l + i];
  for (auto& v : out.values()) v /= static_cast<T>(n);
  return out;
}

}  // namespace sdg::attention
