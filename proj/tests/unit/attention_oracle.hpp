#pragma once

// Naive scalar reference for multi-head cross-attention with structured
// fusion. Written from the defining sums, with no shared code from the
// library kernels.

#include <cmath>
#include <vector>

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat matmul_t(const Mat& x, const Mat& w) {  // x (r, in), w (out, in) -> (r, out)
  Mat out(x.size(), std::vector<double>(w.size(), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t o = 0; o < w.size(); ++o)
      for (std::size_t j = 0; j < w[o].size(); ++j) out[i][o] += x[i][j] * w[o][j];
  return out;
}

/// Map of head h: softmax over keys of q.k / sqrt(d).
inline Mat head_map(const Mat& q, const Mat& k, std::size_t h, std::size_t d) {
  Mat m(q.size(), std::vector<double>(k.size()));
  for (std::size_t i = 0; i < q.size(); ++i) {
    double mx = -1e300;
    for (std::size_t j = 0; j < k.size(); ++j) {
      double s = 0;
      for (std::size_t t = 0; t < d; ++t) s += q[i][h * d + t] * k[j][h * d + t];
      m[i][j] = s / std::sqrt(static_cast<double>(d));
      mx = std::max(mx, m[i][j]);
    }
    double z = 0;
    for (auto& v : m[i]) z += (v = std::exp(v - mx));
    for (auto& v : m[i]) v /= z;
  }
  return m;
}

enum class Mode { Baseline, MultiValue, MultiKey, MultiKeyFixed };

/// contexts[0] is the prompt; the rest are concept sequences in summation order.
inline Mat fuse(const Mat& x, const std::vector<Mat>& contexts, const Mat& wq, const Mat& wk,
                const Mat& wv, const Mat& wo, std::size_t heads, Mode mode) {
  const Mat q = matmul_t(x, wq);
  std::vector<Mat> ks, vs;
  for (const auto& c : contexts) {
    ks.push_back(matmul_t(c, wk));
    vs.push_back(matmul_t(c, wv));
  }
  const std::size_t inner = wq.size(), d = inner / heads, rows = x.size();
  const std::size_t terms = mode == Mode::Baseline ? 1 : contexts.size();
  Mat merged(rows, std::vector<double>(inner, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    const Mat mp = head_map(q, ks[0], h, d);
    for (std::size_t term = 0; term < terms; ++term) {
      const Mat m = (mode == Mode::MultiKey || mode == Mode::MultiKeyFixed) ? head_map(q, ks[term], h, d) : mp;
      const Mat& v = mode == Mode::MultiKeyFixed ? vs[terms - 1] : vs[term];
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t t = 0; t < d; ++t) {
          double acc = 0;
          for (std::size_t j = 0; j < v.size(); ++j) acc += m[i][j] * v[j][h * d + t];
          merged[i][h * d + t] += acc / static_cast<double>(terms);
        }
    }
  }
  return matmul_t(merged, wo);
}

}  // namespace oracle
