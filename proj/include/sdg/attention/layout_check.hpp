#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdg/attention/attention.hpp"
#include "sdg/core/error.hpp"
#include "sdg/core/tensor.hpp"

namespace sdg::attention {

/// Prompt-term attention maps captured at one denoising step, one (n, h*w, l)
/// tensor per cross-attention layer in forward order.
struct AttentionSnapshot {
  std::size_t step = 0;      // 0 = first denoising step
  std::size_t timestep = 0;  // schedule index
  std::vector<Tensor<float>> layers;
};

struct AttentionTrace {
  std::size_t content_len = 0;
  std::vector<AttentionSnapshot> snapshots;
};

struct LayoutReport {
  // First snapshot (step 0): per-layer bitwise equality and max |diff|.
  std::vector<bool> first_step_equal;
  std::vector<double> first_step_max_diff;
  // Later snapshots: mean Pearson correlation over per-token spatial maps.
  std::vector<std::size_t> later_steps;
  std::vector<double> later_mean_correlation;

  bool first_step_all_equal() const {
    for (bool b : first_step_equal)
      if (!b) return false;
    return !first_step_equal.empty();
  }
  double min_later_correlation() const {
    double m = 1.0;
    for (double c : later_mean_correlation) m = std::min(m, c);
    return m;
  }
};

/// Spatial map of token `column`, averaged over heads: (n, h*w, l) -> h*w values.
inline std::vector<double> token_map(const Tensor<float>& m, std::size_t column) {
  const std::size_t n = m.dim(0), rows = m.dim(1), l = m.dim(2);
  std::vector<double> out(rows, 0.0);
  for (std::size_t h = 0; h < n; ++h)
    for (std::size_t i = 0; i < rows; ++i) out[i] += m[(h * rows + i) * l + column];
  for (auto& v : out) v /= static_cast<double>(n);
  return out;
}

/// Compares two traces recorded from the same seed and step layout. At the
/// first step the maps are compared bitwise; at later steps the correlation of
/// head-averaged spatial maps for every content token is averaged over layers.
inline LayoutReport layout_invariance_check(const AttentionTrace& a, const AttentionTrace& b) {
  require(a.snapshots.size() == b.snapshots.size() && !a.snapshots.empty() &&
              a.content_len == b.content_len,
          ErrorCode::RecordMismatch, "traces have different step layouts or prompts");
  LayoutReport report;
  for (std::size_t s = 0; s < a.snapshots.size(); ++s) {
    const auto& sa = a.snapshots[s];
    const auto& sb = b.snapshots[s];
    require(sa.step == sb.step && sa.timestep == sb.timestep && sa.layers.size() == sb.layers.size(),
            ErrorCode::RecordMismatch, "snapshot " + std::to_string(s) + " differs in layout");
    for (std::size_t l = 0; l < sa.layers.size(); ++l)
      require(sa.layers[l].shape() == sb.layers[l].shape(), ErrorCode::RecordMismatch,
              "layer " + std::to_string(l) + " map shapes differ");
    if (sa.step == 0) {
      for (std::size_t l = 0; l < sa.layers.size(); ++l) {
        report.first_step_equal.push_back(sa.layers[l] == sb.layers[l]);
        report.first_step_max_diff.push_back(max_abs_diff(sa.layers[l], sb.layers[l]));
      }
      continue;
    }
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t l = 0; l < sa.layers.size(); ++l) {
      for (std::size_t col = 1; col <= a.content_len; ++col) {
        const auto ma = token_map(sa.layers[l], col);
        const auto mb = token_map(sb.layers[l], col);
        total += pearson<double, double>(ma, mb);
        ++count;
      }
    }
    report.later_steps.push_back(sa.step);
    report.later_mean_correlation.push_back(count ? total / static_cast<double>(count) : 1.0);
  }
  return report;
}

}  // namespace sdg::attention
