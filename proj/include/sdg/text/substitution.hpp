#pragma once

#include <set>
#include <string>
#include <string_view>

#include "sdg/diffusion/pipeline.hpp"

namespace sdg::text {

struct SubstitutionResult {
  std::string naive, complex, shared_span;
  diffusion::GenerationRecord image_a;  // from encode(naive)
  diffusion::GenerationRecord image_b;  // same, span rows taken from encode(complex)
};

/// Rows of the naive prompt's encoding covering `shared_span` are replaced by
/// the rows of the same tokens inside the complex prompt. Both images start
/// from the same noise. Conditioning is Baseline.
inline SubstitutionResult substitution_experiment(std::string_view naive, std::string_view complex,
                                                  std::string_view shared_span, const diffusion::Pipeline& pipe,
                                                  diffusion::GenerationConfig cfg) {
  cfg.method = diffusion::Method::Baseline;
  const auto& vocab = pipe.vocab();
  const auto tn = prompt::tokenize(naive, vocab), tc = prompt::tokenize(complex, vocab);
  std::set<std::size_t> used_n, used_c;
  const auto sn = prompt::locate_span(shared_span, tn, vocab, used_n);
  const auto sc = prompt::locate_span(shared_span, tc, vocab, used_c);
  const EmbeddingSequence wn = pipe.encode(tn), wc = pipe.encode(tc);
  EmbeddingSequence sub = wn;
  const std::size_t c = wn.data.dim(1);
  for (std::size_t k = 0; k < sn.length(); ++k)
    std::copy_n(wc.data.data() + (sc.token_start + k) * c, c, sub.data.data() + (sn.token_start + k) * c);
  SubstitutionResult r{std::string(naive), std::string(complex), std::string(shared_span), {}, {}};
  r.image_a = pipe.run(pipe.prepare_embedding(wn, cfg), cfg);
  r.image_b = pipe.run(pipe.prepare_embedding(sub, cfg), cfg);
  return r;
}

/// Mean over pixels of g - (r + b) / 2.
inline double green_excess(const Tensor<float>& img) {
  const std::size_t hw = img.dim(1) * img.dim(2);
  double s = 0;
  for (std::size_t p = 0; p < hw; ++p) s += img[hw + p] - 0.5 * (img[p] + img[2 * hw + p]);
  return s / double(hw);
}

}  // namespace sdg::text
