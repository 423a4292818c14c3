#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "sdg/core/kv_config.hpp"
#include "sdg/core/parallel.hpp"
#include "sdg/diffusion/pipeline.hpp"
#include "sdg/toy/oracle.hpp"

namespace sdg::bench {

using diffusion::Method;

struct HeadToHeadConfig {
  std::vector<Method> methods{Method::Baseline, Method::MultiValue, Method::MultiKey, Method::Composable};
  std::size_t seeds_per_prompt = 3;
  std::uint64_t seed = 0;
  diffusion::GenerationConfig generation;  // method and seed are set per run
  toy::ShapesConfig shapes;
  toy::OracleConfig oracle;
  /// Fraction of (prompt, seed) cases kept for pairwise comparison, most
  /// similar image pairs first by mean squared pixel distance. 1 keeps all.
  double similarity_keep = 1.0;
};

struct MethodCounts {
  std::size_t total = 0;
  std::size_t zero_or_one_obj = 0;
  std::size_t two_obj = 0;  // includes those with correct colours
  std::size_t two_obj_correct_colors = 0;

  double pct(std::size_t v) const { return total ? 100.0 * double(v) / double(total) : 0.0; }
};

struct PairCounts {
  std::size_t a = 0, b = 0;  // method indices
  std::size_t win = 0, lose = 0, tie = 0;  // from a's point of view
};

struct CaseResult {
  std::string prompt;
  std::uint64_t seed = 0;
  std::vector<toy::Category> categories;  // per method
  std::vector<nn::Tensorf> images;        // per method
};

struct EvalReport {
  std::vector<Method> methods;
  std::vector<MethodCounts> counts;
  std::vector<PairCounts> pairs;
  std::vector<CaseResult> cases;
  std::size_t prompts = 0;
  std::size_t seeds_per_prompt = 0;
  std::uint64_t digest = 0;

  const MethodCounts& of(Method m) const {
    for (std::size_t i = 0; i < methods.size(); ++i)
      if (methods[i] == m) return counts[i];
    fail(ErrorCode::InvalidConfig, "method not in report: " + std::string(to_string(m)));
  }
};

/// Image score used for win/lose/tie: 0 incomplete, 1 both objects, 2 both in correct colours.
inline int category_score(toy::Category c) {
  return c == toy::Category::ZeroOrOne ? 0 : c == toy::Category::TwoObj ? 1 : 2;
}

inline double mean_squared_distance(const nn::Tensorf& a, const nn::Tensorf& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i] - b[i]) * double(a[i] - b[i]);
  return a.size() ? s / double(a.size()) : 0.0;
}

/// Canonical text of everything that determines the report, weights excluded.
inline std::string describe(const HeadToHeadConfig& c, const std::vector<std::string>& prompts) {
  std::ostringstream os;
  os << std::setprecision(17);
  const auto& g = c.generation;
  os << "steps=" << g.steps << "\nsampler=" << diffusion::to_string(g.sampler) << "\nscale=" << g.guidance_scale
     << "\nparser=" << diffusion::to_string(g.parser) << "\nalignment=" << align::to_string(g.alignment)
     << "\npadding=" << align::to_string(g.padding) << "\ninclude_span_eos=" << g.include_span_eos
     << "\nseeds_per_prompt=" << c.seeds_per_prompt << "\nseed=" << c.seed
     << "\nsimilarity_keep=" << c.similarity_keep << "\nmethods=";
  for (auto m : c.methods) os << diffusion::to_string(m) << ',';
  os << "\nprompts=";
  for (const auto& p : prompts) os << p << '|';
  return os.str();
}

inline std::uint64_t weights_digest(const diffusion::Model& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto& mm = const_cast<diffusion::Model&>(m);
  for (const nn::Param* p : mm.params()) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    for (std::size_t i = 0; i < p->value.size() * sizeof(float); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

/// Samples every prompt x seed x method from a shared initial noise per
/// (prompt, seed) and scores the images with the binding oracle.
inline EvalReport run_headtohead(const diffusion::Pipeline& pipe, const std::vector<std::string>& prompts,
                                 const HeadToHeadConfig& cfg, bool keep_images = false,
                                 const std::function<void(std::size_t, std::size_t)>& progress = {}) {
  require(!cfg.methods.empty() && cfg.seeds_per_prompt >= 1, ErrorCode::InvalidConfig,
          "head-to-head needs methods and at least one seed per prompt");
  require(cfg.similarity_keep > 0 && cfg.similarity_keep <= 1, ErrorCode::InvalidConfig,
          "similarity_keep must be in (0, 1]");
  EvalReport r;
  r.methods = cfg.methods;
  r.prompts = prompts.size();
  r.seeds_per_prompt = cfg.seeds_per_prompt;
  r.digest = fnv1a(describe(cfg, prompts) + "\nweights=" + std::to_string(weights_digest(pipe.model())));
  const std::size_t n = prompts.size() * cfg.seeds_per_prompt;
  r.cases.resize(n);
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  parallel_for(n, [&](std::size_t idx) {
    CaseResult& c = r.cases[idx];
    c.prompt = prompts[idx / cfg.seeds_per_prompt];
    c.seed = derive_seed(cfg.seed, idx);
    for (Method m : cfg.methods) {
      auto g = cfg.generation;
      g.method = m;
      g.seed = c.seed;
      g.record_steps = 0;
      const auto rec = pipe.sample(c.prompt, g);
      c.categories.push_back(toy::binding_oracle(rec.image, c.prompt, cfg.shapes, cfg.oracle).category());
      c.images.push_back(rec.image);
    }
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(++done, n);
    }
  });

  r.counts.resize(cfg.methods.size());
  for (const auto& c : r.cases)
    for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
      auto& m = r.counts[k];
      ++m.total;
      if (c.categories[k] == toy::Category::ZeroOrOne) ++m.zero_or_one_obj;
      else ++m.two_obj;
      if (c.categories[k] == toy::Category::TwoObjCorrect) ++m.two_obj_correct_colors;
    }
  for (std::size_t a = 0; a < cfg.methods.size(); ++a)
    for (std::size_t b = a + 1; b < cfg.methods.size(); ++b) {
      std::vector<std::size_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      if (cfg.similarity_keep < 1) {
        std::vector<double> d(n);
        for (std::size_t i = 0; i < n; ++i) d[i] = mean_squared_distance(r.cases[i].images[a], r.cases[i].images[b]);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return d[x] < d[y]; });
        order.resize(std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.similarity_keep * double(n)))));
      }
      PairCounts p{a, b, 0, 0, 0};
      for (std::size_t i : order) {
        const int sa = category_score(r.cases[i].categories[a]), sb = category_score(r.cases[i].categories[b]);
        (sa > sb ? p.win : sa < sb ? p.lose : p.tie)++;
      }
      r.pairs.push_back(p);
    }
  if (!keep_images)
    for (auto& c : r.cases) c.images.clear();
  return r;
}

/// Flat key=value form.
inline std::string report_kv(const EvalReport& r) {
  std::ostringstream os;
  char buf[32];
  auto pct = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(r.digest));
  os << "config_digest = " << buf << '\n';
  os << "prompts = " << r.prompts << '\n' << "seeds_per_prompt = " << r.seeds_per_prompt << '\n';
  for (std::size_t k = 0; k < r.methods.size(); ++k) {
    const auto name = std::string(to_string(r.methods[k]));
    const auto& c = r.counts[k];
    os << name << ".images = " << c.total << '\n'
       << name << ".zero_or_one_obj = " << c.zero_or_one_obj << '\n'
       << name << ".two_obj = " << c.two_obj << '\n'
       << name << ".two_obj_correct_colors = " << c.two_obj_correct_colors << '\n'
       << name << ".zero_or_one_obj_pct = " << pct(c.pct(c.zero_or_one_obj)) << '\n'
       << name << ".two_obj_pct = " << pct(c.pct(c.two_obj)) << '\n'
       << name << ".two_obj_correct_colors_pct = " << pct(c.pct(c.two_obj_correct_colors)) << '\n';
  }
  for (const auto& p : r.pairs) {
    const auto key = std::string(to_string(r.methods[p.a])) + "_vs_" + std::string(to_string(r.methods[p.b]));
    os << key << ".win = " << p.win << '\n' << key << ".lose = " << p.lose << '\n' << key << ".tie = " << p.tie << '\n';
  }
  return os.str();
}

/// Human-readable table in the style of the usual object/colour breakdown.
inline std::string report_table(const EvalReport& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %8s %16s %10s %24s\n", "method", "images", "zero/one obj. %", "two obj. %",
                "two obj. correct col. %");
  os << line;
  for (std::size_t k = 0; k < r.methods.size(); ++k) {
    const auto& c = r.counts[k];
    std::snprintf(line, sizeof line, "%-10s %8zu %16.2f %10.2f %24.2f\n", std::string(to_string(r.methods[k])).c_str(),
                  c.total, c.pct(c.zero_or_one_obj), c.pct(c.two_obj), c.pct(c.two_obj_correct_colors));
    os << line;
  }
  os << '\n';
  for (const auto& p : r.pairs) {
    std::snprintf(line, sizeof line, "%s vs %s: win %zu / lose %zu / tie %zu\n",
                  std::string(to_string(r.methods[p.a])).c_str(), std::string(to_string(r.methods[p.b])).c_str(),
                  p.win, p.lose, p.tie);
    os << line;
  }
  return os.str();
}

}  // namespace sdg::bench
