#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "sdg/core/error.hpp"
#include "sdg/core/rng.hpp"
#include "sdg/core/tensor.hpp"

namespace sdg::diffusion {

struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  std::size_t size() const { return betas.size(); }
};

inline NoiseSchedule noise_schedule(std::vector<double> betas) {
  require(!betas.empty(), ErrorCode::InvalidConfig, "schedule needs at least one step");
  NoiseSchedule s;
  double prod = 1.0;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    require(betas[i] > 0.0 && betas[i] < 1.0, ErrorCode::InvalidConfig, "beta outside (0,1)");
    require(i == 0 || betas[i] >= betas[i - 1], ErrorCode::InvalidConfig,
            "betas must be non-decreasing");
    prod *= 1.0 - betas[i];
    s.alphas.push_back(1.0 - betas[i]);
    s.alpha_bars.push_back(prod);
  }
  s.betas = std::move(betas);
  return s;
}

inline NoiseSchedule linear_schedule(std::size_t steps, double beta_start = 1e-4,
                                     double beta_end = 0.02) {
  require(steps >= 1, ErrorCode::InvalidConfig, "schedule needs at least one step");
  std::vector<double> b(steps);
  for (std::size_t i = 0; i < steps; ++i)
    b[i] = steps == 1 ? beta_start
                      : beta_start + (beta_end - beta_start) * static_cast<double>(i) /
                                         static_cast<double>(steps - 1);
  return noise_schedule(std::move(b));
}

/// Training timesteps visited by a `steps`-step sampler, in visiting order
/// (largest first). Index values are 0-based into the schedule.
inline std::vector<std::size_t> sampling_timesteps(std::size_t steps, std::size_t train_steps) {
  require(steps >= 1 && steps <= train_steps, ErrorCode::InvalidConfig,
          "sampling steps must be in [1, training steps]");
  std::vector<std::size_t> ts;
  for (std::size_t k = steps; k-- > 0;) ts.push_back((k + 1) * train_steps / steps - 1);
  return ts;
}

enum class SamplerKind { Plms, Ddpm };

inline std::string_view to_string(SamplerKind k) { return k == SamplerKind::Plms ? "plms" : "ddpm"; }

inline SamplerKind parse_sampler(std::string_view s) {
  if (s == "plms") return SamplerKind::Plms;
  if (s == "ddpm") return SamplerKind::Ddpm;
  fail(ErrorCode::InvalidConfig, "unknown sampler '" + std::string(s) + "'");
}

/// x0 estimate from x_t and a noise prediction.
template <class T>
Tensor<T> predict_x0(const Tensor<T>& x, const Tensor<T>& eps, double ab_t) {
  Tensor<T> x0(x.shape());
  const double a = std::sqrt(ab_t), b = std::sqrt(1.0 - ab_t);
  for (std::size_t i = 0; i < x.size(); ++i)
    x0[i] = static_cast<T>((static_cast<double>(x[i]) - b * eps[i]) / a);
  return x0;
}

/// Moves x_t to the level ab_prev along eps, with optional fresh noise of
/// standard deviation sigma. With clip > 0 the x0 estimate is clamped to
/// [-clip, clip] and eps is re-derived from the clamped estimate.
template <class T>
Tensor<T> transfer(const Tensor<T>& x, const Tensor<T>& eps, double ab_t, double ab_prev,
                   double sigma = 0.0, const Tensor<T>* noise = nullptr, double clip = 0.0) {
  const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
  const double c0 = std::sqrt(ab_prev);
  const double a = std::sqrt(ab_t), b = std::sqrt(1.0 - ab_t);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = static_cast<double>(static_cast<T>((static_cast<double>(x[i]) - b * eps[i]) / a));
    double x0 = xi, e = eps[i];
    if (clip > 0.0 && (x0 > clip || x0 < -clip)) {
      x0 = std::clamp(x0, -clip, clip);
      e = (static_cast<double>(x[i]) - a * x0) / b;
    }
    double v = c0 * x0 + dir * e;
    if (noise && sigma > 0.0) v += sigma * (*noise)[i];
    out[i] = static_cast<T>(v);
  }
  return out;
}

/// Ancestral step of the strided DDPM chain; reduces to the standard update
/// when consecutive timesteps are visited.
template <class T>
Tensor<T> ddpm_step(const Tensor<T>& x, const Tensor<T>& eps, double ab_t, double ab_prev,
                    const Tensor<T>* noise, double clip = 0.0) {
  const double var = (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev);
  return transfer(x, eps, ab_t, ab_prev, std::sqrt(std::max(0.0, var)), noise, clip);
}

/// Adams-Bashforth combination of the current prediction and the history
/// (most recent last) at the order the history allows, up to four.
template <class T>
Tensor<T> multistep_eps(const Tensor<T>& e, std::span<const Tensor<T>> history) {
  Tensor<T> out(e.shape());
  const std::size_t h = history.size();
  auto at = [&](std::size_t back) -> const Tensor<T>& { return history[h - back]; };
  for (std::size_t i = 0; i < e.size(); ++i) {
    double v;
    if (h == 0) {
      v = e[i];
    } else if (h == 1) {
      v = (3.0 * e[i] - at(1)[i]) / 2.0;
    } else if (h == 2) {
      v = (23.0 * e[i] - 16.0 * at(1)[i] + 5.0 * at(2)[i]) / 12.0;
    } else {
      v = (55.0 * e[i] - 59.0 * at(1)[i] + 37.0 * at(2)[i] - 9.0 * at(3)[i]) / 24.0;
    }
    out[i] = static_cast<T>(v);
  }
  return out;
}

/// Noise prediction callback: (x_t, timestep, step index, is_auxiliary).
/// Auxiliary calls are the extra warm-start evaluations of PLMS.
template <class T>
using EpsFn = std::function<Tensor<T>(const Tensor<T>&, std::size_t, std::size_t, bool)>;

struct SamplerOptions {
  SamplerKind kind = SamplerKind::Plms;
  std::size_t steps = 50;
  bool zero_noise = false;  // DDPM only: drop the ancestral noise term
  double clip_x0 = 0.0;     // clamp the x0 estimate to [-clip_x0, clip_x0]; 0 disables
};

/// Runs the reverse process from x_T. `noise_rng` feeds DDPM's ancestral noise.
template <class T>
Tensor<T> sample_loop(const NoiseSchedule& sched, const SamplerOptions& opt, Tensor<T> x,
                      const EpsFn<T>& eps_fn, Rng& noise_rng,
                      const std::function<void(std::size_t, const Tensor<T>&)>& on_step = {}) {
  const auto ts = sampling_timesteps(opt.steps, sched.size());
  std::vector<Tensor<T>> history;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const std::size_t t = ts[k];
    const double ab_t = sched.alpha_bars[t];
    const bool last = k + 1 == ts.size();
    const double ab_prev = last ? 1.0 : sched.alpha_bars[ts[k + 1]];
    Tensor<T> e = eps_fn(x, t, k, false);
    if (opt.kind == SamplerKind::Ddpm) {
      Tensor<T> z(x.shape());
      if (!opt.zero_noise && !last)
        for (auto& v : z.values()) v = static_cast<T>(noise_rng.normal());
      x = ddpm_step(x, e, ab_t, ab_prev, (opt.zero_noise || last) ? nullptr : &z, opt.clip_x0);
    } else if (history.size() < 3 && !last) {
      // Warm start: improved-Euler corrector using a prediction at t_prev.
      const Tensor<T> x_mid = transfer(x, e, ab_t, ab_prev, 0.0, static_cast<const Tensor<T>*>(nullptr), opt.clip_x0);
      const Tensor<T> e_mid = eps_fn(x_mid, ts[k + 1], k, true);
      Tensor<T> avg(e.shape());
      for (std::size_t i = 0; i < e.size(); ++i)
        avg[i] = static_cast<T>((static_cast<double>(e[i]) + e_mid[i]) / 2.0);
      x = transfer(x, avg, ab_t, ab_prev, 0.0, static_cast<const Tensor<T>*>(nullptr), opt.clip_x0);
      history.push_back(std::move(e));
    } else {
      const std::size_t keep = std::min<std::size_t>(history.size(), 3);
      const std::span<const Tensor<T>> recent(history.data() + history.size() - keep, keep);
      x = transfer(x, multistep_eps(e, recent), ab_t, ab_prev, 0.0, static_cast<const Tensor<T>*>(nullptr), opt.clip_x0);
      history.push_back(std::move(e));
    }
    if (on_step) on_step(k, x);
  }
  return x;
}

/// eps_u + s (eps_c - eps_u)
template <class T>
Tensor<T> cfg(const Tensor<T>& eps_uncond, const Tensor<T>& eps_cond, double s) {
  require(eps_uncond.shape() == eps_cond.shape(), ErrorCode::ShapeMismatch, "cfg: shape mismatch");
  Tensor<T> out(eps_cond.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<T>(eps_uncond[i] + s * (static_cast<double>(eps_cond[i]) - eps_uncond[i]));
  return out;
}

/// eps_u + s * sum_j (eps_j - eps_u) / J
template <class T>
Tensor<T> compose(const Tensor<T>& eps_uncond, std::span<const Tensor<T>> eps_conds, double s) {
  require(!eps_conds.empty(), ErrorCode::InvalidConfig, "compose: no segments");
  Tensor<T> out(eps_uncond.shape());
  const double j = static_cast<double>(eps_conds.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double sum = 0.0;
    for (const auto& e : eps_conds) {
      require(e.shape() == eps_uncond.shape(), ErrorCode::ShapeMismatch, "compose: shape mismatch");
      sum += static_cast<double>(e[i]) - eps_uncond[i];
    }
    out[i] = static_cast<T>(eps_uncond[i] + s * (sum / j));
  }
  return out;
}

}  // namespace sdg::diffusion
