#pragma once

// Scalar reference trajectories for the DDPM and PLMS samplers, written from
// the update formulas with plain doubles.

#include <cmath>
#include <cstdint>
#include <vector>

#include "sdg/core/rng.hpp"

namespace sampler_oracle {

// Toy denoiser used by the scalar oracles.
inline double toy_eps(double x, std::size_t t) { return 0.3 * x + 0.05 * static_cast<double>(t) - 0.1; }

// Independent scalar DDPM: one normal draw per non-final step.
inline std::vector<double> oracle_ddpm(const std::vector<double>& ab, const std::vector<std::size_t>& ts, double x,
                                std::uint64_t seed) {
  sdg::Rng rng(seed);
  std::vector<double> traj;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const double a = ab[ts[k]];
    const double ap = k + 1 < ts.size() ? ab[ts[k + 1]] : 1.0;
    const double e = toy_eps(x, ts[k]);
    const double var = (1 - ap) / (1 - a) * (1 - a / ap);
    const double x0 = (x - std::sqrt(1 - a) * e) / std::sqrt(a);
    x = std::sqrt(ap) * x0 + std::sqrt(1 - ap - var) * e;
    if (k + 1 < ts.size()) x += std::sqrt(var) * rng.normal();
    traj.push_back(x);
  }
  return traj;
}

inline double ddim(double x, double e, double a, double ap) {
  return std::sqrt(ap) * (x - std::sqrt(1 - a) * e) / std::sqrt(a) + std::sqrt(1 - ap) * e;
}

inline std::vector<double> oracle_plms(const std::vector<double>& ab, const std::vector<std::size_t>& ts, double x) {
  std::vector<double> old, traj;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const bool last = k + 1 == ts.size();
    const double a = ab[ts[k]];
    const double ap = last ? 1.0 : ab[ts[k + 1]];
    const double e = toy_eps(x, ts[k]);
    double ep;
    if (old.size() < 3 && !last) {
      const double mid = ddim(x, e, a, ap);
      ep = 0.5 * (e + toy_eps(mid, ts[k + 1]));
    } else if (old.empty()) {
      ep = e;
    } else if (old.size() == 1) {
      ep = 1.5 * e - 0.5 * old[0];
    } else if (old.size() == 2) {
      ep = (23 * e - 16 * old[1] + 5 * old[0]) / 12;
    } else {
      const std::size_t n = old.size();
      ep = (55 * e - 59 * old[n - 1] + 37 * old[n - 2] - 9 * old[n - 3]) / 24;
    }
    old.push_back(e);
    x = ddim(x, ep, a, ap);
    traj.push_back(x);
  }
  return traj;
}

}  // namespace sampler_oracle
