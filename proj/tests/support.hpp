#pragma once

#include <cmath>
#include <vector>

#include "ebpolicy/ingest.hpp"
#include "ebpolicy/linalg2.hpp"
#include "ebpolicy/npmle.hpp"
#include "ebpolicy/rng.hpp"

namespace ebpolicy::testing {

inline Vec2 random_vec(CounterRng& rng, double scale = 1.0) {
  return Vec2(scale * rng.normal(), scale * rng.normal());
}

/// Symmetric positive definite 2x2 with eigenvalues in [lo, hi].
inline Mat2 random_spd(CounterRng& rng, double lo = 0.1, double hi = 3.0) {
  const double angle = 2.0 * M_PI * rng.uniform();
  Mat2 q;
  q << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  const Vec2 d(lo + (hi - lo) * rng.uniform(), lo + (hi - lo) * rng.uniform());
  return q * d.asDiagonal() * q.transpose();
}

inline DiscretePrior random_prior(CounterRng& rng, int atoms, double scale = 2.0) {
  DiscretePrior p;
  double total = 0.0;
  for (int k = 0; k < atoms; ++k) {
    p.atoms.push_back(random_vec(rng, scale));
    p.weights.push_back(rng.exponential());
    total += p.weights.back();
  }
  for (auto& w : p.weights) w /= total;
  return p;
}

inline DiscretePrior point_mass(const Vec2& u) { return {{u}, {1.0}}; }

inline PolicyRecord record(std::string id, int type, Vec2 y, Mat2 sigma) {
  return PolicyRecord{std::move(id), type, y, sigma};
}

/// Brute-force mixture posterior mean written independently of the library.
inline Vec2 enumerate_posterior(const Vec2& z, const Mat2& psi, const DiscretePrior& prior) {
  const Mat2 inv = psi.inverse();
  std::vector<double> logs;
  double top = -INFINITY;
  for (const auto& u : prior.atoms) {
    const Vec2 q = z - u;
    logs.push_back(-0.5 * q.dot(inv * q));
    top = std::max(top, logs.back());
  }
  Vec2 num = Vec2::Zero();
  double den = 0.0;
  for (std::size_t k = 0; k < prior.atoms.size(); ++k) {
    const double w = prior.weights[k] * std::exp(logs[k] - top);
    num += w * prior.atoms[k];
    den += w;
  }
  return num / den;
}

}  // namespace ebpolicy::testing
