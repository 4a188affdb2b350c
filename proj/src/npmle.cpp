#include "ebpolicy/npmle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#if defined(__SSE2__)
#include <immintrin.h>
#endif

#include "ebpolicy/errors.hpp"
#include "ebpolicy/rng.hpp"

namespace ebpolicy {

namespace {

/// Flushes subnormals to zero while in scope; far-off grid atoms otherwise
/// produce subnormal products that stall the matrix-vector loop.
class FlushDenormals {
 public:
#if defined(__SSE2__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

constexpr double kMinPsiEigen = 1e-8;

}  // namespace

void DiscretePrior::validate() const {
  if (atoms.size() != weights.size()) throw InputError("prior: atoms and weights differ in size");
  if (atoms.empty()) throw InputError("prior: no atoms");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("prior: negative or non-finite weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InputError("prior: weights do not sum to one");
  std::vector<std::pair<double, double>> sorted;
  for (const auto& a : atoms) sorted.emplace_back(a(0), a(1));
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw InputError("prior: atoms are not distinct");
  }
}

Vec2 DiscretePrior::mean() const {
  Vec2 m = Vec2::Zero();
  for (std::size_t k = 0; k < atoms.size(); ++k) m += weights[k] * atoms[k];
  return m;
}

Mat2 DiscretePrior::covariance() const {
  const Vec2 m = mean();
  Mat2 c = Mat2::Zero();
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    const Vec2 d = atoms[k] - m;
    c += weights[k] * d * d.transpose();
  }
  return c;
}

double LikelihoodMatrix::density(Eigen::Index j, Eigen::Index k) const {
  return scaled(j, k) * std::exp(log_row_scale(j));
}

GridSpec make_grid(std::array<double, 2> lo, std::array<double, 2> hi, int points_per_dim) {
  if (points_per_dim < 2) throw InputError("grid: need at least 2 points per dimension");
  for (int d = 0; d < 2; ++d) {
    if (!(lo[d] < hi[d])) throw InputError("grid: lower bound must be below upper bound");
  }
  GridSpec g;
  g.lo = lo;
  g.hi = hi;
  g.points_per_dim = points_per_dim;
  const int m = points_per_dim;
  g.atoms.reserve(static_cast<std::size_t>(m) * m);
  auto coord = [&](int d, int i) {
    if (i == m - 1) return hi[d];
    return lo[d] + (hi[d] - lo[d]) * static_cast<double>(i) / (m - 1);
  };
  for (int a = 0; a < m; ++a) {
    for (int b = 0; b < m; ++b) g.atoms.emplace_back(coord(0, a), coord(1, b));
  }
  return g;
}

GridSpec build_grid(std::span<const StandardizedSample> samples, int points_per_dim,
                    double padding) {
  if (samples.empty()) throw InputError("grid: no samples");
  std::array<double, 2> lo{}, hi{};
  for (int d = 0; d < 2; ++d) {
    double mn = std::numeric_limits<double>::infinity();
    double mx = -mn;
    for (const auto& s : samples) {
      mn = std::min(mn, s.z_hat(d));
      mx = std::max(mx, s.z_hat(d));
    }
    const double range = mx - mn;
    if (range > 0.0) {
      lo[d] = mn - padding * range;
      hi[d] = mx + padding * range;
    } else {
      lo[d] = mn - 1.0;
      hi[d] = mx + 1.0;
    }
  }
  return make_grid(lo, hi, points_per_dim);
}

double log_normal_density(const Vec2& x, const Vec2& mean, const Mat2& cov) {
  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
  const Vec2 q = x - mean;
  // q' cov^{-1} q via the explicit 2x2 inverse.
  const double quad =
      (cov(1, 1) * q(0) * q(0) - (cov(0, 1) + cov(1, 0)) * q(0) * q(1) + cov(0, 0) * q(1) * q(1)) /
      det;
  return -0.5 * quad - std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det);
}

LikelihoodMatrix likelihood_matrix(std::span<const StandardizedSample> samples,
                                   std::span<const Vec2> atoms) {
  const auto J = static_cast<Eigen::Index>(samples.size());
  const auto K = static_cast<Eigen::Index>(atoms.size());
  LikelihoodMatrix L;
  L.scaled.resize(J, K);
  L.log_row_scale.resize(J);
  std::vector<double> logs(static_cast<std::size_t>(K));
  for (Eigen::Index j = 0; j < J; ++j) {
    const auto& s = samples[static_cast<std::size_t>(j)];
    if (sym_eigen(s.psi_hat).values(0) < kMinPsiEigen || !s.z_hat.allFinite()) {
      std::ostringstream msg;
      msg << "likelihood_matrix: noise covariance of policy " << j
          << " is near-singular or non-finite";
      throw NumericError(msg.str());
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < K; ++k) {
      const double v = log_normal_density(s.z_hat, atoms[static_cast<std::size_t>(k)], s.psi_hat);
      logs[static_cast<std::size_t>(k)] = v;
      mx = std::max(mx, v);
    }
    L.log_row_scale(j) = mx;
    for (Eigen::Index k = 0; k < K; ++k) {
      L.scaled(j, k) = std::exp(logs[static_cast<std::size_t>(k)] - mx);
    }
  }
  return L;
}

double log_likelihood(const LikelihoodMatrix& L, const Eigen::VectorXd& weights) {
  const Eigen::VectorXd mix = L.scaled * weights;
  double total = 0.0;
  for (Eigen::Index j = 0; j < mix.size(); ++j) total += std::log(mix(j)) + L.log_row_scale(j);
  return total / static_cast<double>(mix.size());
}

Eigen::VectorXd em_step(const LikelihoodMatrix& L, const Eigen::VectorXd& weights) {
  const Eigen::VectorXd mix = L.scaled * weights;
  const Eigen::VectorXd inv = mix.cwiseInverse();
  Eigen::VectorXd next = weights.cwiseProduct(L.scaled.transpose() * inv);
  next /= static_cast<double>(L.rows());
  // Renormalize against roundoff drift off the simplex.
  next /= next.sum();
  return next;
}

double kappa_tolerance(std::size_t J) {
  const double n = static_cast<double>(J);
  return 3.0 / n * std::log(n / std::cbrt(2.0 * std::numbers::pi * std::numbers::e));
}

EmRun run_em(const LikelihoodMatrix& L, Eigen::VectorXd initial, const NpmleOptions& options) {
  const FlushDenormals ftz;
  EmRun run;
  run.weights = std::move(initial);
  auto& d = run.diagnostics;
  const double J = static_cast<double>(L.rows());
  const double scale_term = L.log_row_scale.sum() / J;
  auto mean_log = [&](const Eigen::VectorXd& mix) {
    return mix.array().log().sum() / J + scale_term;
  };
  // One multiplicative update; `mix` is L * w on entry and L * w_next on exit.
  Eigen::VectorXd ratio(L.cols());
  auto update = [&](const Eigen::VectorXd& w, Eigen::VectorXd& mix) {
    ratio.noalias() = L.scaled.transpose() * mix.cwiseInverse();
    Eigen::VectorXd next = w.cwiseProduct(ratio);
    next /= next.sum();
    mix.noalias() = L.scaled * next;
    return next;
  };

  Eigen::VectorXd mix = L.scaled * run.weights;
  double ll = mean_log(mix);
  d.trace.emplace_back(0, ll);
  const int stride = std::max(1, options.trace_stride);
  for (int it = 1; it <= options.max_iter; ++it) {
    Eigen::VectorXd next_mix = mix;
    Eigen::VectorXd next = update(run.weights, next_mix);
    if (options.accelerate) {
      Eigen::VectorXd mix2 = next_mix;
      Eigen::VectorXd w2 = update(next, mix2);
      const Eigen::VectorXd r = next - run.weights;
      const Eigen::VectorXd v = w2 - next - r;
      const double rn = r.norm();
      const double vn = v.norm();
      next = std::move(w2);
      next_mix = std::move(mix2);
      if (vn > 0.0 && rn > 0.0) {
        double alpha = std::min(-1.0, -rn / vn);
        Eigen::VectorXd trial;
        for (int halving = 0; halving < 30 && alpha < -1.0; ++halving) {
          trial = run.weights - 2.0 * alpha * r + alpha * alpha * v;
          if (trial.minCoeff() >= 0.0) break;
          alpha = 0.5 * (alpha - 1.0);
        }
        if (alpha < -1.0 && trial.minCoeff() >= 0.0) {
          trial /= trial.sum();
          Eigen::VectorXd trial_mix = L.scaled * trial;
          Eigen::VectorXd stabilized = update(trial, trial_mix);
          if (mean_log(trial_mix) >= mean_log(next_mix)) {
            next = std::move(stabilized);
            next_mix = std::move(trial_mix);
          }
        }
      }
    }
    const double next_ll = mean_log(next_mix);
    const double gain = (next_ll - ll) / std::max(1.0, std::abs(ll));
    if (gain < -1e-12) d.monotone = false;
    run.weights = std::move(next);
    mix = std::move(next_mix);
    ll = next_ll;
    d.iterations = it;
    d.last_relative_gain = gain;
    if (it % stride == 0) d.trace.emplace_back(it, ll);
    if (gain < options.tol) {
      d.converged = true;
      break;
    }
  }
  if (d.trace.back().first != d.iterations) d.trace.emplace_back(d.iterations, ll);
  d.log_likelihood = ll;
  if (!d.converged && d.last_relative_gain > 100.0 * options.tol) {
    std::ostringstream msg;
    msg << "EM stopped at max_iter=" << options.max_iter << " with relative gain "
        << d.last_relative_gain;
    d.warning = msg.str();
  }
  return run;
}

NpmleFit fit_npmle(const LikelihoodMatrix& L, std::span<const Vec2> atoms,
                   const NpmleOptions& options) {
  const auto K = L.cols();
  if (L.rows() < 1 || K < 1) throw InputError("fit_npmle: empty likelihood matrix");
  if (static_cast<Eigen::Index>(atoms.size()) != K) {
    throw InputError("fit_npmle: atom count does not match likelihood columns");
  }
  EmRun main = run_em(L, Eigen::VectorXd::Constant(K, 1.0 / static_cast<double>(K)), options);

  if (options.kappa_check) {
    double best = main.diagnostics.log_likelihood;
    for (int r = 0; r < options.restarts; ++r) {
      CounterRng rng(options.seed, Stream::restart, static_cast<std::uint64_t>(r));
      Eigen::VectorXd init(K);
      for (Eigen::Index k = 0; k < K; ++k) init(k) = rng.exponential();
      init /= init.sum();
      const EmRun alt = run_em(L, std::move(init), options);
      best = std::max(best, alt.diagnostics.log_likelihood);
    }
    auto& d = main.diagnostics;
    d.kappa = kappa_tolerance(static_cast<std::size_t>(L.rows()));
    d.best_restart_log_likelihood = best;
    d.kappa_gap = best - d.log_likelihood;
    d.within_kappa = *d.kappa_gap <= *d.kappa;
  }

  NpmleFit fit;
  fit.prior.atoms.assign(atoms.begin(), atoms.end());
  fit.prior.weights.assign(main.weights.data(), main.weights.data() + K);
  fit.diagnostics = std::move(main.diagnostics);
  return fit;
}

nlohmann::json prior_to_json(const DiscretePrior& prior) {
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : prior.atoms) atoms.push_back({a(0), a(1)});
  return {{"atoms", atoms}, {"weights", prior.weights}};
}

DiscretePrior prior_from_json(const nlohmann::json& j) {
  DiscretePrior p;
  for (const auto& a : j.at("atoms")) p.atoms.emplace_back(a.at(0).get<double>(), a.at(1).get<double>());
  p.weights = j.at("weights").get<std::vector<double>>();
  p.validate();
  return p;
}

nlohmann::json diagnostics_to_json(const NpmleDiagnostics& d) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& [it, ll] : d.trace) trace.push_back({it, ll});
  nlohmann::json out = {
      {"log_likelihood", d.log_likelihood},
      {"iterations", d.iterations},
      {"converged", d.converged},
      {"monotone", d.monotone},
      {"last_relative_gain", d.last_relative_gain},
      {"loglik_trace", trace},
  };
  out["warning"] = d.warning ? nlohmann::json(*d.warning) : nlohmann::json(nullptr);
  if (d.kappa) {
    out["kappa"] = *d.kappa;
    out["best_restart_log_likelihood"] = *d.best_restart_log_likelihood;
    out["kappa_gap"] = *d.kappa_gap;
    out["within_kappa"] = *d.within_kappa;
  }
  return out;
}

}  // namespace ebpolicy
