#pragma once

// Grid-restricted nonparametric maximum likelihood (Kiefer-Wolfowitz) for the
// mixing distribution of bivariate heteroscedastic Gaussian observations.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ebpolicy/linalg2.hpp"
#include "ebpolicy/moments.hpp"

namespace ebpolicy {

/// Evenly spaced m x m product grid, atoms in row-major order
/// (first coordinate outer, second inner).
struct GridSpec {
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{1.0, 1.0};
  int points_per_dim = 2;
  std::vector<Vec2> atoms;
};

/// Probability measure on finitely many atoms.
struct DiscretePrior {
  std::vector<Vec2> atoms;
  std::vector<double> weights;

  /// Throws InputError unless weights are nonnegative, sum to one within
  /// 1e-12 and sizes agree.
  void validate() const;
  Vec2 mean() const;
  Mat2 covariance() const;
  std::size_t size() const { return atoms.size(); }
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Gaussian kernel evaluations stored row-rescaled: density(j, k) equals
/// scaled(j, k) * exp(log_row_scale(j)), and every row of `scaled` has maximum 1.
struct LikelihoodMatrix {
  RowMatrix scaled;
  Eigen::VectorXd log_row_scale;

  Eigen::Index rows() const { return scaled.rows(); }
  Eigen::Index cols() const { return scaled.cols(); }
  double density(Eigen::Index j, Eigen::Index k) const;
};

GridSpec make_grid(std::array<double, 2> lo, std::array<double, 2> hi, int points_per_dim);

/// Grid covering the samples' z values, widened by padding * range per side.
/// A dimension with zero range is widened by 1.0 on each side instead.
GridSpec build_grid(std::span<const StandardizedSample> samples, int points_per_dim,
                    double padding);

/// Log of the bivariate normal density N(mean, cov) at x.
double log_normal_density(const Vec2& x, const Vec2& mean, const Mat2& cov);

/// Throws NumericError naming the sample index when some psi_hat has an
/// eigenvalue below 1e-8.
LikelihoodMatrix likelihood_matrix(std::span<const StandardizedSample> samples,
                                   std::span<const Vec2> atoms);

/// Mean log marginal density (1/J) sum_j log sum_k L[j][k] w_k.
double log_likelihood(const LikelihoodMatrix& L, const Eigen::VectorXd& weights);

/// One EM update of the mixing weights.
Eigen::VectorXd em_step(const LikelihoodMatrix& L, const Eigen::VectorXd& weights);

/// Approximation tolerance (3/J) log(J / (2 pi e)^{1/3}); positive for J >= 7.
double kappa_tolerance(std::size_t J);

struct NpmleOptions {
  double tol = 1e-9;
  int max_iter = 20000;
  bool kappa_check = false;
  int restarts = 5;
  std::uint64_t seed = 0;
  /// Squared-extrapolation steps between EM updates, falling back to the plain
  /// update whenever the log-likelihood would drop.
  bool accelerate = true;
  /// Keep every trace_stride-th log-likelihood in the diagnostics trace.
  int trace_stride = 50;
};

struct NpmleDiagnostics {
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  bool monotone = true;
  double last_relative_gain = 0.0;
  std::optional<std::string> warning;
  std::vector<std::pair<int, double>> trace;
  // Populated when kappa_check is set.
  std::optional<double> kappa;
  std::optional<double> best_restart_log_likelihood;
  std::optional<double> kappa_gap;
  std::optional<bool> within_kappa;
};

struct NpmleFit {
  DiscretePrior prior;
  NpmleDiagnostics diagnostics;
};

struct EmRun {
  Eigen::VectorXd weights;
  NpmleDiagnostics diagnostics;
};

/// Runs fixed-grid EM from `initial` (simplex) until the relative
/// log-likelihood gain falls below tol or max_iter is reached.
EmRun run_em(const LikelihoodMatrix& L, Eigen::VectorXd initial, const NpmleOptions& options);

/// Uniform start; optional Dirichlet(1) restarts measure the gap against kappa_J.
NpmleFit fit_npmle(const LikelihoodMatrix& L, std::span<const Vec2> atoms,
                   const NpmleOptions& options = {});

nlohmann::json prior_to_json(const DiscretePrior& prior);
DiscretePrior prior_from_json(const nlohmann::json& j);
nlohmann::json diagnostics_to_json(const NpmleDiagnostics& d);

}  // namespace ebpolicy
