#pragma once

// Synthetic location-scale data and regret measurement against the oracle
// planner that knows the true prior, locations and scales.

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ebpolicy/ingest.hpp"
#include "ebpolicy/npmle.hpp"
#include "ebpolicy/pipeline.hpp"
#include "ebpolicy/planner.hpp"

namespace ebpolicy {

enum class SigmaLaw {
  fixed,
  /// diag(s1^2, s2^2) with s1, s2 ~ Uniform[0.5, 2] per policy.
  heteroscedastic,
};

struct DgpSpec {
  std::string name;
  DiscretePrior prior;
  std::vector<Vec2> alpha;
  std::vector<Mat2> omega;
  SigmaLaw sigma_law = SigmaLaw::fixed;
  Mat2 sigma = Mat2::Identity();
  double eta = 1.0;
  double mu = -1.0;
  int J = 0;
  std::uint64_t seed = 0;
  /// The prior is standardized to mean 0 and identity covariance.
  bool normalized = true;

  int num_types() const { return static_cast<int>(alpha.size()); }
  PlannerConfig planner(double p) const;
  /// Throws InputError when sizes disagree or a normalized prior is not
  /// standardized within 1e-8.
  void validate() const;
};

struct SimulatedData {
  std::vector<PolicyRecord> records;
  /// True (WTP, G).
  std::vector<Vec2> theta;
  std::vector<Vec2> tau;
};

/// The two constructions showing plug-in failure: four equally likely
/// residual atoms (+-1, +-1), Omega = I, eta = 1, mu = -1, with location 0
/// (part 1) or 2 (part 2).
DgpSpec corner_dgp(int part, int J, const Mat2& sigma, std::uint64_t seed,
                   SigmaLaw law = SigmaLaw::fixed);

/// Policy j gets type j mod T. Draws are keyed by (seed, replication, j).
SimulatedData simulate_data(const DgpSpec& dgp, std::uint64_t replication = 0);

/// Exact posterior means of theta under the true model by enumerating the
/// prior atoms in the original (WTP, G) coordinates.
std::vector<Vec2> oracle_posterior_means(const SimulatedData& data, const DgpSpec& dgp);

Gradient oracle_gradient(const SimulatedData& data, const DgpSpec& dgp);

/// True gradient eta * WTP - mu * G.
Eigen::VectorXd true_gradient(const SimulatedData& data, const DgpSpec& dgp);

struct SimOptions {
  int threads = 1;
  EbOptions eb;
};

struct RegretReport {
  int J = 0;
  double p = 2.0;
  GradientSource pipeline = GradientSource::plug_in;
  double normalization = 1.0;
  int replications = 0;
  int failed = 0;
  double objective_gap = 0.0;
  double rule_regret = 0.0;
  double mse_regret = 0.0;
  double se_objective = 0.0;
  double se_rule = 0.0;
  double se_mse = 0.0;
  double sign_mistake_rate = 0.0;
  std::vector<double> gap_values;
  std::vector<double> rule_values;
  std::vector<double> mse_values;
  std::vector<double> sign_mistake_values;

  double median_gap() const;
  double median_rule() const;
  double median_mse() const;
};

/// One DGP, every (p, pipeline) pair; each replication's data and fits are
/// shared across pairs. Reports are ordered p-major, pipeline-minor.
std::vector<RegretReport> regret_grid(const DgpSpec& dgp, std::span<const double> p_list,
                                      std::span<const GradientSource> pipelines,
                                      int replications, const SimOptions& options = {});

RegretReport regret_experiment(const DgpSpec& dgp, double p, GradientSource pipeline,
                               int replications, const SimOptions& options = {});

using DgpFamily = std::function<DgpSpec(int J, std::uint64_t seed)>;

struct RateTable {
  std::vector<RegretReport> rows;
  /// One message per cell that could not be run.
  std::vector<std::string> failures;
};

/// Cells share data across p and pipelines for the same J (common random
/// numbers); the per-J seed is derived from the master seed.
RateTable rate_table(const DgpFamily& family, std::span<const int> J_list,
                     std::span<const double> p_list, std::span<const GradientSource> pipelines,
                     int replications, std::uint64_t master_seed, const SimOptions& options = {});

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t salt);

/// J,p,pipeline,objective_gap,rule_regret,mse_regret,se_objective,se_rule,replications
void write_rate_csv(std::ostream& out, std::span<const RegretReport> rows);

GradientSource source_from_string(const std::string& s);

double median(std::vector<double> values);

}  // namespace ebpolicy
