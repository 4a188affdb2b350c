#pragma once

// Coupled bootstrap: split each Gaussian estimate into a training draw and an
// independent evaluation draw, then score any training-measurable spending
// rule without bias.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ebpolicy/ingest.hpp"
#include "ebpolicy/pipeline.hpp"
#include "ebpolicy/planner.hpp"

namespace ebpolicy {

struct CoupledDraws {
  double kappa = 0.25;
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;
  /// y + sqrt(kappa) sigma^{1/2} xi
  std::vector<Vec2> y1;
  /// y - sigma^{1/2} xi / sqrt(kappa)
  std::vector<Vec2> y2;
};

/// xi_j comes from the counter RNG keyed by (seed, replication, j).
/// `zero_noise` forces xi = 0 (test hook). Throws InputError when kappa <= 0.
CoupledDraws couple(std::span<const PolicyRecord> records, double kappa, std::uint64_t seed,
                    std::uint64_t replication = 0, bool zero_noise = false);

/// Training records: y1 with covariance (1 + kappa) sigma.
std::vector<PolicyRecord> training_records(std::span<const PolicyRecord> records,
                                           const CoupledDraws& draws);

/// A spending rule sees only the training draw and its covariances.
using RuleFn = std::function<Eigen::VectorXd(std::span<const Vec2> y1,
                                             std::span<const Mat2> sigma1)>;

/// sum_j v_j(y1) * (eta_j, -mu) . y2_j
double evaluate_rule(const RuleFn& rule, const CoupledDraws& draws,
                     std::span<const PolicyRecord> records, const PlannerConfig& config);

/// sum_j v_j * (eta_j, -mu) . y2_j for an already computed rule.
double coupled_estimate(const Eigen::VectorXd& v, std::span<const Vec2> y2,
                        const PlannerConfig& config);

enum class Pipeline { empirical_bayes, plug_in };

const char* to_string(Pipeline p);
Pipeline pipeline_from_string(const std::string& s);

struct BootstrapOptions {
  double kappa = 0.25;
  int replications = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
  EbOptions eb;
};

struct WelfareEstimate {
  Pipeline pipeline = Pipeline::empirical_bayes;
  double p = 2.0;
  double radius = 1.0;
  double mu = 0.0;
  double kappa = 0.25;
  int replications = 0;
  double mean = 0.0;
  /// Sample standard deviation over kept replications divided by sqrt(count);
  /// NaN with fewer than two kept replications.
  double std_error = 0.0;
  int dropped = 0;
  std::vector<double> replicate_values;
};

/// Runs the chosen pipeline on each replication's training draw and scores
/// the resulting rule on the evaluation draw, once per planner config. The
/// empirical Bayes fit is shared across configs within a replication.
std::vector<WelfareEstimate> evaluate_pipeline(std::span<const PolicyRecord> records,
                                               int num_types,
                                               std::span<const PlannerConfig> planners,
                                               Pipeline pipeline,
                                               const BootstrapOptions& options);

WelfareEstimate evaluate_pipeline(std::span<const PolicyRecord> records, int num_types,
                                  const PlannerConfig& planner, Pipeline pipeline,
                                  const BootstrapOptions& options);

nlohmann::json welfare_to_json(const WelfareEstimate& w);

}  // namespace ebpolicy
