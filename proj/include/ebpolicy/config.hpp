#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ebpolicy/bootstrap.hpp"
#include "ebpolicy/moments.hpp"
#include "ebpolicy/npmle.hpp"
#include "ebpolicy/pipeline.hpp"
#include "ebpolicy/planner.hpp"
#include "ebpolicy/simulate.hpp"

namespace ebpolicy {

/// Everything a batch run needs. Paths are resolved relative to the
/// directory containing the config file.
struct RunConfig {
  struct Inputs {
    std::string dataset;
    std::string shrunk;
  } input;
  std::string output_dir = "out";

  struct Planner {
    double mu = 1.0;
    std::vector<double> eta = {1.0};
    double p = 2.0;
    double radius = 1.0;
    std::vector<std::string> frozen;
    /// Grid used by `evaluate`; defaults to the single (p, mu) above.
    std::vector<double> p_list;
    std::vector<double> mu_list;
  } planner;

  struct Npmle {
    int grid_points = 40;
    double padding = 0.05;
    double tol = 1e-9;
    int max_iter = 20000;
    int restarts = 5;
    bool kappa_check = false;
    bool accelerate = true;
  } npmle;

  MomentsOptions moments;

  struct Bootstrap {
    double kappa = 0.25;
    int replications = 1000;
    std::uint64_t seed = 0;
  } bootstrap;

  struct Simulate {
    std::string dgp = "corners";
    std::string sigma_law = "fixed";
    std::vector<int> J_list = {100, 400, 1600};
    std::vector<double> p_list = {2.0};
    std::vector<std::string> pipelines = {"plug_in", "empirical_bayes"};
    int replications = 20;
    std::uint64_t seed = 0;
  } simulate;

  int threads = 1;

  EbOptions eb_options(std::uint64_t seed) const;
  /// Planner config for `policy_ids` (frozen ids resolved to a mask).
  PlannerConfig planner_config(const std::vector<std::string>& policy_ids, double p,
                               double mu) const;
  DgpFamily dgp_family() const;
};

/// Throws InputError on unknown keys or ill-typed values.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);

}  // namespace ebpolicy
