#include "ebpolicy/bootstrap.hpp"

#include <cmath>
#include <limits>

#include "ebpolicy/errors.hpp"
#include "ebpolicy/parallel.hpp"
#include "ebpolicy/rng.hpp"

namespace ebpolicy {

CoupledDraws couple(std::span<const PolicyRecord> records, double kappa, std::uint64_t seed,
                    std::uint64_t replication, bool zero_noise) {
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw InputError("couple: kappa must be positive");
  CoupledDraws d;
  d.kappa = kappa;
  d.seed = seed;
  d.replication = replication;
  d.y1.reserve(records.size());
  d.y2.reserve(records.size());
  const double root = std::sqrt(kappa);
  for (std::size_t j = 0; j < records.size(); ++j) {
    Vec2 xi = Vec2::Zero();
    if (!zero_noise) {
      CounterRng rng(seed, Stream::coupling, replication, j);
      xi(0) = rng.normal();
      xi(1) = rng.normal();
    }
    const Vec2 shock = sym_sqrt(records[j].sigma) * xi;
    d.y1.push_back(records[j].y + root * shock);
    d.y2.push_back(records[j].y - shock / root);
  }
  return d;
}

std::vector<PolicyRecord> training_records(std::span<const PolicyRecord> records,
                                           const CoupledDraws& draws) {
  std::vector<PolicyRecord> out(records.begin(), records.end());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j].y = draws.y1[j];
    out[j].sigma = (1.0 + draws.kappa) * records[j].sigma;
  }
  return out;
}

double coupled_estimate(const Eigen::VectorXd& v, std::span<const Vec2> y2,
                        const PlannerConfig& config) {
  if (static_cast<std::size_t>(v.size()) != y2.size()) {
    throw InputError("coupled estimate: rule dimension does not match the number of policies");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < y2.size(); ++j) {
    total += v(static_cast<Eigen::Index>(j)) * (config.eta_at(j) * y2[j](0) - config.mu * y2[j](1));
  }
  return total;
}

double evaluate_rule(const RuleFn& rule, const CoupledDraws& draws,
                     std::span<const PolicyRecord> records, const PlannerConfig& config) {
  std::vector<Mat2> sigma1;
  sigma1.reserve(records.size());
  for (const auto& r : records) sigma1.push_back((1.0 + draws.kappa) * r.sigma);
  const Eigen::VectorXd v = rule(draws.y1, sigma1);
  return coupled_estimate(v, draws.y2, config);
}

const char* to_string(Pipeline p) {
  return p == Pipeline::empirical_bayes ? "empirical_bayes" : "plug_in";
}

Pipeline pipeline_from_string(const std::string& s) {
  if (s == "empirical_bayes" || s == "eb") return Pipeline::empirical_bayes;
  if (s == "plug_in" || s == "plugin") return Pipeline::plug_in;
  throw InputError("unknown pipeline '" + s + "'");
}

std::vector<WelfareEstimate> evaluate_pipeline(std::span<const PolicyRecord> records,
                                               int num_types,
                                               std::span<const PlannerConfig> planners,
                                               Pipeline pipeline,
                                               const BootstrapOptions& options) {
  if (options.replications < 1) throw InputError("evaluate_pipeline: B must be at least 1");
  if (!(options.kappa > 0.0)) throw InputError("evaluate_pipeline: kappa must be positive");
  for (const auto& pc : planners) pc.validate();

  const auto B = static_cast<std::size_t>(options.replications);
  const std::size_t C = planners.size();
  std::vector<std::vector<double>> values(B, std::vector<double>(C, 0.0));
  std::vector<char> ok(B, 0);

  parallel_for(B, options.threads, [&](std::size_t b) {
    try {
      const CoupledDraws draws = couple(records, options.kappa, options.seed, b);
      std::vector<Vec2> estimates;
      if (pipeline == Pipeline::empirical_bayes) {
        const auto train = training_records(records, draws);
        const EbResult eb = run_empirical_bayes(train, num_types, options.eb);
        estimates = theta_stars(eb.shrunk);
      } else {
        estimates = draws.y1;
      }
      for (std::size_t c = 0; c < C; ++c) {
        const Gradient g = assemble_gradient(estimates, planners[c],
                                             pipeline == Pipeline::empirical_bayes
                                                 ? GradientSource::empirical_bayes
                                                 : GradientSource::plug_in);
        const SpendingRule rule = solve_ball(g.g, planners[c]);
        values[b][c] = coupled_estimate(rule.v, draws.y2, planners[c]);
      }
      ok[b] = 1;
    } catch (const std::exception&) {
      ok[b] = 0;
    }
  });

  std::vector<WelfareEstimate> out(C);
  for (std::size_t c = 0; c < C; ++c) {
    auto& w = out[c];
    w.pipeline = pipeline;
    w.p = planners[c].p;
    w.radius = planners[c].radius;
    w.mu = planners[c].mu;
    w.kappa = options.kappa;
    w.replications = options.replications;
    for (std::size_t b = 0; b < B; ++b) {
      if (ok[b]) {
        w.replicate_values.push_back(values[b][c]);
      } else {
        ++w.dropped;
      }
    }
    const double n = static_cast<double>(w.replicate_values.size());
    if (w.replicate_values.empty()) {
      w.mean = std::numeric_limits<double>::quiet_NaN();
      w.std_error = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double sum = 0.0;
    for (double v : w.replicate_values) sum += v;
    w.mean = sum / n;
    if (w.replicate_values.size() < 2) {
      w.std_error = std::numeric_limits<double>::quiet_NaN();
    } else {
      double ss = 0.0;
      for (double v : w.replicate_values) ss += (v - w.mean) * (v - w.mean);
      w.std_error = std::sqrt(ss / (n - 1.0) / n);
    }
  }
  return out;
}

WelfareEstimate evaluate_pipeline(std::span<const PolicyRecord> records, int num_types,
                                  const PlannerConfig& planner, Pipeline pipeline,
                                  const BootstrapOptions& options) {
  return evaluate_pipeline(records, num_types, std::span<const PlannerConfig>(&planner, 1),
                           pipeline, options)
      .front();
}

nlohmann::json welfare_to_json(const WelfareEstimate& w) {
  auto real = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  return {
      {"pipeline", to_string(w.pipeline)},
      {"V", {{"p", std::isinf(w.p) ? nlohmann::json("inf") : nlohmann::json(w.p)},
             {"radius", w.radius}}},
      {"mu", w.mu},
      {"kappa", w.kappa},
      {"B", w.replications},
      {"mean", real(w.mean)},
      {"std_error", real(w.std_error)},
      {"dropped", w.dropped},
  };
}

}  // namespace ebpolicy
