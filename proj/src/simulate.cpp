#include "ebpolicy/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ebpolicy/csv.hpp"
#include "ebpolicy/errors.hpp"
#include "ebpolicy/parallel.hpp"
#include "ebpolicy/rng.hpp"

namespace ebpolicy {

namespace {

int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double se_of(const std::vector<double>& v) {
  if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double n = static_cast<double>(v.size());
  return std::sqrt(ss / (n - 1.0) / n);
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

PlannerConfig DgpSpec::planner(double p) const {
  PlannerConfig pc;
  pc.mu = mu;
  pc.eta = {eta};
  pc.p = p;
  pc.radius = 1.0;
  return pc;
}

void DgpSpec::validate() const {
  prior.validate();
  if (alpha.empty() || alpha.size() != omega.size()) {
    throw InputError("dgp: alpha and omega must be non-empty and equal length");
  }
  if (J < 1) throw InputError("dgp: J must be positive");
  if (normalized) {
    if (prior.mean().cwiseAbs().maxCoeff() > 1e-8 ||
        (prior.covariance() - Mat2::Identity()).cwiseAbs().maxCoeff() > 1e-8) {
      throw InputError("dgp: prior flagged normalized but is not mean 0 / covariance I");
    }
  }
}

DgpSpec corner_dgp(int part, int J, const Mat2& sigma, std::uint64_t seed, SigmaLaw law) {
  if (part != 1 && part != 2) throw InputError("corner_dgp: part must be 1 or 2");
  if (!is_symmetric(sigma) || sym_eigen(sigma).values(0) < 0.0) {
    throw InputError("corner_dgp: sigma must be symmetric PSD");
  }
  DgpSpec d;
  d.name = part == 1 ? "corners" : "corners_shifted";
  d.prior.atoms = {Vec2(-1, -1), Vec2(-1, 1), Vec2(1, -1), Vec2(1, 1)};
  d.prior.weights = {0.25, 0.25, 0.25, 0.25};
  const double loc = part == 1 ? 0.0 : 2.0;
  d.alpha = {Vec2(loc, loc)};
  d.omega = {Mat2::Identity()};
  d.sigma_law = law;
  d.sigma = sigma;
  d.eta = 1.0;
  d.mu = -1.0;
  d.J = J;
  d.seed = seed;
  d.normalized = true;
  d.validate();
  return d;
}

SimulatedData simulate_data(const DgpSpec& dgp, std::uint64_t replication) {
  dgp.validate();
  const int T = dgp.num_types();
  std::vector<Mat2> omega_sqrt;
  for (const auto& o : dgp.omega) omega_sqrt.push_back(sym_sqrt(o));

  // Cumulative prior weights for inverse-CDF atom draws.
  std::vector<double> cdf(dgp.prior.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < cdf.size(); ++k) cdf[k] = acc += dgp.prior.weights[k];

  SimulatedData out;
  out.records.reserve(static_cast<std::size_t>(dgp.J));
  for (int j = 0; j < dgp.J; ++j) {
    const auto ju = static_cast<std::uint64_t>(j);
    const int t = j % T;

    CounterRng prior_rng(dgp.seed, Stream::dgp_prior, replication, ju);
    const double u = prior_rng.uniform() * acc;
    const auto k = static_cast<std::size_t>(
        std::min<std::ptrdiff_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin(),
                                 static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    const Vec2 tau = dgp.prior.atoms[k];
    const Vec2 theta = dgp.alpha[static_cast<std::size_t>(t)] +
                       omega_sqrt[static_cast<std::size_t>(t)] * tau;

    Mat2 sigma = dgp.sigma;
    if (dgp.sigma_law == SigmaLaw::heteroscedastic) {
      CounterRng s_rng(dgp.seed, Stream::dgp_sigma, replication, ju);
      const double s1 = 0.5 + 1.5 * s_rng.uniform();
      const double s2 = 0.5 + 1.5 * s_rng.uniform();
      sigma << s1 * s1, 0.0, 0.0, s2 * s2;
    }
    CounterRng noise_rng(dgp.seed, Stream::dgp_noise, replication, ju);
    Vec2 eps;
    eps(0) = noise_rng.normal();
    eps(1) = noise_rng.normal();

    PolicyRecord rec;
    rec.policy_id = "p" + std::to_string(j);
    rec.type = t;
    rec.sigma = sigma;
    rec.y = theta + sym_sqrt(sigma) * eps;
    out.records.push_back(std::move(rec));
    out.theta.push_back(theta);
    out.tau.push_back(tau);
  }
  return out;
}

std::vector<Vec2> oracle_posterior_means(const SimulatedData& data, const DgpSpec& dgp) {
  const std::size_t K = dgp.prior.size();
  // Atom locations per type in (WTP, G) coordinates.
  std::vector<std::vector<Vec2>> theta_atoms(dgp.alpha.size());
  for (std::size_t t = 0; t < dgp.alpha.size(); ++t) {
    const Mat2 root = sym_sqrt(dgp.omega[t]);
    for (const auto& u : dgp.prior.atoms) theta_atoms[t].push_back(dgp.alpha[t] + root * u);
  }
  std::vector<Vec2> out;
  out.reserve(data.records.size());
  std::vector<double> logw(K);
  for (const auto& rec : data.records) {
    const auto& atoms = theta_atoms[static_cast<std::size_t>(rec.type)];
    if (rec.sigma.isZero(0.0)) {
      out.push_back(rec.y);
      continue;
    }
    const Mat2 prec = rec.sigma.inverse();
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      const Vec2 d = rec.y - atoms[k];
      logw[k] = dgp.prior.weights[k] > 0.0
                    ? std::log(dgp.prior.weights[k]) - 0.5 * d.dot(prec * d)
                    : -std::numeric_limits<double>::infinity();
      mx = std::max(mx, logw[k]);
    }
    double total = 0.0;
    Vec2 acc = Vec2::Zero();
    for (std::size_t k = 0; k < K; ++k) {
      const double w = std::exp(logw[k] - mx);
      total += w;
      acc += w * atoms[k];
    }
    out.push_back(acc / total);
  }
  return out;
}

Gradient oracle_gradient(const SimulatedData& data, const DgpSpec& dgp) {
  const auto means = oracle_posterior_means(data, dgp);
  return assemble_gradient(means, dgp.planner(2.0), GradientSource::oracle);
}

Eigen::VectorXd true_gradient(const SimulatedData& data, const DgpSpec& dgp) {
  return assemble_gradient(data.theta, dgp.planner(2.0), GradientSource::oracle).g;
}

double RegretReport::median_gap() const { return median(gap_values); }
double RegretReport::median_rule() const { return median(rule_values); }
double RegretReport::median_mse() const { return median(mse_values); }

std::vector<RegretReport> regret_grid(const DgpSpec& dgp, std::span<const double> p_list,
                                      std::span<const GradientSource> pipelines,
                                      int replications, const SimOptions& options) {
  dgp.validate();
  if (replications < 1) throw InputError("regret: replications must be at least 1");
  const std::size_t P = p_list.size();
  const std::size_t S = pipelines.size();
  const auto R = static_cast<std::size_t>(replications);

  struct Metrics {
    bool ok = false;
    double gap = 0.0, rule = 0.0, mse = 0.0, sign = 0.0;
  };
  // metrics[r][p * S + s]
  std::vector<std::vector<Metrics>> metrics(R, std::vector<Metrics>(P * S));

  parallel_for(R, options.threads, [&](std::size_t r) {
    const SimulatedData data = simulate_data(dgp, r);
    const auto oracle = oracle_posterior_means(data, dgp);
    for (std::size_t s = 0; s < S; ++s) {
      std::vector<Vec2> estimates;
      try {
        switch (pipelines[s]) {
          case GradientSource::oracle: estimates = oracle; break;
          case GradientSource::plug_in:
            for (const auto& rec : data.records) estimates.push_back(rec.y);
            break;
          case GradientSource::empirical_bayes:
            estimates = theta_stars(
                run_empirical_bayes(data.records, dgp.num_types(), options.eb).shrunk);
            break;
        }
      } catch (const std::exception&) {
        continue;
      }
      const double mse = mse_regret(estimates, oracle);
      for (std::size_t pi = 0; pi < P; ++pi) {
        const PlannerConfig pc = dgp.planner(p_list[pi]);
        const Gradient g_or = assemble_gradient(oracle, pc, GradientSource::oracle);
        const Gradient g_pl = assemble_gradient(estimates, pc, pipelines[s]);
        const SpendingRule v_or = solve_ball(g_or.g, pc);
        const SpendingRule v_pl = solve_ball(g_pl.g, pc);
        const double norm = ball_normalization(data.records.size(), pc.p);
        Metrics& m = metrics[r][pi * S + s];
        m.gap = lp_norm(g_or.g - g_pl.g, dual_exponent(pc.p)) / norm;
        m.rule = (g_or.g.dot(v_or.v) - g_or.g.dot(v_pl.v)) / norm;
        m.mse = mse;
        int mistakes = 0;
        for (Eigen::Index j = 0; j < g_or.g.size(); ++j) {
          if (sign_of(v_pl.v(j)) != sign_of(g_or.g(j))) ++mistakes;
        }
        m.sign = static_cast<double>(mistakes) / static_cast<double>(g_or.g.size());
        m.ok = true;
      }
    }
  });

  std::vector<RegretReport> out;
  out.reserve(P * S);
  for (std::size_t pi = 0; pi < P; ++pi) {
    for (std::size_t s = 0; s < S; ++s) {
      RegretReport rep;
      rep.J = dgp.J;
      rep.p = p_list[pi];
      rep.pipeline = pipelines[s];
      rep.normalization = ball_normalization(static_cast<std::size_t>(dgp.J), rep.p);
      rep.replications = replications;
      for (std::size_t r = 0; r < R; ++r) {
        const Metrics& m = metrics[r][pi * S + s];
        if (!m.ok) {
          ++rep.failed;
          continue;
        }
        rep.gap_values.push_back(m.gap);
        rep.rule_values.push_back(m.rule);
        rep.mse_values.push_back(m.mse);
        rep.sign_mistake_values.push_back(m.sign);
      }
      rep.objective_gap = mean_of(rep.gap_values);
      rep.rule_regret = mean_of(rep.rule_values);
      rep.mse_regret = mean_of(rep.mse_values);
      rep.se_objective = se_of(rep.gap_values);
      rep.se_rule = se_of(rep.rule_values);
      rep.se_mse = se_of(rep.mse_values);
      rep.sign_mistake_rate = mean_of(rep.sign_mistake_values);
      out.push_back(std::move(rep));
    }
  }
  return out;
}

RegretReport regret_experiment(const DgpSpec& dgp, double p, GradientSource pipeline,
                               int replications, const SimOptions& options) {
  return regret_grid(dgp, std::span<const double>(&p, 1),
                     std::span<const GradientSource>(&pipeline, 1), replications, options)
      .front();
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t salt) {
  // splitmix64 finalizer over the combined words.
  std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

RateTable rate_table(const DgpFamily& family, std::span<const int> J_list,
                     std::span<const double> p_list, std::span<const GradientSource> pipelines,
                     int replications, std::uint64_t master_seed, const SimOptions& options) {
  if (J_list.empty() || p_list.empty() || pipelines.empty()) {
    throw InputError("rate_table: J, p and pipeline lists must be non-empty");
  }
  RateTable table;
  for (int J : J_list) {
    try {
      const DgpSpec dgp = family(J, derive_seed(master_seed, static_cast<std::uint64_t>(J)));
      auto rows = regret_grid(dgp, p_list, pipelines, replications, options);
      for (auto& r : rows) table.rows.push_back(std::move(r));
    } catch (const std::exception& e) {
      table.failures.push_back("J=" + std::to_string(J) + ": " + e.what());
    }
  }
  return table;
}

void write_rate_csv(std::ostream& out, std::span<const RegretReport> rows) {
  csv::write_row(out, {"J", "p", "pipeline", "objective_gap", "rule_regret", "mse_regret",
                       "se_objective", "se_rule", "replications"});
  for (const auto& r : rows) {
    csv::write_row(out, {std::to_string(r.J), format_p(r.p), to_string(r.pipeline),
                         csv::format_real(r.objective_gap), csv::format_real(r.rule_regret),
                         csv::format_real(r.mse_regret), csv::format_real(r.se_objective),
                         csv::format_real(r.se_rule), std::to_string(r.replications)});
  }
}

GradientSource source_from_string(const std::string& s) {
  if (s == "oracle") return GradientSource::oracle;
  if (s == "plug_in" || s == "plugin") return GradientSource::plug_in;
  if (s == "empirical_bayes" || s == "eb") return GradientSource::empirical_bayes;
  throw InputError("unknown pipeline '" + s + "'");
}

}  // namespace ebpolicy
