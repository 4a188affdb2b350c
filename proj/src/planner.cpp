#include "ebpolicy/planner.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ebpolicy/csv.hpp"
#include "ebpolicy/errors.hpp"

namespace ebpolicy {

namespace {

int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

double PlannerConfig::eta_at(std::size_t j) const {
  if (eta.empty()) return 1.0;
  if (eta.size() == 1) return eta.front();
  return eta.at(j);
}

void PlannerConfig::validate() const {
  if (!(p >= 1.0)) throw InputError("planner: p must be at least 1");
  if (!(radius > 0.0) || !std::isfinite(radius)) throw InputError("planner: radius must be positive");
  if (!std::isfinite(mu)) throw InputError("planner: mu must be finite");
  for (double e : eta) {
    if (!std::isfinite(e)) throw InputError("planner: eta must be finite");
  }
}

const char* to_string(GradientSource s) {
  switch (s) {
    case GradientSource::oracle: return "oracle";
    case GradientSource::plug_in: return "plug_in";
    case GradientSource::empirical_bayes: return "empirical_bayes";
  }
  return "unknown";
}

double dual_exponent(double p) {
  if (p == 1.0) return kInfinity;
  if (std::isinf(p)) return 1.0;
  return p / (p - 1.0);
}

double lp_norm(const Eigen::VectorXd& x, double p) {
  if (x.size() == 0) return 0.0;
  const double scale = x.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  if (std::isinf(p)) return scale;
  if (p == 1.0) return x.cwiseAbs().sum();
  if (p == 2.0) return scale * (x / scale).norm();
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) total += std::pow(std::abs(x(i)) / scale, p);
  return scale * std::pow(total, 1.0 / p);
}

double ball_normalization(std::size_t J, double p) {
  const double n = static_cast<double>(J);
  if (std::isinf(p)) return n;
  return std::pow(n, (p - 1.0) / p);
}

Gradient assemble_gradient(std::span<const Vec2> estimates, const PlannerConfig& config,
                           GradientSource source) {
  if (config.eta.size() > 1 && config.eta.size() != estimates.size()) {
    throw InputError("assemble_gradient: eta has " + std::to_string(config.eta.size()) +
                     " entries for " + std::to_string(estimates.size()) + " policies");
  }
  Gradient grad;
  grad.source = source;
  grad.g.resize(static_cast<Eigen::Index>(estimates.size()));
  for (std::size_t j = 0; j < estimates.size(); ++j) {
    grad.g(static_cast<Eigen::Index>(j)) =
        config.eta_at(j) * estimates[j](0) - config.mu * estimates[j](1);
  }
  return grad;
}

SpendingRule solve_ball(const Eigen::VectorXd& gradient, const PlannerConfig& config) {
  config.validate();
  SpendingRule rule;
  rule.p = config.p;
  rule.radius = config.radius;
  const Eigen::Index J = gradient.size();
  rule.v = Eigen::VectorXd::Zero(J);

  Eigen::VectorXd g = gradient;
  if (!config.frozen.empty()) {
    if (static_cast<Eigen::Index>(config.frozen.size()) != J) {
      throw InputError("solve_ball: frozen mask length does not match the gradient");
    }
    for (Eigen::Index j = 0; j < J; ++j) {
      if (config.frozen[static_cast<std::size_t>(j)]) g(j) = 0.0;
    }
  }
  if (!g.allFinite()) throw NumericError("solve_ball: gradient has non-finite entries");
  const double scale = J > 0 ? g.cwiseAbs().maxCoeff() : 0.0;
  if (scale == 0.0) return rule;

  const double p = config.p;
  const double r = config.radius;
  if (std::isinf(p)) {
    for (Eigen::Index j = 0; j < J; ++j) rule.v(j) = r * sign_of(g(j));
  } else if (p == 1.0) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < J; ++j) {
      if (std::abs(g(j)) > std::abs(g(best))) best = j;
    }
    rule.v(best) = r * sign_of(g(best));
  } else {
    // v_j proportional to sign(g_j)|g_j|^{1/(p-1)}, normalized to ||v||_p = r.
    const double e = 1.0 / (p - 1.0);
    Eigen::VectorXd a(J);
    for (Eigen::Index j = 0; j < J; ++j) a(j) = std::pow(std::abs(g(j)) / scale, e);
    const double norm = lp_norm(a, p);
    for (Eigen::Index j = 0; j < J; ++j) rule.v(j) = r * sign_of(g(j)) * a(j) / norm;
  }
  rule.objective = r * lp_norm(g, dual_exponent(p));
  return rule;
}

double objective_value(const Eigen::VectorXd& g, const Eigen::VectorXd& v) {
  if (g.size() != v.size()) throw InputError("objective_value: length mismatch");
  return g.dot(v);
}

std::vector<DirectionSign> direction_signs(std::span<const Vec2> estimates,
                                           const PlannerConfig& config) {
  const Gradient grad = assemble_gradient(estimates, config, GradientSource::empirical_bayes);
  std::vector<DirectionSign> out(estimates.size());
  for (std::size_t j = 0; j < estimates.size(); ++j) {
    const double wtp = estimates[j](0);
    const double cost = estimates[j](1);
    const double eta = config.eta_at(j);
    auto& d = out[j];
    d.sign_g = sign_of(cost);
    if (cost != 0.0) d.ratio = wtp / cost;

    int rec = 0;
    if (eta == 0.0) {
      rec = -sign_of(config.mu * cost);
    } else if (cost == 0.0) {
      rec = sign_of(eta * wtp);
    } else {
      // eta*wtp - mu*cost = eta*cost*(ratio - mu/eta).
      rec = sign_of(eta) * sign_of(cost) * sign_of(*d.ratio - config.mu / eta);
    }
    const double gj = grad.g(static_cast<Eigen::Index>(j));
    if (rec != sign_of(gj)) {
      const double tol = 1e-12 * (std::abs(eta * wtp) + std::abs(config.mu * cost));
      if (std::abs(gj) > tol) {
        throw std::logic_error("direction_signs: ratio rule disagrees with gradient sign for "
                               "policy " + std::to_string(j));
      }
      // Boundary case decided by roundoff; follow the gradient the solver sees.
      rec = sign_of(gj);
    }
    d.recommended_sign = rec;
  }
  return out;
}

std::vector<DirectionSign> direction_signs(std::span<const ShrunkEstimate> shrunk,
                                           const PlannerConfig& config) {
  const auto stars = theta_stars(shrunk);
  return direction_signs(std::span<const Vec2>(stars), config);
}

void write_rule_csv(std::ostream& out, std::span<const std::string> policy_ids,
                    const Gradient& gradient, const SpendingRule& rule) {
  if (policy_ids.size() != static_cast<std::size_t>(rule.v.size()) ||
      rule.v.size() != gradient.g.size()) {
    throw InputError("write_rule_csv: length mismatch");
  }
  csv::write_row(out, {"policy_id", "v_j", "g_j", "source"});
  for (std::size_t j = 0; j < policy_ids.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    csv::write_row(out, {policy_ids[j], csv::format_real(rule.v(i)),
                         csv::format_real(gradient.g(i)), to_string(gradient.source)});
  }
}

void write_direction_csv(std::ostream& out, std::span<const std::string> policy_ids,
                         std::span<const DirectionSign> signs) {
  csv::write_row(out, {"policy_id", "ratio", "sign_g", "recommended_sign"});
  for (std::size_t j = 0; j < signs.size(); ++j) {
    const auto& d = signs[j];
    csv::write_row(out, {policy_ids[j], d.ratio ? csv::format_real(*d.ratio) : "undefined",
                         std::to_string(d.sign_g), std::to_string(d.recommended_sign)});
  }
}

std::string format_p(double p) { return std::isinf(p) ? "inf" : csv::format_real(p); }

double parse_p(const std::string& s) {
  if (s == "inf" || s == "Inf" || s == "infinity") return kInfinity;
  const double p = csv::parse_real(s, 0, "p");
  if (!(p >= 1.0)) throw InputError("p must be at least 1 or 'inf'");
  return p;
}

}  // namespace ebpolicy
