#pragma once

// Welfare gradient assembly and the closed-form local problem over L^p balls.

#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ebpolicy/linalg2.hpp"
#include "ebpolicy/posterior.hpp"

namespace ebpolicy {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct PlannerConfig {
  double mu = 0.0;
  /// Per-policy welfare weights; empty means all ones, one entry is broadcast.
  std::vector<double> eta;
  /// In [1, inf]; kInfinity selects the sup-norm ball.
  double p = 2.0;
  double radius = 1.0;
  /// Policies whose spending is held fixed (v_j = 0). Empty means none.
  std::vector<bool> frozen;

  double eta_at(std::size_t j) const;
  /// Throws InputError on p < 1, radius <= 0 or non-finite eta.
  void validate() const;
};

enum class GradientSource { oracle, plug_in, empirical_bayes };

const char* to_string(GradientSource s);

struct Gradient {
  Eigen::VectorXd g;
  GradientSource source = GradientSource::plug_in;
};

struct SpendingRule {
  Eigen::VectorXd v;
  double p = 2.0;
  double radius = 1.0;
  /// max over the ball of <g, v>, equal to radius * ||g||_q.
  double objective = 0.0;
};

/// Conjugate exponent p/(p-1), with 1 <-> inf.
double dual_exponent(double p);

double lp_norm(const Eigen::VectorXd& x, double p);

/// J^{(p-1)/p} for finite p and J for p = inf.
double ball_normalization(std::size_t J, double p);

/// g_j = eta_j * wtp_j - mu * g_cost_j for estimates (wtp_j, g_cost_j).
Gradient assemble_gradient(std::span<const Vec2> estimates, const PlannerConfig& config,
                           GradientSource source);

SpendingRule solve_ball(const Eigen::VectorXd& g, const PlannerConfig& config);

double objective_value(const Eigen::VectorXd& g, const Eigen::VectorXd& v);

/// Per-policy sufficient statistics for the spending direction.
struct DirectionSign {
  /// E[WTP]/E[G]; empty when E[G] = 0.
  std::optional<double> ratio;
  int sign_g = 0;
  int recommended_sign = 0;
};

/// Applies the ratio/sign rules. The result always matches sign(g_j) of the
/// assembled gradient; a disagreement beyond roundoff throws std::logic_error.
std::vector<DirectionSign> direction_signs(std::span<const Vec2> estimates,
                                           const PlannerConfig& config);
std::vector<DirectionSign> direction_signs(std::span<const ShrunkEstimate> shrunk,
                                           const PlannerConfig& config);

/// policy_id,v_j,g_j,source
void write_rule_csv(std::ostream& out, std::span<const std::string> policy_ids,
                    const Gradient& gradient, const SpendingRule& rule);
/// policy_id,ratio,sign_g,recommended_sign
void write_direction_csv(std::ostream& out, std::span<const std::string> policy_ids,
                         std::span<const DirectionSign> signs);

std::string format_p(double p);
/// Accepts a number or "inf".
double parse_p(const std::string& s);

}  // namespace ebpolicy
