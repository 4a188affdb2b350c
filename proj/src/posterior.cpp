#include "ebpolicy/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ebpolicy/csv.hpp"
#include "ebpolicy/errors.hpp"

namespace ebpolicy {

namespace {

/// Log kernel values log w_k + log phi_psi(z - u_k), shifted by their maximum.
std::vector<double> shifted_log_kernels(const Vec2& z, const Mat2& psi,
                                        const DiscretePrior& prior) {
  std::vector<double> lk(prior.size(), -std::numeric_limits<double>::infinity());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < prior.size(); ++k) {
    if (prior.weights[k] <= 0.0) continue;
    lk[k] = std::log(prior.weights[k]) + log_normal_density(z, prior.atoms[k], psi);
    mx = std::max(mx, lk[k]);
  }
  if (!std::isfinite(mx)) throw NumericError("posterior: mixture density is not finite");
  for (double& v : lk) v -= mx;
  return lk;
}

Vec2 clamp_to_support(const Vec2& x, const DiscretePrior& prior) {
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  for (std::size_t k = 0; k < prior.size(); ++k) {
    if (prior.weights[k] <= 0.0) continue;
    lo = lo.cwiseMin(prior.atoms[k]);
    hi = hi.cwiseMax(prior.atoms[k]);
  }
  return x.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace

const char* to_string(Provenance p) {
  return p == Provenance::oracle ? "oracle" : "empirical_bayes";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "oracle") return Provenance::oracle;
  if (s == "empirical_bayes") return Provenance::empirical_bayes;
  throw InputError("unknown provenance '" + s + "'");
}

bool is_noise_free(const Mat2& psi) { return psi.isZero(0.0); }

Vec2 posterior_mean_residual(const Vec2& z, const Mat2& psi, const DiscretePrior& prior) {
  if (is_noise_free(psi)) return z;
  const auto lk = shifted_log_kernels(z, psi, prior);
  double denom = 0.0;
  Vec2 num = Vec2::Zero();
  for (std::size_t k = 0; k < prior.size(); ++k) {
    const double kv = std::exp(lk[k]);
    denom += kv;
    num += kv * prior.atoms[k];
  }
  // The largest shifted kernel is exp(0) = 1.
  if (!(denom >= 1.0)) throw NumericError("posterior: kernel normalization failed");
  return clamp_to_support(num / denom, prior);
}

Vec2 tweedie_mean(const Vec2& z, const Mat2& psi, const DiscretePrior& prior) {
  if (is_noise_free(psi)) return z;
  const auto lk = shifted_log_kernels(z, psi, prior);
  const Mat2 psi_inv = psi.inverse();
  // f and grad f share the common factor exp(max), which cancels in the ratio.
  double f = 0.0;
  Vec2 grad = Vec2::Zero();
  for (std::size_t k = 0; k < prior.size(); ++k) {
    const double kv = std::exp(lk[k]);
    f += kv;
    grad += kv * (psi_inv * (prior.atoms[k] - z));
  }
  return z + psi * grad / f;
}

std::vector<ShrunkEstimate> shrink_all(std::span<const PolicyRecord> records,
                                       std::span<const StandardizedSample> samples,
                                       const DiscretePrior& prior, const LocationScale& ls,
                                       Provenance provenance) {
  if (records.size() != samples.size()) {
    throw InputError("shrink_all: records and samples differ in length");
  }
  std::vector<ShrunkEstimate> out;
  out.reserve(records.size());
  for (std::size_t j = 0; j < records.size(); ++j) {
    ShrunkEstimate e;
    e.policy_id = records[j].policy_id;
    e.type = records[j].type;
    e.y = records[j].y;
    e.tau_star = posterior_mean_residual(samples[j].z_hat, samples[j].psi_hat, prior);
    e.theta_star = destandardize(e.tau_star, e.type, ls);
    e.provenance = provenance;
    out.push_back(std::move(e));
  }
  return out;
}

double mse_regret(std::span<const Vec2> a, std::span<const Vec2> b) {
  if (a.size() != b.size()) throw InputError("mse_regret: length mismatch");
  if (a.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) total += (a[j] - b[j]).squaredNorm();
  return total / static_cast<double>(a.size());
}

double mse_regret(std::span<const ShrunkEstimate> eb, std::span<const ShrunkEstimate> oracle) {
  const auto a = theta_stars(eb);
  const auto b = theta_stars(oracle);
  return mse_regret(a, b);
}

std::vector<Vec2> theta_stars(std::span<const ShrunkEstimate> estimates) {
  std::vector<Vec2> out;
  out.reserve(estimates.size());
  for (const auto& e : estimates) out.push_back(e.theta_star);
  return out;
}

void write_shrunk_csv(std::ostream& out, std::span<const ShrunkEstimate> estimates,
                      const TypeTable& types) {
  csv::write_row(out, {"policy_id", "type", "wtp_hat", "g_hat", "wtp_star", "g_star",
                       "provenance"});
  for (const auto& e : estimates) {
    csv::write_row(out, {e.policy_id, types.label(e.type), csv::format_real(e.y(0)),
                         csv::format_real(e.y(1)), csv::format_real(e.theta_star(0)),
                         csv::format_real(e.theta_star(1)), to_string(e.provenance)});
  }
}

ShrunkTable read_shrunk_csv(std::istream& in) {
  const auto rows = csv::read(in);
  static const std::vector<std::string> header = {"policy_id", "type",   "wtp_hat",   "g_hat",
                                                  "wtp_star",  "g_star", "provenance"};
  if (rows.empty() || rows.front().fields != header) {
    throw InputError("shrunk estimates: header must be policy_id,type,wtp_hat,g_hat,wtp_star,"
                     "g_star,provenance");
  }
  ShrunkTable table;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    const auto line = rows[r].line;
    if (f.size() != header.size()) {
      throw InputError("shrunk estimates line " + std::to_string(line) + ": wrong column count");
    }
    ShrunkEstimate e;
    e.policy_id = f[0];
    e.type = table.types.intern(f[1]);
    e.y << csv::parse_real(f[2], line, "wtp_hat"), csv::parse_real(f[3], line, "g_hat");
    e.theta_star << csv::parse_real(f[4], line, "wtp_star"), csv::parse_real(f[5], line, "g_star");
    e.provenance = provenance_from_string(f[6]);
    table.estimates.push_back(std::move(e));
  }
  return table;
}

}  // namespace ebpolicy
