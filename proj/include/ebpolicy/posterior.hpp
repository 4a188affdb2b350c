#pragma once

#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ebpolicy/ingest.hpp"
#include "ebpolicy/linalg2.hpp"
#include "ebpolicy/moments.hpp"
#include "ebpolicy/npmle.hpp"

namespace ebpolicy {

enum class Provenance { oracle, empirical_bayes };

const char* to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

/// Posterior mean of one policy: residual tau_star and the de-standardized
/// (WTP*, G*) = alpha_t + omega_t^{1/2} tau_star.
struct ShrunkEstimate {
  std::string policy_id;
  int type = 0;
  Vec2 y = Vec2::Zero();
  Vec2 tau_star = Vec2::Zero();
  Vec2 theta_star = Vec2::Zero();
  Provenance provenance = Provenance::empirical_bayes;
};

/// E[tau | z] for z ~ N(tau, psi), tau ~ prior, as a kernel-weighted atom
/// average. The result is clamped to the bounding box of the positive-weight
/// atoms. A zero psi (noise-free observation) returns z unchanged.
Vec2 posterior_mean_residual(const Vec2& z, const Mat2& psi, const DiscretePrior& prior);

/// Same posterior mean via z + psi grad f(z) / f(z) with f the marginal density.
Vec2 tweedie_mean(const Vec2& z, const Mat2& psi, const DiscretePrior& prior);

bool is_noise_free(const Mat2& psi);

std::vector<ShrunkEstimate> shrink_all(std::span<const PolicyRecord> records,
                                       std::span<const StandardizedSample> samples,
                                       const DiscretePrior& prior, const LocationScale& ls,
                                       Provenance provenance);

/// (1/J) sum_j ||a_j - b_j||^2. Throws InputError on a length mismatch.
double mse_regret(std::span<const Vec2> a, std::span<const Vec2> b);
double mse_regret(std::span<const ShrunkEstimate> eb, std::span<const ShrunkEstimate> oracle);

std::vector<Vec2> theta_stars(std::span<const ShrunkEstimate> estimates);

/// policy_id,type,wtp_hat,g_hat,wtp_star,g_star,provenance
void write_shrunk_csv(std::ostream& out, std::span<const ShrunkEstimate> estimates,
                      const TypeTable& types);

struct ShrunkTable {
  std::vector<ShrunkEstimate> estimates;
  TypeTable types;
};
ShrunkTable read_shrunk_csv(std::istream& in);

}  // namespace ebpolicy
