#include "ebpolicy/pipeline.hpp"

#include "ebpolicy/errors.hpp"

namespace ebpolicy {

EbResult run_empirical_bayes(std::span<const PolicyRecord> records, int num_types,
                             const EbOptions& options) {
  if (records.empty()) throw InputError("empirical Bayes: no policies");
  EbResult res;
  res.location_scale = estimate_location_scale(records, num_types, options.moments);
  res.samples = standardize(records, res.location_scale);

  std::vector<StandardizedSample> noisy;
  noisy.reserve(res.samples.size());
  for (const auto& s : res.samples) {
    if (is_noise_free(s.psi_hat)) {
      ++res.noise_free;
    } else {
      noisy.push_back(s);
    }
  }

  if (noisy.empty()) {
    // Nothing to deconvolve: the fitted prior is the empirical distribution.
    res.grid.atoms.reserve(res.samples.size());
    for (const auto& s : res.samples) res.fit.prior.atoms.push_back(s.z_hat);
    res.fit.prior.weights.assign(res.samples.size(), 1.0 / static_cast<double>(res.samples.size()));
    res.fit.diagnostics.converged = true;
  } else {
    res.grid = build_grid(noisy, options.grid_points, options.padding);
    const LikelihoodMatrix L = likelihood_matrix(noisy, res.grid.atoms);
    res.fit = fit_npmle(L, res.grid.atoms, options.npmle);
  }
  res.shrunk = shrink_all(records, res.samples, res.fit.prior, res.location_scale,
                          Provenance::empirical_bayes);
  return res;
}

}  // namespace ebpolicy
