#pragma once

// End-to-end empirical Bayes shrinkage: moments -> standardize -> grid NPMLE
// -> posterior means -> de-standardize.

#include <span>
#include <vector>

#include "ebpolicy/ingest.hpp"
#include "ebpolicy/moments.hpp"
#include "ebpolicy/npmle.hpp"
#include "ebpolicy/posterior.hpp"

namespace ebpolicy {

struct EbOptions {
  MomentsOptions moments;
  int grid_points = 40;
  double padding = 0.05;
  NpmleOptions npmle;
};

struct EbResult {
  LocationScale location_scale;
  std::vector<StandardizedSample> samples;
  GridSpec grid;
  NpmleFit fit;
  std::vector<ShrunkEstimate> shrunk;
  /// Policies with zero sampling covariance; they are left out of the NPMLE
  /// and their posterior mean is the estimate itself.
  std::size_t noise_free = 0;
};

EbResult run_empirical_bayes(std::span<const PolicyRecord> records, int num_types,
                             const EbOptions& options = {});

}  // namespace ebpolicy
