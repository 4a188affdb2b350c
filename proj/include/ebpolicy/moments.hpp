#pragma once

// Per-type location/scale estimation and standardization of policy estimates.
//
// For type t the location is the sample mean of y and the scale is the sample
// covariance of y minus the mean sampling covariance. The scale estimate can
// be indefinite, so its eigenvalues are floored before square roots are taken.

#include <span>
#include <vector>

#include <json.hpp>

#include "ebpolicy/ingest.hpp"
#include "ebpolicy/linalg2.hpp"

namespace ebpolicy {

enum class VarianceDenominator { population, unbiased };

struct MomentsOptions {
  double eigen_floor = 0.01;
  VarianceDenominator denominator = VarianceDenominator::population;
};

struct TypeMoments {
  Vec2 alpha = Vec2::Zero();
  Mat2 omega_raw = Mat2::Zero();
  Vec2 eigenvalues_before_repair = Vec2::Zero();
  Mat2 omega = Mat2::Identity();
  Mat2 omega_sqrt = Mat2::Identity();
  Mat2 omega_inv_sqrt = Mat2::Identity();
};

struct LocationScale {
  std::vector<TypeMoments> types;
};

struct StandardizedSample {
  Vec2 z_hat = Vec2::Zero();
  Mat2 psi_hat = Mat2::Zero();
  int type = 0;
};

/// Per-type means of y. Throws NumericError when a type in [0, num_types) has no records.
std::vector<Vec2> estimate_location(std::span<const PolicyRecord> records, int num_types);

/// Per-type Var(y) - mean(sigma); possibly indefinite. Throws NumericError
/// (mentioning estimate_scale) when a type has fewer than two records.
std::vector<Mat2> estimate_scale(std::span<const PolicyRecord> records,
                                 std::span<const Vec2> alpha,
                                 VarianceDenominator denominator = VarianceDenominator::population);

/// Raises every eigenvalue below `eigen_floor` to the floor, keeping eigenvectors.
Mat2 psd_repair(const Mat2& m, double eigen_floor);

/// Builds square roots for given (already PSD) scale matrices.
TypeMoments make_type_moments(const Vec2& alpha, const Mat2& omega);

LocationScale estimate_location_scale(std::span<const PolicyRecord> records, int num_types,
                                      const MomentsOptions& options = {});

/// z = omega^{-1/2}(y - alpha), psi = omega^{-1/2} sigma omega^{-1/2}.
StandardizedSample standardize(const PolicyRecord& record, const LocationScale& ls);
std::vector<StandardizedSample> standardize(std::span<const PolicyRecord> records,
                                            const LocationScale& ls);

/// Inverse of the z transform: alpha + omega^{1/2} z.
Vec2 destandardize(const Vec2& z, int type, const LocationScale& ls);

/// Audit document: per type alpha, omega_raw, omega_repaired, eigenvalues_before_repair.
nlohmann::json moments_to_json(const LocationScale& ls, const std::vector<std::string>& labels);

}  // namespace ebpolicy
