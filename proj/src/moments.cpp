#include "ebpolicy/moments.hpp"

#include <sstream>

#include "ebpolicy/errors.hpp"

namespace ebpolicy {

namespace {

std::vector<int> group_counts(std::span<const PolicyRecord> records, int num_types) {
  std::vector<int> counts(static_cast<std::size_t>(num_types), 0);
  for (const auto& r : records) {
    if (r.type < 0 || r.type >= num_types) {
      throw InputError("policy '" + r.policy_id + "' has type index out of range");
    }
    ++counts[static_cast<std::size_t>(r.type)];
  }
  return counts;
}

nlohmann::json mat_json(const Mat2& m) {
  return {{m(0, 0), m(0, 1)}, {m(1, 0), m(1, 1)}};
}

}  // namespace

std::vector<Vec2> estimate_location(std::span<const PolicyRecord> records, int num_types) {
  const auto counts = group_counts(records, num_types);
  std::vector<Vec2> alpha(counts.size(), Vec2::Zero());
  for (const auto& r : records) alpha[static_cast<std::size_t>(r.type)] += r.y;
  for (std::size_t t = 0; t < alpha.size(); ++t) {
    if (counts[t] == 0) {
      throw NumericError("estimate_location: type " + std::to_string(t) + " has no records");
    }
    alpha[t] /= counts[t];
  }
  return alpha;
}

std::vector<Mat2> estimate_scale(std::span<const PolicyRecord> records,
                                 std::span<const Vec2> alpha,
                                 VarianceDenominator denominator) {
  const int num_types = static_cast<int>(alpha.size());
  const auto counts = group_counts(records, num_types);
  for (std::size_t t = 0; t < counts.size(); ++t) {
    if (counts[t] < 2) {
      std::ostringstream msg;
      msg << "estimate_scale: type " << t << " has " << counts[t]
          << " record(s); at least 2 are required";
      throw NumericError(msg.str());
    }
  }
  std::vector<Mat2> spread(counts.size(), Mat2::Zero());
  std::vector<Mat2> noise(counts.size(), Mat2::Zero());
  for (const auto& r : records) {
    const auto t = static_cast<std::size_t>(r.type);
    const Vec2 d = r.y - alpha[t];
    spread[t] += d * d.transpose();
    noise[t] += r.sigma;
  }
  std::vector<Mat2> omega(counts.size());
  for (std::size_t t = 0; t < counts.size(); ++t) {
    const double n = counts[t];
    const double dof = denominator == VarianceDenominator::unbiased ? n - 1.0 : n;
    Mat2 m = spread[t] / dof - noise[t] / n;
    const double off = 0.5 * (m(0, 1) + m(1, 0));
    m(0, 1) = m(1, 0) = off;
    omega[t] = m;
  }
  return omega;
}

Mat2 psd_repair(const Mat2& m, double eigen_floor) {
  if (!is_symmetric(m)) throw InputError("psd_repair: matrix is not symmetric");
  SymEigen2 e = sym_eigen(m);
  if (e.values(0) >= eigen_floor) return m;
  e.values = e.values.cwiseMax(eigen_floor);
  return sym_reassemble(e);
}

TypeMoments make_type_moments(const Vec2& alpha, const Mat2& omega) {
  TypeMoments tm;
  tm.alpha = alpha;
  tm.omega_raw = omega;
  tm.eigenvalues_before_repair = sym_eigen(omega).values;
  tm.omega = omega;
  tm.omega_sqrt = sym_sqrt(omega);
  try {
    tm.omega_inv_sqrt = sym_inv_sqrt(omega);
  } catch (const NumericError& e) {
    throw NumericError(std::string("scale matrix: ") + e.what());
  }
  return tm;
}

LocationScale estimate_location_scale(std::span<const PolicyRecord> records, int num_types,
                                      const MomentsOptions& options) {
  const auto alpha = estimate_location(records, num_types);
  const auto omega_raw = estimate_scale(records, alpha, options.denominator);
  LocationScale ls;
  ls.types.reserve(alpha.size());
  for (std::size_t t = 0; t < alpha.size(); ++t) {
    TypeMoments tm = make_type_moments(alpha[t], psd_repair(omega_raw[t], options.eigen_floor));
    tm.omega_raw = omega_raw[t];
    tm.eigenvalues_before_repair = sym_eigen(omega_raw[t]).values;
    ls.types.push_back(tm);
  }
  return ls;
}

StandardizedSample standardize(const PolicyRecord& record, const LocationScale& ls) {
  const auto& tm = ls.types.at(static_cast<std::size_t>(record.type));
  StandardizedSample s;
  s.type = record.type;
  s.z_hat = tm.omega_inv_sqrt * (record.y - tm.alpha);
  Mat2 psi = tm.omega_inv_sqrt * record.sigma * tm.omega_inv_sqrt;
  const double off = 0.5 * (psi(0, 1) + psi(1, 0));
  psi(0, 1) = psi(1, 0) = off;
  s.psi_hat = psi;
  return s;
}

std::vector<StandardizedSample> standardize(std::span<const PolicyRecord> records,
                                            const LocationScale& ls) {
  std::vector<StandardizedSample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(standardize(r, ls));
  return out;
}

Vec2 destandardize(const Vec2& z, int type, const LocationScale& ls) {
  const auto& tm = ls.types.at(static_cast<std::size_t>(type));
  return tm.alpha + tm.omega_sqrt * z;
}

nlohmann::json moments_to_json(const LocationScale& ls, const std::vector<std::string>& labels) {
  nlohmann::json types = nlohmann::json::array();
  for (std::size_t t = 0; t < ls.types.size(); ++t) {
    const auto& tm = ls.types[t];
    types.push_back({
        {"type", t < labels.size() ? labels[t] : std::to_string(t)},
        {"alpha", {tm.alpha(0), tm.alpha(1)}},
        {"omega_raw", mat_json(tm.omega_raw)},
        {"omega_repaired", mat_json(tm.omega)},
        {"eigenvalues_before_repair",
         {tm.eigenvalues_before_repair(0), tm.eigenvalues_before_repair(1)}},
    });
  }
  return {{"types", types}};
}

}  // namespace ebpolicy
