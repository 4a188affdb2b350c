#pragma once

// Policy datasets: CSV parsing, confidence-interval to variance conversion,
// and normalization by program cost.

#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ebpolicy/linalg2.hpp"

namespace ebpolicy {

/// 97.5% quantile of the standard normal.
inline constexpr double kZ975 = 1.959963984540054;

/// One CSV row as reported, in the source monetary unit.
struct RawPolicyRow {
  std::string policy_id;
  std::string type_label;
  double wtp = 0.0;
  double wtp_lb = 0.0;
  double wtp_ub = 0.0;
  double cost = 0.0;
  double cost_lb = 0.0;
  double cost_ub = 0.0;
  double program_cost = 1.0;
  /// Covariance between the WTP and cost estimates, source units squared.
  std::optional<double> sigma_cov;
};

/// One policy's program-cost-normalized estimates y = (WTP, G) with
/// sampling covariance sigma. `type` is a 0-based index into a TypeTable.
struct PolicyRecord {
  std::string policy_id;
  int type = 0;
  Vec2 y = Vec2::Zero();
  Mat2 sigma = Mat2::Zero();
};

/// Type labels in first-appearance order.
class TypeTable {
 public:
  TypeTable() = default;
  explicit TypeTable(std::vector<std::string> labels);

  /// Returns the index of `label`, appending it if unseen.
  int intern(const std::string& label);
  /// Throws InputError for an unknown label.
  int index_of(const std::string& label) const;
  const std::string& label(int index) const { return labels_.at(static_cast<std::size_t>(index)); }
  int size() const { return static_cast<int>(labels_.size()); }
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  std::vector<std::string> labels_;
};

struct Dataset {
  std::vector<RawPolicyRow> rows;
  std::vector<PolicyRecord> records;
  TypeTable types;
};

/// Variance implied by a symmetric 95% interval of the same width:
/// ((ub - lb) / (2 z_0.975))^2. Throws InputError when ub < lb.
double ci_to_variance(double lb, double ub);

/// Checks the row invariants (ordered intervals containing the estimate,
/// positive program cost, PSD covariance override). Throws InputError.
void validate_row(const RawPolicyRow& row);

PolicyRecord normalize_row(const RawPolicyRow& row, const TypeTable& types);

Dataset parse_dataset(std::istream& in);
Dataset load_dataset(const std::filesystem::path& path);

/// Writes rows in the input schema; sigma_cov is emitted only when some row has it.
void write_dataset(std::ostream& out, std::span<const RawPolicyRow> rows);

/// Number of distinct type indices referenced by the records (max index + 1).
int count_types(std::span<const PolicyRecord> records);

}  // namespace ebpolicy
