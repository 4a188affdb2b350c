#include "ebpolicy/ingest.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>
#include <unordered_set>

#include "ebpolicy/csv.hpp"
#include "ebpolicy/errors.hpp"

namespace ebpolicy {

namespace {

constexpr std::array<std::string_view, 9> kColumns = {
    "policy_id", "type", "wtp", "wtp_lb", "wtp_ub", "cost", "cost_lb", "cost_ub", "program_cost"};
constexpr std::string_view kCovColumn = "sigma_cov";

std::string row_context(const RawPolicyRow& row) {
  return "policy '" + row.policy_id + "'";
}

}  // namespace

TypeTable::TypeTable(std::vector<std::string> labels) : labels_(std::move(labels)) {}

int TypeTable::intern(const std::string& label) {
  const auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it != labels_.end()) return static_cast<int>(it - labels_.begin());
  labels_.push_back(label);
  return size() - 1;
}

int TypeTable::index_of(const std::string& label) const {
  const auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) throw InputError("unknown policy type '" + label + "'");
  return static_cast<int>(it - labels_.begin());
}

double ci_to_variance(double lb, double ub) {
  if (!(ub >= lb)) {
    std::ostringstream msg;
    msg << "invalid interval: upper bound " << ub << " below lower bound " << lb;
    throw InputError(msg.str());
  }
  const double sd = (ub - lb) / (2.0 * kZ975);
  return sd * sd;
}

void validate_row(const RawPolicyRow& row) {
  if (row.policy_id.empty()) throw InputError("empty policy_id");
  if (!(row.program_cost > 0.0)) {
    throw InputError(row_context(row) + ": program_cost must be positive");
  }
  if (!(row.wtp_lb <= row.wtp && row.wtp <= row.wtp_ub)) {
    throw InputError(row_context(row) + ": need wtp_lb <= wtp <= wtp_ub");
  }
  if (!(row.cost_lb <= row.cost && row.cost <= row.cost_ub)) {
    throw InputError(row_context(row) + ": need cost_lb <= cost <= cost_ub");
  }
  if (row.sigma_cov) {
    const double vw = ci_to_variance(row.wtp_lb, row.wtp_ub);
    const double vg = ci_to_variance(row.cost_lb, row.cost_ub);
    const double c = *row.sigma_cov;
    if (c * c > vw * vg * (1.0 + 1e-12)) {
      throw InputError(row_context(row) + ": sigma_cov makes the covariance indefinite");
    }
  }
}

PolicyRecord normalize_row(const RawPolicyRow& row, const TypeTable& types) {
  validate_row(row);
  PolicyRecord rec;
  rec.policy_id = row.policy_id;
  rec.type = types.index_of(row.type_label);
  const double scale = row.program_cost;
  const double scale2 = scale * scale;
  rec.y << row.wtp / scale, row.cost / scale;
  const double cov = row.sigma_cov.value_or(0.0) / scale2;
  rec.sigma << ci_to_variance(row.wtp_lb, row.wtp_ub) / scale2, cov,
               cov, ci_to_variance(row.cost_lb, row.cost_ub) / scale2;
  return rec;
}

Dataset parse_dataset(std::istream& in) {
  const auto rows = csv::read(in);
  if (rows.empty()) throw InputError("dataset is empty (no header row)");

  const auto& header = rows.front();
  bool has_cov = false;
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    if (c >= header.fields.size()) {
      throw InputError("header: missing column '" + std::string(kColumns[c]) + "'");
    }
    if (header.fields[c] != kColumns[c]) {
      throw InputError("header: column " + std::to_string(c + 1) + " must be '" +
                       std::string(kColumns[c]) + "', found '" + header.fields[c] + "'");
    }
  }
  if (header.fields.size() == kColumns.size() + 1) {
    if (header.fields.back() != kCovColumn) {
      throw InputError("header: unexpected trailing column '" + header.fields.back() + "'");
    }
    has_cov = true;
  } else if (header.fields.size() > kColumns.size() + 1) {
    throw InputError("header: too many columns");
  }
  const std::size_t width = header.fields.size();

  Dataset ds;
  std::unordered_set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& fields = rows[r].fields;
    const std::size_t line = rows[r].line;
    if (fields.size() != width) {
      throw InputError("line " + std::to_string(line) + ": expected " + std::to_string(width) +
                       " columns, found " + std::to_string(fields.size()));
    }
    RawPolicyRow row;
    row.policy_id = fields[0];
    row.type_label = fields[1];
    if (row.policy_id.empty()) {
      throw InputError("line " + std::to_string(line) + ", column 'policy_id': empty");
    }
    if (row.type_label.empty()) {
      throw InputError("line " + std::to_string(line) + ", column 'type': empty");
    }
    if (!seen.insert(row.policy_id).second) {
      throw InputError("line " + std::to_string(line) + ", column 'policy_id': duplicate '" +
                       row.policy_id + "'");
    }
    double* numeric[] = {&row.wtp,  &row.wtp_lb,  &row.wtp_ub,  &row.cost,
                         &row.cost_lb, &row.cost_ub, &row.program_cost};
    for (std::size_t c = 0; c < 7; ++c) {
      *numeric[c] = csv::parse_real(fields[c + 2], line, kColumns[c + 2]);
    }
    if (has_cov && !fields.back().empty()) {
      row.sigma_cov = csv::parse_real(fields.back(), line, kCovColumn);
    }
    try {
      validate_row(row);
    } catch (const InputError& e) {
      throw InputError("line " + std::to_string(line) + ": " + e.what());
    }
    ds.types.intern(row.type_label);
    ds.rows.push_back(std::move(row));
  }
  ds.records.reserve(ds.rows.size());
  for (const auto& row : ds.rows) ds.records.push_back(normalize_row(row, ds.types));
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset '" + path.string() + "'");
  return parse_dataset(in);
}

void write_dataset(std::ostream& out, std::span<const RawPolicyRow> rows) {
  const bool has_cov =
      std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.sigma_cov.has_value(); });
  std::vector<std::string> header(kColumns.begin(), kColumns.end());
  if (has_cov) header.emplace_back(kCovColumn);
  csv::write_row(out, header);
  for (const auto& r : rows) {
    std::vector<std::string> f = {r.policy_id,
                                  r.type_label,
                                  csv::format_real(r.wtp),
                                  csv::format_real(r.wtp_lb),
                                  csv::format_real(r.wtp_ub),
                                  csv::format_real(r.cost),
                                  csv::format_real(r.cost_lb),
                                  csv::format_real(r.cost_ub),
                                  csv::format_real(r.program_cost)};
    if (has_cov) f.push_back(r.sigma_cov ? csv::format_real(*r.sigma_cov) : std::string());
    csv::write_row(out, f);
  }
}

int count_types(std::span<const PolicyRecord> records) {
  int t = 0;
  for (const auto& r : records) t = std::max(t, r.type + 1);
  return t;
}

}  // namespace ebpolicy
