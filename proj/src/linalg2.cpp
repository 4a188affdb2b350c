#include "ebpolicy/linalg2.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ebpolicy/errors.hpp"

namespace ebpolicy {

bool is_symmetric(const Mat2& m, double tol) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return std::abs(m(0, 1) - m(1, 0)) <= tol * scale;
}

SymEigen2 sym_eigen(const Mat2& m) {
  const double a = m(0, 0);
  const double b = m(0, 1);
  const double c = m(1, 1);
  const double mid = 0.5 * (a + c);
  const double rad = std::hypot(0.5 * (a - c), b);
  // Rotation angle of the leading eigenvector.
  const double theta = 0.5 * std::atan2(2.0 * b, a - c);
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);

  SymEigen2 e;
  e.values << mid - rad, mid + rad;
  e.vectors << -sn, cs,
                cs, sn;
  return e;
}

Mat2 sym_reassemble(const SymEigen2& e) {
  Mat2 out = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
  const double off = 0.5 * (out(0, 1) + out(1, 0));
  out(0, 1) = off;
  out(1, 0) = off;
  return out;
}

Mat2 sym_sqrt(const Mat2& m) {
  SymEigen2 e = sym_eigen(m);
  e.values = e.values.cwiseMax(0.0).cwiseSqrt();
  return sym_reassemble(e);
}

Mat2 sym_inv_sqrt(const Mat2& m) {
  SymEigen2 e = sym_eigen(m);
  if (!(e.values(0) > 0.0)) {
    std::ostringstream msg;
    msg << "matrix is singular (smallest eigenvalue " << e.values(0) << ")";
    throw NumericError(msg.str());
  }
  e.values = e.values.cwiseSqrt().cwiseInverse();
  return sym_reassemble(e);
}

double op_norm(const Mat2& m) {
  // Largest singular value.
  const Mat2 mtm = m.transpose() * m;
  return std::sqrt(std::max(0.0, sym_eigen(mtm).values(1)));
}

}  // namespace ebpolicy
