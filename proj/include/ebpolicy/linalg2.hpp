#pragma once

#include <Eigen/Dense>

namespace ebpolicy {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Eigendecomposition of a symmetric 2x2 matrix.
/// values are ascending; column i of vectors pairs with values(i).
struct SymEigen2 {
  Vec2 values;
  Mat2 vectors;
};

bool is_symmetric(const Mat2& m, double tol = 1e-12);

/// Closed-form decomposition. Only the upper triangle is read.
SymEigen2 sym_eigen(const Mat2& m);

Mat2 sym_reassemble(const SymEigen2& e);

/// Symmetric PSD square root; negative eigenvalues (roundoff) are treated as zero.
Mat2 sym_sqrt(const Mat2& m);

/// Inverse of the symmetric square root. Throws NumericError when the
/// smallest eigenvalue is not strictly positive.
Mat2 sym_inv_sqrt(const Mat2& m);

double op_norm(const Mat2& m);

}  // namespace ebpolicy
