#pragma once

#include <Eigen/Dense>

#include <optional>

namespace cpdalign {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A D×D matrix acting on row vectors: mapped = embeddings * map.
using LinearMap = Eigen::MatrixXd;

struct SvdResult {
  Matrix u;
  Vector s;  // non-negative, non-increasing
  Matrix v;
};

/// Thin SVD a = u * diag(s) * v^T.
///
/// Column signs are fixed so that the largest-magnitude entry of every column
/// of u is positive (v is flipped alongside), which makes the factors
/// reproducible. Throws NumericalError on non-finite input or output.
SvdResult svd(const Matrix& a);

/// a^{-1/2} for symmetric a, via eigendecomposition. Eigenvalues below `eps`
/// are clamped to `eps`; when eps is not given it defaults to
/// 1e-10 * (largest eigenvalue). Throws ContractError on asymmetric input.
Matrix sym_inv_sqrt(const Matrix& a, std::optional<double> eps = std::nullopt);

/// Positive square root of symmetric a; clamping as in sym_inv_sqrt.
Matrix sym_sqrt(const Matrix& a, std::optional<double> eps = std::nullopt);

/// Number of eigenvalues that the clamp in sym_inv_sqrt/sym_sqrt would raise.
int clamped_eigenvalue_count(const Matrix& a, std::optional<double> eps = std::nullopt);

/// ||a a^T - I||_F.
double orthogonality_defect(const Matrix& a);

/// Max |a(i,j) - a(j,i)|, scaled by max(1, max|a|).
double relative_asymmetry(const Matrix& a);

bool all_finite(const Matrix& a);

}  // namespace cpdalign
