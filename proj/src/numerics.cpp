#include "cpdalign/numerics.hpp"

#include "cpdalign/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace cpdalign {

namespace {

constexpr double kSymmetryTolerance = 1e-10;

double condition_estimate(const Vector& singular_values) {
  if (singular_values.size() == 0) return 0.0;
  const double smallest = singular_values.minCoeff();
  const double largest = singular_values.maxCoeff();
  if (smallest <= 0.0) return std::numeric_limits<double>::infinity();
  return largest / smallest;
}

Eigen::SelfAdjointEigenSolver<Matrix> checked_eigen(const Matrix& a, const char* who) {
  if (a.rows() != a.cols()) {
    throw ContractError(std::string(who) + ": matrix is not square");
  }
  if (!all_finite(a)) {
    throw NumericalError(std::string(who) + ": non-finite input", std::numeric_limits<double>::quiet_NaN());
  }
  if (relative_asymmetry(a) > kSymmetryTolerance) {
    std::ostringstream msg;
    msg << who << ": matrix is not symmetric (asymmetry " << relative_asymmetry(a) << ")";
    throw ContractError(msg.str());
  }
  Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) {
    throw NumericalError(std::string(who) + ": eigendecomposition did not converge",
                         std::numeric_limits<double>::infinity());
  }
  return eig;
}

double resolve_eps(const Vector& eigenvalues, std::optional<double> eps) {
  if (eps) {
    if (!(*eps > 0.0)) throw ContractError("eigenvalue clamp eps must be positive");
    return *eps;
  }
  const double top = eigenvalues.size() ? eigenvalues.maxCoeff() : 0.0;
  return top > 0.0 ? 1e-10 * top : std::numeric_limits<double>::min();
}

template <typename Fn>
Matrix spectral_function(const Matrix& a, std::optional<double> eps, const char* who, Fn fn) {
  auto eig = checked_eigen(a, who);
  Vector lambda = eig.eigenvalues();
  const double floor = resolve_eps(lambda, eps);
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    lambda(i) = fn(std::max(lambda(i), floor));
  }
  const Matrix& vecs = eig.eigenvectors();
  Matrix out = vecs * lambda.asDiagonal() * vecs.transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace

bool all_finite(const Matrix& a) { return a.allFinite(); }

double relative_asymmetry(const Matrix& a) {
  if (a.rows() != a.cols()) return std::numeric_limits<double>::infinity();
  if (a.size() == 0) return 0.0;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
}

SvdResult svd(const Matrix& a) {
  if (a.size() == 0) throw ContractError("svd: empty matrix");
  if (!all_finite(a)) {
    throw NumericalError("svd: non-finite input", std::numeric_limits<double>::quiet_NaN());
  }
  Eigen::JacobiSVD<Matrix> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdResult out{solver.matrixU(), solver.singularValues(), solver.matrixV()};
  if (solver.info() != Eigen::Success || !out.u.allFinite() || !out.v.allFinite() || !out.s.allFinite()) {
    throw NumericalError("svd: did not converge", condition_estimate(out.s));
  }
  for (Eigen::Index j = 0; j < out.u.cols(); ++j) {
    Eigen::Index at = 0;
    out.u.col(j).cwiseAbs().maxCoeff(&at);
    if (out.u(at, j) < 0.0) {
      out.u.col(j) *= -1.0;
      out.v.col(j) *= -1.0;
    }
  }
  return out;
}

Matrix sym_inv_sqrt(const Matrix& a, std::optional<double> eps) {
  return spectral_function(a, eps, "sym_inv_sqrt", [](double l) { return 1.0 / std::sqrt(l); });
}

Matrix sym_sqrt(const Matrix& a, std::optional<double> eps) {
  return spectral_function(a, eps, "sym_sqrt", [](double l) { return std::sqrt(l); });
}

int clamped_eigenvalue_count(const Matrix& a, std::optional<double> eps) {
  auto eig = checked_eigen(a, "clamped_eigenvalue_count");
  const Vector& lambda = eig.eigenvalues();
  const double floor = resolve_eps(lambda, eps);
  return static_cast<int>((lambda.array() < floor).count());
}

double orthogonality_defect(const Matrix& a) {
  if (a.rows() != a.cols()) throw ContractError("orthogonality_defect: matrix is not square");
  return (a * a.transpose() - Matrix::Identity(a.rows(), a.cols())).norm();
}

}  // namespace cpdalign
