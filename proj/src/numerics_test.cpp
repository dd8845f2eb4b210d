#include "cpdalign/errors.hpp"
#include "cpdalign/numerics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

using namespace cpdalign;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
  }
  return m;
}

Matrix random_spd(Eigen::Index d, std::uint64_t seed) {
  const Matrix a = random_matrix(d, d, seed);
  return a * a.transpose() + 0.5 * Matrix::Identity(d, d);
}

// Cyclic Jacobi eigenvalue sweep, written out so the oracle shares no code
// with the library.
std::vector<double> jacobi_eigenvalues(Matrix a) {
  const Eigen::Index n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

}  // namespace

TEST_CASE("svd of the identity") {
  const SvdResult f = svd(Matrix::Identity(3, 3));
  CHECK((f.s - Vector::Ones(3)).norm() < 1e-15);
  CHECK((f.u.cwiseAbs() - Matrix::Identity(3, 3)).norm() < 1e-15);
  CHECK((f.v.cwiseAbs() - Matrix::Identity(3, 3)).norm() < 1e-15);
}

TEST_CASE("svd of a diagonal matrix orders singular values") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 2.0;
  a(1, 1) = 3.0;
  const SvdResult f = svd(a);
  CHECK(f.s(0) == doctest::Approx(3.0));
  CHECK(f.s(1) == doctest::Approx(2.0));
}

TEST_CASE("svd reconstructs and has orthonormal factors") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix a = random_matrix(5, 5, seed);
    const SvdResult f = svd(a);
    CHECK((f.u * f.s.asDiagonal() * f.v.transpose() - a).norm() < 1e-8 * a.norm());
    CHECK((f.u.transpose() * f.u - Matrix::Identity(5, 5)).norm() < 1e-10);
    CHECK((f.v.transpose() * f.v - Matrix::Identity(5, 5)).norm() < 1e-10);
    for (Eigen::Index i = 0; i < 5; ++i) CHECK(f.s(i) >= 0.0);
    for (Eigen::Index i = 1; i < 5; ++i) CHECK(f.s(i) <= f.s(i - 1));
  }
}

TEST_CASE("svd sign convention: largest entry of each u column is positive") {
  const SvdResult f = svd(random_matrix(6, 4, 11));
  for (Eigen::Index j = 0; j < f.u.cols(); ++j) {
    Eigen::Index arg = 0;
    f.u.col(j).cwiseAbs().maxCoeff(&arg);
    CHECK(f.u(arg, j) > 0.0);
  }
}

TEST_CASE("singular values match the square roots of an independent eigenvalue oracle") {
  for (std::uint64_t seed = 20; seed < 25; ++seed) {
    const Matrix a = random_matrix(4, 4, seed);
    const SvdResult f = svd(a);
    const auto ev = jacobi_eigenvalues(a.transpose() * a);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(f.s(static_cast<Eigen::Index>(i)) - std::sqrt(ev[i])) < 1e-8);
  }
}

TEST_CASE("svd rejects non-finite input") {
  Matrix a = Matrix::Identity(2, 2);
  a(0, 1) = std::nan("");
  CHECK_THROWS_AS(svd(a), NumericalError);
}

TEST_CASE("svd is bit-identical across calls") {
  const Matrix a = random_matrix(7, 7, 3);
  const SvdResult f1 = svd(a);
  const SvdResult f2 = svd(a);
  CHECK(f1.u == f2.u);
  CHECK(f1.s == f2.s);
  CHECK(f1.v == f2.v);
}

TEST_CASE("symmetric square roots on analytic cases") {
  CHECK((sym_inv_sqrt(Matrix::Identity(3, 3)) - Matrix::Identity(3, 3)).norm() < 1e-15);
  CHECK((sym_sqrt(Matrix::Identity(3, 3)) - Matrix::Identity(3, 3)).norm() < 1e-15);
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 9.0;
  const Matrix inv = sym_inv_sqrt(d);
  CHECK(inv(0, 0) == doctest::Approx(0.5));
  CHECK(inv(1, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(std::abs(inv(0, 1)) < 1e-15);
  const Matrix root = sym_sqrt(d);
  CHECK(root(0, 0) == doctest::Approx(2.0));
  CHECK(root(1, 1) == doctest::Approx(3.0));
}

TEST_CASE("symmetric square roots on random SPD matrices") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix a = random_spd(6, seed);
    const Matrix inv = sym_inv_sqrt(a);
    const Matrix root = sym_sqrt(a);
    const Matrix id = Matrix::Identity(6, 6);
    CHECK((inv * a * inv - id).norm() < 1e-7);
    CHECK((root * root - a).norm() < 1e-7);
    CHECK((inv * root - id).norm() < 1e-7);
    CHECK(relative_asymmetry(inv) == 0.0);
    CHECK(relative_asymmetry(root) == 0.0);
  }
}

TEST_CASE("asymmetric input is a contract violation") {
  Matrix a = Matrix::Identity(2, 2);
  a(0, 1) = 0.5;
  CHECK_THROWS_AS(sym_inv_sqrt(a), ContractError);
  CHECK_THROWS_AS(sym_sqrt(a), ContractError);
}

TEST_CASE("eigenvalue clamp on a singular matrix") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 1.0;
  CHECK(clamped_eigenvalue_count(a) == 1);
  const Matrix inv = sym_inv_sqrt(a, 1e-4);
  CHECK(inv(1, 1) == doctest::Approx(100.0));
  CHECK(all_finite(sym_inv_sqrt(a)));
}

TEST_CASE("orthogonality defect") {
  CHECK(orthogonality_defect(Matrix::Identity(4, 4)) == 0.0);
  CHECK(orthogonality_defect(2.0 * Matrix::Identity(2, 2)) == doctest::Approx(3.0 * std::sqrt(2.0)));
  Matrix r(2, 2);
  r << std::cos(0.7), -std::sin(0.7), std::sin(0.7), std::cos(0.7);
  CHECK(orthogonality_defect(r) < 1e-12);
}
