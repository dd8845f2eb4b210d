#include "cpdalign/transform.hpp"

#include "cpdalign/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace cpdalign {

namespace {

void check_sets(const Matrix& data, const Matrix& centroids) {
  if (data.rows() == 0 || centroids.rows() == 0) throw ContractError("cpd: empty point set");
  if (data.cols() != centroids.cols()) throw ContractError("cpd: dimension mismatch");
}

// Squared distances (M x N) between moved centroids and data points.
Matrix squared_distances(const Matrix& data, const Matrix& moved) {
  Matrix d = -2.0 * (moved * data.transpose());
  d.colwise() += moved.rowwise().squaredNorm();
  d.rowwise() += data.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

// Fills `p` with posteriors and returns the negative log-likelihood.
double responsibilities(const Matrix& data, const Matrix& centroids, const SimilarityTransform& transform,
                        double sigma2, double w, Matrix& p) {
  check_sets(data, centroids);
  const auto n = static_cast<double>(data.rows());
  const auto m = static_cast<double>(centroids.rows());
  const auto dim = static_cast<double>(data.cols());
  p = squared_distances(data, transform.apply(centroids)) * (-0.5 / sigma2);

  // Gaussian component log-weight and the uniform component relative to it.
  const double log_gauss = std::log(1.0 - w) - std::log(m) - 0.5 * dim * std::log(2.0 * std::numbers::pi * sigma2);
  const bool has_outlier = w > 0.0;
  const double log_c = has_outlier
                           ? 0.5 * dim * std::log(2.0 * std::numbers::pi * sigma2) + std::log(w / (1.0 - w)) +
                                 std::log(m / n)
                           : -std::numeric_limits<double>::infinity();

  double nll = 0.0;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    auto col = p.col(j);
    const double top = std::max(col.maxCoeff(), log_c);
    // Shifted exponents are clamped so nothing subnormal is produced; tiny
    // posteriors are flushed to zero afterwards (subnormals make the M-step
    // products crawl).
    col = (col.array() - top).max(-700.0).exp().matrix();
    const double sum = col.sum() + (has_outlier ? std::exp(log_c - top) : 0.0);
    const double lse = top + std::log(sum);
    col /= sum;
    col = (col.array() < 1e-300).select(0.0, col.array()).matrix();
    nll -= log_gauss + lse;
  }
  return nll;
}

}  // namespace

void CpdConfig::validate() const {
  if (!(outlier_weight >= 0.0 && outlier_weight < 1.0)) throw ConfigError("cpd: outlier weight must lie in [0, 1)");
  if (max_iter < 1) throw ConfigError("cpd: max_iter must be >= 1");
  if (!(tol > 0.0)) throw ConfigError("cpd: tol must be > 0");
  if (point_limit < 1) throw ConfigError("cpd: point_limit must be >= 1");
}

CpdState cpd_init(const Matrix& data, const Matrix& centroids, const CpdConfig& config) {
  check_sets(data, centroids);
  config.validate();
  const auto n = static_cast<double>(data.rows());
  const auto m = static_cast<double>(centroids.rows());
  // sum_{n,m} ||x_n - y_m||^2 = M sum ||x||^2 + N sum ||y||^2 - 2 (sum x) . (sum y)
  const double total = m * data.squaredNorm() + n * centroids.squaredNorm() -
                       2.0 * data.colwise().sum().dot(centroids.colwise().sum());
  CpdState state;
  state.sigma2 = std::max(total / (static_cast<double>(data.cols()) * n * m), kSigma2Floor);
  state.transform = SimilarityTransform::identity(data.cols());
  if (config.mode == TransformMode::affine) state.transform.mode = TransformMode::affine;
  state.trace.push_back(
      responsibilities(data, centroids, state.transform, state.sigma2, config.outlier_weight, state.p));
  return state;
}

double cpd_objective(const Matrix& data, const Matrix& centroids, const SimilarityTransform& transform,
                     double sigma2, double outlier_weight) {
  Matrix p;
  return responsibilities(data, centroids, transform, sigma2, outlier_weight, p);
}

Matrix e_step(const CpdState& state, const Matrix& data, const Matrix& centroids, const CpdConfig& config) {
  if (!(state.sigma2 > 0.0)) throw ContractError("e_step: sigma2 must be > 0");
  Matrix p;
  responsibilities(data, centroids, state.transform, state.sigma2, config.outlier_weight, p);
  return p;
}

MStepResult m_step(const Matrix& p, const Matrix& data, const Matrix& centroids, const CpdConfig& config) {
  check_sets(data, centroids);
  if (p.rows() != centroids.rows() || p.cols() != data.rows()) throw ContractError("m_step: posterior shape mismatch");
  const double np = p.sum();
  // The closed forms are invariant to the overall posterior scale, so only
  // mass lost to underflow is fatal.
  if (!(np > 1e-200)) {
    throw StageError("cpd: posterior mass vanished onto the outlier component; lower the outlier weight");
  }
  const Vector p1 = p.rowwise().sum();
  const Vector pt1 = p.colwise().sum().transpose();
  const Vector mu_x = data.transpose() * pt1 / np;
  const Vector mu_y = centroids.transpose() * p1 / np;
  const Matrix xh = data.rowwise() - mu_x.transpose();
  const Matrix yh = centroids.rowwise() - mu_y.transpose();
  const Matrix a = xh.transpose() * (p.transpose() * yh);
  const double x_moment = (xh.rowwise().squaredNorm().transpose() * pt1)(0);
  const auto dim = static_cast<double>(data.cols());

  MStepResult out;
  out.transform.mode = config.mode;
  double explained = 0.0;
  if (config.mode == TransformMode::similarity) {
    const SvdResult f = svd(a);
    Vector c = Vector::Ones(a.cols());
    c(c.size() - 1) = (f.u * f.v.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    out.transform.r = f.u * c.asDiagonal() * f.v.transpose();
    const double y_moment = (yh.rowwise().squaredNorm().transpose() * p1)(0);
    if (!(y_moment > 0.0)) throw StageError("cpd: centroids collapse to a point; scale is undefined");
    explained = (a.transpose() * out.transform.r).trace();
    out.transform.s = explained / y_moment;
    out.transform.t = mu_x - out.transform.s * out.transform.r * mu_y;
    explained *= out.transform.s;
  } else {
    const Matrix y_cov = yh.transpose() * p1.asDiagonal() * yh;
    Eigen::FullPivLU<Matrix> lu(y_cov);
    if (!lu.isInvertible()) throw StageError("cpd: weighted centroid covariance is singular");
    out.transform.r = a * lu.inverse();
    out.transform.s = 1.0;
    out.transform.t = mu_x - out.transform.r * mu_y;
    explained = (a * out.transform.r.transpose()).trace();
  }
  out.sigma2 = std::max((x_moment - explained) / (np * dim), kSigma2Floor);
  if (!out.transform.r.allFinite() || !out.transform.t.allFinite() || !std::isfinite(out.transform.s)) {
    throw NumericalError("cpd: non-finite transform", std::numeric_limits<double>::infinity());
  }
  return out;
}

CpdState run_cpd(const Matrix& data, const Matrix& centroids, const CpdConfig& config) {
  config.validate();
  check_sets(data, centroids);
  const Eigen::Index nd = std::min<Eigen::Index>(data.rows(), static_cast<Eigen::Index>(config.point_limit));
  const Eigen::Index nc = std::min<Eigen::Index>(centroids.rows(), static_cast<Eigen::Index>(config.point_limit));
  const Matrix x = data.topRows(nd);
  const Matrix y = centroids.topRows(nc);

  CpdState state = cpd_init(x, y, config);
  for (std::size_t it = 0; it < config.max_iter; ++it) {
    const MStepResult fit = m_step(state.p, x, y, config);
    state.transform = fit.transform;
    state.sigma2 = fit.sigma2;
    state.trace.push_back(responsibilities(x, y, state.transform, state.sigma2, config.outlier_weight, state.p));
    ++state.iterations;
    const double delta = state.trace[state.trace.size() - 2] - state.trace.back();
    if (std::abs(delta) < config.tol) break;
  }
  return state;
}

TransformStageResult apply_transform_stage(const Matrix& x, const Matrix& y, const CpdConfig& config) {
  if (x.cols() != y.cols()) throw ContractError("transform stage: dimension mismatch");
  TransformStageResult out;
  out.forward = run_cpd(y, x, config);
  out.forward.p.resize(0, 0);
  out.x = out.forward.transform.apply(x);
  out.backward = run_cpd(x, y, config);
  out.backward.p.resize(0, 0);
  out.y = out.backward.transform.apply(y);
  return out;
}

}  // namespace cpdalign
