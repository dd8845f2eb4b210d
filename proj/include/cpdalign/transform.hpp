#pragma once

#include "cpdalign/geometry.hpp"
#include "cpdalign/numerics.hpp"

#include <cstddef>
#include <vector>

namespace cpdalign {

struct CpdConfig {
  double outlier_weight = 0.1;
  std::size_t max_iter = 150;
  double tol = 1e-5;
  TransformMode mode = TransformMode::similarity;
  std::size_t point_limit = 5000;

  void validate() const;
};

inline constexpr double kSigma2Floor = 1e-10;

struct CpdState {
  Matrix p;  // M x N posteriors (centroid m, data point n)
  double sigma2 = 0.0;
  SimilarityTransform transform;
  std::vector<double> trace;  // objective after init and after every EM cycle
  std::size_t iterations = 0;
};

/// Identity transform and sigma2 = sum ||x_n - y_m||^2 / (D N M), floored.
/// The trace holds the objective at that starting point.
CpdState cpd_init(const Matrix& data, const Matrix& centroids, const CpdConfig& config);

/// Negative log-likelihood of the data under the uniform + Gaussian mixture
/// whose centroids are moved by `transform`.
double cpd_objective(const Matrix& data, const Matrix& centroids, const SimilarityTransform& transform,
                     double sigma2, double outlier_weight);

/// Posterior P[m, n] of centroid m for data point n; the outlier share is
/// 1 - sum_m P[m, n].
Matrix e_step(const CpdState& state, const Matrix& data, const Matrix& centroids, const CpdConfig& config);

struct MStepResult {
  SimilarityTransform transform;
  double sigma2 = 0.0;
};

/// Closed-form maximizer of the expected complete-data log-likelihood for
/// fixed posteriors.
MStepResult m_step(const Matrix& p, const Matrix& data, const Matrix& centroids, const CpdConfig& config);

/// EM registration of `centroids` onto `data`, using the first point_limit
/// rows of each.
CpdState run_cpd(const Matrix& data, const Matrix& centroids, const CpdConfig& config);

struct TransformStageResult {
  Matrix x;  // X_T
  Matrix y;  // Y_T
  CpdState forward;   // fitted on centroids X_C, data Y_C
  CpdState backward;  // fitted on centroids Y_C, data X_C
};

/// Runs registration in both directions from (X_C, Y_C) and applies each
/// fitted transform to every row. Posterior matrices are not kept.
TransformStageResult apply_transform_stage(const Matrix& x, const Matrix& y, const CpdConfig& config);

}  // namespace cpdalign
