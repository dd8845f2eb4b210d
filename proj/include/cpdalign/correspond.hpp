#pragma once

#include "cpdalign/metrics.hpp"
#include "cpdalign/numerics.hpp"

#include <string_view>

namespace cpdalign {

struct WhiteningResult {
  Matrix whitened;     // X W
  Matrix whitening;    // W = (X^T X)^{-1/2}
  double defect = 0.0; // ||(XW)^T (XW) - I||_inf
  int clamped = 0;     // eigenvalues raised to the clamp floor
};

WhiteningResult whiten(const Matrix& x);

struct ReweightResult {
  Matrix x_out;
  Matrix y_out;
  Matrix u;
  Vector s;
  Matrix v;
};

/// U S V^T = (X_w^d)^T Y_w^d over the deduplicated dictionary rows, then
/// X_o = X_w U S^{1/2} and Y_o = Y_w V S^{1/2}.
ReweightResult symmetric_reweight(const Matrix& xw, const Matrix& yw, const SeedDictionary& dict);

/// X_o U^T (X^T X)^{1/2} U.
Matrix dewhiten(const Matrix& x_out, const Matrix& u, const Matrix& x_orig);

/// Orthogonal W maximizing tr(W^T (X^d)^T Y^d), i.e. U V^T.
LinearMap procrustes_solve(const Matrix& x, const Matrix& y, const SeedDictionary& dict);

enum class RefineMode { symmetric, procrustes };
std::string_view to_string(RefineMode mode);
RefineMode parse_refine_mode(std::string_view text);

struct CorrespondResult {
  Matrix x;  // X_C
  Matrix y;  // Y_C
  double whitening_defect = 0.0;
};

/// Full refinement on one dictionary. Symmetric mode whitens, re-weights and
/// de-whitens both sides; Procrustes mode maps X by the orthogonal solution
/// and leaves Y as is.
CorrespondResult correspond(const Matrix& x, const Matrix& y, const SeedDictionary& dict, RefineMode mode);

}  // namespace cpdalign
