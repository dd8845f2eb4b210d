#pragma once

#include "cpdalign/numerics.hpp"

#include <string_view>

namespace cpdalign {

enum class TransformMode { similarity, affine };

std::string_view to_string(TransformMode mode);
TransformMode parse_transform_mode(std::string_view text);

// Spatial transform y -> s * R y + t acting on column vectors. In affine mode
// `r` holds an arbitrary invertible matrix and s stays 1.
struct SimilarityTransform {
  TransformMode mode = TransformMode::similarity;
  Matrix r;
  double s = 1.0;
  Vector t;

  static SimilarityTransform identity(Eigen::Index dim);

  Eigen::Index dim() const { return r.rows(); }

  // Row-wise application: (R rows^T * s + t)^T.
  Matrix apply(const Matrix& rows) const;

  // The linear part as a map on row vectors (s * R^T).
  LinearMap row_map() const { return s * r.transpose(); }

  SimilarityTransform inverse() const;
};

}  // namespace cpdalign
