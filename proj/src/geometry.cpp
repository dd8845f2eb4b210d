#include "cpdalign/geometry.hpp"

#include "cpdalign/errors.hpp"

#include <string>

namespace cpdalign {

std::string_view to_string(TransformMode mode) {
  return mode == TransformMode::similarity ? "similarity" : "affine";
}

TransformMode parse_transform_mode(std::string_view text) {
  if (text == "similarity") return TransformMode::similarity;
  if (text == "affine") return TransformMode::affine;
  throw ConfigError("unknown transform mode '" + std::string(text) + "'");
}

SimilarityTransform SimilarityTransform::identity(Eigen::Index dim) {
  return SimilarityTransform{TransformMode::similarity, Matrix::Identity(dim, dim), 1.0, Vector::Zero(dim)};
}

Matrix SimilarityTransform::apply(const Matrix& rows) const {
  if (rows.cols() != r.cols()) throw ContractError("SimilarityTransform::apply: dimension mismatch");
  Matrix out = s * (rows * r.transpose());
  out.rowwise() += t.transpose();
  return out;
}

SimilarityTransform SimilarityTransform::inverse() const {
  SimilarityTransform inv;
  inv.mode = mode;
  if (mode == TransformMode::similarity) {
    inv.r = r.transpose();
    inv.s = 1.0 / s;
  } else {
    inv.r = r.inverse();
    inv.s = 1.0 / s;
  }
  inv.t = -(inv.s * (inv.r * t));
  return inv;
}

}  // namespace cpdalign
