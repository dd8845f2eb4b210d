#include "cpdalign/correspond.hpp"

#include "cpdalign/errors.hpp"

#include <algorithm>
#include <set>
#include <string>
#include <utility>

namespace cpdalign {

namespace {

std::pair<Matrix, Matrix> dictionary_rows(const Matrix& x, const Matrix& y, const SeedDictionary& dict) {
  if (dict.empty()) throw StageError("correspond: empty seed dictionary");
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& e : dict.pairs) {
    if (e.source >= static_cast<std::size_t>(x.rows()) || e.target >= static_cast<std::size_t>(y.rows())) {
      throw ContractError("correspond: dictionary index out of range");
    }
    if (seen.emplace(e.source, e.target).second) pairs.emplace_back(e.source, e.target);
  }
  Matrix xd(static_cast<Eigen::Index>(pairs.size()), x.cols());
  Matrix yd(static_cast<Eigen::Index>(pairs.size()), y.cols());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    xd.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(pairs[i].first));
    yd.row(static_cast<Eigen::Index>(i)) = y.row(static_cast<Eigen::Index>(pairs[i].second));
  }
  return {std::move(xd), std::move(yd)};
}

}  // namespace

WhiteningResult whiten(const Matrix& x) {
  if (x.rows() == 0 || x.cols() == 0) throw ContractError("whiten: empty matrix");
  const Matrix gram = x.transpose() * x;
  WhiteningResult out;
  out.whitening = sym_inv_sqrt(gram);
  out.clamped = clamped_eigenvalue_count(gram);
  out.whitened = x * out.whitening;
  const Matrix check = out.whitened.transpose() * out.whitened - Matrix::Identity(x.cols(), x.cols());
  out.defect = check.cwiseAbs().maxCoeff();
  return out;
}

ReweightResult symmetric_reweight(const Matrix& xw, const Matrix& yw, const SeedDictionary& dict) {
  if (xw.cols() != yw.cols()) throw ContractError("symmetric_reweight: dimension mismatch");
  const auto [xd, yd] = dictionary_rows(xw, yw, dict);
  const SvdResult f = svd(xd.transpose() * yd);
  const Vector root = f.s.cwiseSqrt();
  ReweightResult out;
  out.x_out = xw * f.u * root.asDiagonal();
  out.y_out = yw * f.v * root.asDiagonal();
  out.u = f.u;
  out.s = f.s;
  out.v = f.v;
  return out;
}

Matrix dewhiten(const Matrix& x_out, const Matrix& u, const Matrix& x_orig) {
  if (x_out.cols() != u.rows() || u.cols() != x_orig.cols()) throw ContractError("dewhiten: shape mismatch");
  return x_out * (u.transpose() * sym_sqrt(x_orig.transpose() * x_orig) * u);
}

LinearMap procrustes_solve(const Matrix& x, const Matrix& y, const SeedDictionary& dict) {
  if (x.cols() != y.cols()) throw ContractError("procrustes_solve: dimension mismatch");
  const auto [xd, yd] = dictionary_rows(x, y, dict);
  const SvdResult f = svd(xd.transpose() * yd);
  return f.u * f.v.transpose();
}

std::string_view to_string(RefineMode mode) { return mode == RefineMode::symmetric ? "symmetric" : "procrustes"; }

RefineMode parse_refine_mode(std::string_view text) {
  if (text == "symmetric") return RefineMode::symmetric;
  if (text == "procrustes") return RefineMode::procrustes;
  throw ConfigError("refine mode must be 'symmetric' or 'procrustes', got '" + std::string(text) + "'");
}

CorrespondResult correspond(const Matrix& x, const Matrix& y, const SeedDictionary& dict, RefineMode mode) {
  CorrespondResult out;
  if (mode == RefineMode::procrustes) {
    out.x = x * procrustes_solve(x, y, dict);
    out.y = y;
    return out;
  }
  const WhiteningResult wx = whiten(x);
  const WhiteningResult wy = whiten(y);
  const ReweightResult rw = symmetric_reweight(wx.whitened, wy.whitened, dict);
  out.x = dewhiten(rw.x_out, rw.u, x);
  out.y = dewhiten(rw.y_out, rw.v, y);
  out.whitening_defect = std::max(wx.defect, wy.defect);
  return out;
}

}  // namespace cpdalign
