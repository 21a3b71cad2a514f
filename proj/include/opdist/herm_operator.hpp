#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "opdist/core.hpp"

namespace opdist {

// Symmetrize M with respect to diagonal weights w: W^{1/2} M W^{-1/2}.
// Self-adjointness w.r.t. the weighted inner product is equivalent to this
// matrix being symmetric.
inline Matrix symmetrized(const Matrix& m, const Vector& w) {
  Vector ws = w.array().sqrt();
  Vector wsi = ws.cwiseInverse();
  return ws.asDiagonal() * m * wsi.asDiagonal();
}

// Dense operator on a weighted sequence space, self-adjoint w.r.t. the
// weighted inner product <x,y> = sum_i w_i x_i y_i.
struct HermOperator {
  Matrix matrix;
  Vector weights;

  HermOperator() = default;

  // validate_spectrum additionally checks spectrum within (0, 1] up to 1e-9,
  // the resolvent normalization used throughout.
  HermOperator(Matrix m, Vector w = Vector(), bool validate_spectrum = false)
      : matrix(std::move(m)), weights(std::move(w)) {
    if (matrix.rows() != matrix.cols())
      throw std::invalid_argument("HermOperator: matrix must be square");
    if (matrix.rows() == 0) throw std::invalid_argument("HermOperator: empty matrix");
    if (weights.size() == 0) weights = Vector::Ones(matrix.rows());
    if (weights.size() != matrix.rows())
      throw std::invalid_argument("HermOperator: weights size mismatch");
    check_positive_weights(weights);

    Matrix wm = weights.asDiagonal() * matrix;
    double scale = wm.cwiseAbs().maxCoeff();
    double asym = (wm - wm.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * std::max(scale, 1e-300))
      throw std::invalid_argument("HermOperator: not self-adjoint w.r.t. weights (relative "
                                  "asymmetry " + std::to_string(asym / scale) + ")");

    if (validate_spectrum) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(matrix, weights),
                                               Eigen::EigenvaluesOnly);
      if (es.info() != Eigen::Success)
        throw std::runtime_error("HermOperator: eigensolver failed to converge");
      double lo = es.eigenvalues().minCoeff();
      double hi = es.eigenvalues().maxCoeff();
      if (lo <= -1e-9 || hi > 1.0 + 1e-9)
        throw std::invalid_argument("HermOperator: spectrum [" + std::to_string(lo) + ", " +
                                    std::to_string(hi) + "] outside (0, 1]");
    }
  }

  Index dim() const { return matrix.rows(); }
};

// Adjoint of a (generally rectangular) map between weighted spaces:
// A: l2(w_source) -> l2(w_target),  A* = W_s^{-1} A^T W_t.
inline Matrix weighted_adjoint(const Matrix& a, const Vector& w_source, const Vector& w_target) {
  if (a.cols() != w_source.size() || a.rows() != w_target.size())
    throw std::invalid_argument("weighted_adjoint: dimension mismatch");
  check_positive_weights(w_source);
  check_positive_weights(w_target);
  return w_source.cwiseInverse().asDiagonal() * a.transpose() * w_target.asDiagonal();
}

// Identification maps between two weighted spaces.  jprime defaults to the
// weighted adjoint of j when absent.
struct IdentificationPair {
  Matrix j;
  std::optional<Matrix> jprime;
};

}  // namespace opdist
