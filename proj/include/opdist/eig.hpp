#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <string>
#include <vector>

#include "opdist/core.hpp"
#include "opdist/eigen_sequence.hpp"
#include "opdist/herm_operator.hpp"

namespace opdist {

struct EigResult {
  EigenSequence seq;  // eigenvalues, non-increasing
  Matrix vectors;     // columns, orthonormal w.r.t. the weighted inner product
};

// Full eigendecomposition w.r.t. the weighted inner product, via the
// symmetrized problem W^{1/2} M W^{-1/2}.  Eigenvalues are clamped into
// (0, 1] within a 1e-9 validation tolerance; anything farther out is a
// contract violation of the resolvent normalization.
inline EigResult eig_sym(const HermOperator& op) {
  Index n = op.dim();
  Vector ws = op.weights.array().sqrt();
  Matrix s = symmetrized(op.matrix, op.weights);
  s = 0.5 * (s + s.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("eig_sym: iterative tridiagonal QL failed to converge within its "
                             "30n iteration budget (n = " + std::to_string(n) + ")");

  // Eigen returns ascending order; the sequence convention is non-increasing.
  std::vector<double> vals(static_cast<std::size_t>(n));
  Matrix vecs(n, n);
  for (Index k = 0; k < n; ++k) {
    double lam = es.eigenvalues()[n - 1 - k];
    if (lam > 1.0) {
      if (lam > 1.0 + 1e-9)
        throw std::invalid_argument("eig_sym: eigenvalue " + std::to_string(lam) +
                                    " above 1 beyond tolerance");
      lam = 1.0;
    }
    if (lam <= 0.0) {
      if (lam <= -1e-9)
        throw std::invalid_argument("eig_sym: eigenvalue " + std::to_string(lam) +
                                    " not positive");
      lam = 1e-300;  // keep strict positivity after round-off
    }
    vals[static_cast<std::size_t>(k)] = lam;
    vecs.col(k) = es.eigenvectors().col(n - 1 - k).cwiseQuotient(ws);
  }
  return EigResult{EigenSequence(std::move(vals)), std::move(vecs)};
}

// Eigenvalues of a weighted self-adjoint matrix without the resolvent range
// restriction, descending.  Used for Laplacians and other auxiliary spectra.
inline Vector sym_eigenvalues_desc(const Matrix& m, const Vector& w) {
  Matrix s = symmetrized(m, w);
  s = 0.5 * (s + s.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("sym_eigenvalues_desc: eigensolver failed to converge");
  return es.eigenvalues().reverse();
}

}  // namespace opdist
