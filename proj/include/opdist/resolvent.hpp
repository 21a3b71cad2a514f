#pragma once

#include <cmath>
#include <string>

#include "opdist/core.hpp"

namespace opdist {

// Solve (Delta + I) u = rhs by conjugate-gradient iteration in the weighted
// inner product, where Delta (sparse, self-adjoint and non-negative w.r.t.
// the weights) is passed as the matrix acting on coefficient vectors.
// Relative residual target 1e-10; iteration cap 10 * dim.
inline Vector resolvent_apply(const SparseMatrix& laplacian, const Vector& weights,
                              const Vector& rhs, double tol = 1e-10) {
  Index n = rhs.size();
  if (laplacian.rows() != n || laplacian.cols() != n || weights.size() != n)
    throw std::invalid_argument("resolvent_apply: dimension mismatch");

  double bnorm = wnorm(rhs, weights);
  if (bnorm == 0.0) return Vector::Zero(n);

  auto apply_a = [&](const Vector& v) { return Vector(laplacian * v + v); };

  Vector u = Vector::Zero(n);
  Vector r = rhs;  // residual for u = 0
  Vector p = r;
  double rr = wdot(r, r, weights);
  const Index max_iter = 10 * n;
  for (Index it = 0; it < max_iter; ++it) {
    if (std::sqrt(rr) <= tol * bnorm) return u;
    Vector ap = apply_a(p);
    double pap = wdot(p, ap, weights);
    if (pap <= 0.0)
      throw std::runtime_error("resolvent_apply: operator not positive definite in the "
                               "weighted inner product");
    double alpha = rr / pap;
    u += alpha * p;
    r -= alpha * ap;
    double rr_new = wdot(r, r, weights);
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  if (std::sqrt(rr) <= tol * bnorm) return u;
  throw std::runtime_error("resolvent_apply: no convergence within " +
                           std::to_string(max_iter) + " iterations (relative residual " +
                           std::to_string(std::sqrt(rr) / bnorm) + ")");
}

}  // namespace opdist
