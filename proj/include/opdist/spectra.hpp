#pragma once

#include <Eigen/SparseCholesky>
#include <cmath>
#include <stdexcept>

#include "opdist/core.hpp"

namespace opdist {

struct SpectraOptions {
  std::uint64_t seed = 42;
  double rel_tol = 1e-11;
  int max_iter = 500;
};

struct SmallestEigResult {
  Vector values;   // ascending
  Matrix vectors;  // weighted-orthonormal columns
};

// Smallest eigenpairs of the pencil K x = lambda W x (K symmetric positive
// semidefinite, W diagonal positive) by shift-invert subspace iteration on
// (K + W)^{-1} W with a sparse LDLT factorization.  Deterministic for a
// fixed seed; a guard block of extra vectors handles eigenvalue clusters.
inline SmallestEigResult smallest_eigenpairs(const SparseMatrix& stiffness, const Vector& weights,
                                             int k, const SpectraOptions& opts = {}) {
  const Index n = stiffness.rows();
  if (stiffness.cols() != n || n == 0)
    throw std::invalid_argument("smallest_eigenpairs: stiffness must be square and non-empty");
  if (weights.size() != n)
    throw std::invalid_argument("smallest_eigenpairs: weight size mismatch");
  check_positive_weights(weights);
  if (k < 1 || k > n) throw std::invalid_argument("smallest_eigenpairs: k out of range");

  SparseMatrix shifted = stiffness;
  {
    SparseMatrix diag(n, n);
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) trips.emplace_back(i, i, weights[i]);
    diag.setFromTriplets(trips.begin(), trips.end());
    shifted += diag;
  }
  Eigen::SimplicialLDLT<SparseMatrix> solver(shifted);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("smallest_eigenpairs: factorization of K + W failed");

  const Index p = std::min<Index>(n, k + 5);
  auto rng = make_rng(seed_stream(opts.seed, 91));
  Matrix x(n, p);
  for (Index j = 0; j < p; ++j) x.col(j) = random_vector(n, rng);

  auto w_orthonormalize = [&](Matrix& m) {
    for (Index j = 0; j < m.cols(); ++j) {
      for (int pass = 0; pass < 2; ++pass) {
        for (Index i = 0; i < j; ++i) {
          Vector mi = m.col(i);
          Vector mj = m.col(j);
          m.col(j) -= wdot(mi, mj, weights) * m.col(i);
        }
      }
      Vector mj = m.col(j);
      double nrm = std::sqrt(wdot(mj, mj, weights));
      if (!(nrm > 1e-150))
        throw std::runtime_error("smallest_eigenpairs: subspace became rank deficient");
      m.col(j) /= nrm;
    }
  };
  w_orthonormalize(x);

  Vector ritz_prev = Vector::Constant(p, std::numeric_limits<double>::quiet_NaN());
  Vector ritz(p);
  for (int it = 0; it < opts.max_iter; ++it) {
    Matrix y = solver.solve(weights.asDiagonal() * x);
    if (solver.info() != Eigen::Success)
      throw std::runtime_error("smallest_eigenpairs: linear solve failed");
    w_orthonormalize(y);
    Matrix kp = y.transpose() * (stiffness * y);
    kp = (0.5 * (kp + kp.transpose())).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(kp);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("smallest_eigenpairs: projected eigensolver failed");
    ritz = es.eigenvalues();
    x = y * es.eigenvectors();

    bool converged = true;
    for (int i = 0; i < k; ++i) {
      double change = std::abs(ritz[i] - ritz_prev[i]);
      if (!(change <= opts.rel_tol * std::max(1.0, std::abs(ritz[i])))) {
        converged = false;
        break;
      }
    }
    if (converged) {
      SmallestEigResult res;
      res.values = ritz.head(k);
      res.vectors = x.leftCols(k);
      return res;
    }
    ritz_prev = ritz;
  }
  throw std::runtime_error("smallest_eigenpairs: no convergence within iteration budget");
}

inline Vector smallest_eigenvalues(const SparseMatrix& stiffness, const Vector& weights, int k,
                                   const SpectraOptions& opts = {}) {
  return smallest_eigenpairs(stiffness, weights, k, opts).values;
}

}  // namespace opdist
