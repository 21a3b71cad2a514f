#pragma once

#include <cmath>
#include <string>

#include "opdist/core.hpp"
#include "opdist/linop.hpp"

namespace opdist {

struct OpNormOptions {
  std::uint64_t seed = 42;
  double tol = 1e-6;  // relative accuracy target for the norm estimate
  int max_iter = 500;
  bool check_adjoint = true;
};

// Consistency of the callbacks: <A x, y>_out must equal <x, A* y>_in on
// random vectors.  Tolerance carries an absolute floor so that near-zero maps
// evaluated through iterative solvers do not trip the check.
inline void check_adjoint_consistency(const LinOp& a, std::mt19937_64& rng) {
  for (int trial = 0; trial < 3; ++trial) {
    Vector x = random_vector(a.cols, rng);
    Vector y = random_vector(a.rows, rng);
    double lhs = wdot(a.apply(x), y, a.w_out);
    double rhs = wdot(x, a.apply_adjoint(y), a.w_in);
    double scale = std::abs(lhs) + std::abs(rhs);
    double floor = 1e-9 * wnorm(x, a.w_in) * wnorm(y, a.w_out);
    if (std::abs(lhs - rhs) > 1e-8 * scale + floor)
      throw std::invalid_argument("op_norm: apply/apply_adjoint are not adjoint to each other "
                                  "(<Ax,y> = " + std::to_string(lhs) +
                                  ", <x,A*y> = " + std::to_string(rhs) + ")");
  }
}

// Weighted operator norm estimate by power iteration on A*A.  Stops at
// relative accuracy ~tol (residual criterion) or after max_iter iterations,
// whichever comes first.  Ties between dominant singular values are resolved
// by whichever invariant direction the iteration settles into; only the norm
// value is contractual.
inline double op_norm(const LinOp& a, const OpNormOptions& opts = {}) {
  if (a.rows == 0 || a.cols == 0) throw std::invalid_argument("op_norm: empty operator");
  auto rng = make_rng(opts.seed);
  if (opts.check_adjoint) check_adjoint_consistency(a, rng);

  Vector x = random_vector(a.cols, rng);
  double xn = wnorm(x, a.w_in);
  if (xn == 0.0) x = Vector::Ones(a.cols), xn = wnorm(x, a.w_in);
  x /= xn;

  double lambda = 0.0;
  for (int it = 0; it < opts.max_iter; ++it) {
    Vector y = a.apply(x);
    Vector z = a.apply_adjoint(y);  // z = A*A x
    double zn = wnorm(z, a.w_in);
    lambda = wdot(x, z, a.w_in);    // Rayleigh quotient, since |x|_in = 1
    if (zn == 0.0 || lambda <= 0.0) return 0.0;
    // Eigenvalues of A*A at the level of double rounding noise: the norm is
    // ~1e-14 or less, not worth (or capable of) iterative polishing.
    if (lambda < 1e-28) return std::sqrt(lambda);
    // |A*A x - lambda x| <= tol * lambda pins the dominant eigenvalue of A*A
    // to relative accuracy tol, i.e. the norm to ~tol/2.
    double resid = wnorm(z - lambda * x, a.w_in);
    x = z / zn;
    if (resid <= opts.tol * lambda) break;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

inline double op_norm_dense(const Matrix& a, const Vector& w_in, const Vector& w_out,
                            const OpNormOptions& opts = {}) {
  return op_norm(linop_dense(a, w_in, w_out), opts);
}

}  // namespace opdist
