#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "opdist/core.hpp"
#include "opdist/distances.hpp"
#include "opdist/eig.hpp"
#include "opdist/herm_operator.hpp"
#include "opdist/linop.hpp"
#include "opdist/op_norm.hpp"

namespace opdist {

// Certificate of quasi-unitary equivalence between two resolvent-normalized
// operators.  delta is the max of the seven measured quantities (J-norms
// enter as excess over 1) clamped at 0; the certificate is an upper bound
// witness, not a computed infimum.
struct QUEReport {
  double norm_j = 0.0;
  double norm_jprime = 0.0;
  double norm_jstar_minus_jprime = 0.0;
  double defect_source = 0.0;  // |(I - J'J) R|
  double defect_target = 0.0;  // |(I - JJ') R~|
  double intertwine_fwd = 0.0;  // |J R - R~ J|
  double intertwine_bwd = 0.0;  // |J' R~ - R J'|
  double delta = 0.0;

  static double combine(double nj, double njp, double njs, double ds, double dt, double ifw,
                        double ibw) {
    double d = 0.0;
    d = std::max(d, nj - 1.0);
    d = std::max(d, njp - 1.0);
    d = std::max(d, njs);
    d = std::max(d, ds);
    d = std::max(d, dt);
    d = std::max(d, ifw);
    d = std::max(d, ibw);
    return d;
  }
};

struct QUEOptions {
  std::uint64_t seed = 42;
  double tol = 1e-6;
  int max_iter = 500;
};

// Measure the seven certificate norms for resolvent-normalized operators
// r (source) and rt (target) with identification j: source -> target and
// optional jprime: target -> source (defaults to the weighted adjoint of j,
// in which case the J* - J' discrepancy is identically zero).
inline QUEReport que_certify(const LinOp& r, const LinOp& rt, const LinOp& j,
                             const LinOp* jprime = nullptr, const QUEOptions& opts = {}) {
  if (r.rows != r.cols || rt.rows != rt.cols)
    throw std::invalid_argument("que_certify: operators must be square");
  if (j.cols != r.rows || j.rows != rt.rows)
    throw std::invalid_argument("que_certify: identification shape does not match operators");
  if (jprime && (jprime->rows != r.rows || jprime->cols != rt.rows))
    throw std::invalid_argument("que_certify: jprime shape does not match operators");

  auto norm_opts = [&](std::uint64_t stream) {
    OpNormOptions o;
    o.seed = seed_stream(opts.seed, stream);
    o.tol = opts.tol;
    o.max_iter = opts.max_iter;
    return o;
  };

  LinOp jstar = adjoint(j);
  LinOp jp = jprime ? *jprime : jstar;

  QUEReport rep;
  rep.norm_j = op_norm(j, norm_opts(0));
  if (jprime) {
    rep.norm_jprime = op_norm(jp, norm_opts(1));
    rep.norm_jstar_minus_jprime = op_norm(subtract(jstar, jp), norm_opts(2));
  } else {
    // J' = J* shares the operator norm of J and has zero discrepancy.
    rep.norm_jprime = rep.norm_j;
    rep.norm_jstar_minus_jprime = 0.0;
  }
  rep.defect_source = op_norm(compose(identity_minus(compose(jp, j)), r), norm_opts(3));
  rep.defect_target = op_norm(compose(identity_minus(compose(j, jp)), rt), norm_opts(4));
  rep.intertwine_fwd = op_norm(subtract(compose(j, r), compose(rt, j)), norm_opts(5));
  rep.intertwine_bwd = op_norm(subtract(compose(jp, rt), compose(r, jp)), norm_opts(6));
  rep.delta = QUEReport::combine(rep.norm_j, rep.norm_jprime, rep.norm_jstar_minus_jprime,
                                 rep.defect_source, rep.defect_target, rep.intertwine_fwd,
                                 rep.intertwine_bwd);
  return rep;
}

inline QUEReport que_certify(const HermOperator& r, const HermOperator& rt,
                             const IdentificationPair& pair, const QUEOptions& opts = {}) {
  if (pair.j.cols() != r.dim() || pair.j.rows() != rt.dim())
    throw std::invalid_argument("que_certify: identification shape does not match operators");
  LinOp rop = linop_dense(r.matrix, r.weights, r.weights);
  LinOp rtop = linop_dense(rt.matrix, rt.weights, rt.weights);
  LinOp jop = linop_dense(pair.j, r.weights, rt.weights);
  if (pair.jprime) {
    LinOp jpop = linop_dense(*pair.jprime, rt.weights, r.weights);
    return que_certify(rop, rtop, jop, &jpop, opts);
  }
  return que_certify(rop, rtop, jop, nullptr, opts);
}

// Triangle-type transfer function for certified deltas:
// phi(a, b) = 3(a+b) + (a+b)^2 + 2ab + (a+b)^3 + a^2 b^2.
inline double phi(double a, double b) {
  if (a < 0.0 || b < 0.0) throw std::invalid_argument("phi: negative argument");
  double s = a + b;
  return 3.0 * s + s * s + 2.0 * a * b + s * s * s + a * a * b * b;
}

struct ComposeResult {
  IdentificationPair pair;  // identification from space 1 to space 3
  QUEReport report;
};

// Chain two certified identifications: J13 = J23 J12, J13' = J12' J23',
// then re-certify the composed pair between the outer operators.
inline ComposeResult compose_pairs(const HermOperator& r1, const HermOperator& r2,
                                   const HermOperator& r3, const IdentificationPair& pair12,
                                   const IdentificationPair& pair23,
                                   const QUEOptions& opts = {}) {
  if (pair12.j.cols() != r1.dim() || pair12.j.rows() != r2.dim() ||
      pair23.j.cols() != r2.dim() || pair23.j.rows() != r3.dim())
    throw std::invalid_argument("compose_pairs: identification shapes do not chain");
  Matrix jp12 = pair12.jprime ? *pair12.jprime
                              : weighted_adjoint(pair12.j, r1.weights, r2.weights);
  Matrix jp23 = pair23.jprime ? *pair23.jprime
                              : weighted_adjoint(pair23.j, r2.weights, r3.weights);
  ComposeResult res;
  res.pair.j = pair23.j * pair12.j;
  res.pair.jprime = jp12 * jp23;
  res.report = que_certify(r1, r3, res.pair, opts);
  return res;
}

struct SymmetrizeResult {
  IdentificationPair pair;  // jprime replaced by the weighted adjoint of j
  QUEReport report;
};

// Replace J' by J* and re-certify.  Valid for delta in [0, 1]; the
// re-certified delta is at most 3x the input delta.
inline SymmetrizeResult symmetrize_pair(const HermOperator& r, const HermOperator& rt,
                                        const IdentificationPair& pair, double delta,
                                        const QUEOptions& opts = {}) {
  if (!(delta >= 0.0 && delta <= 1.0))
    throw std::invalid_argument("symmetrize_pair: delta must lie in [0, 1]");
  SymmetrizeResult res;
  res.pair.j = pair.j;
  res.pair.jprime.reset();
  res.report = que_certify(r, rt, res.pair, opts);
  return res;
}

namespace detail {

struct SpectralCalc {
  Vector eigenvalues;  // of the Laplacian, ascending
  Matrix vectors;      // weighted-orthonormal columns
  Vector weights;

  Matrix function_of_laplacian(const std::function<double(double)>& f) const {
    Vector fv(eigenvalues.size());
    for (Index i = 0; i < eigenvalues.size(); ++i) fv[i] = f(eigenvalues[i]);
    // M = V diag(f) V^{-1} with V^{-1} = V^T W.
    return vectors * fv.asDiagonal() * vectors.transpose() * weights.asDiagonal();
  }
};

inline SpectralCalc laplacian_eig(const Matrix& laplacian, const Vector& weights) {
  Vector w = weights.size() ? weights : Vector::Ones(laplacian.rows());
  check_positive_weights(w);
  Matrix s = symmetrized(laplacian, w);
  double scale = std::max(s.cwiseAbs().maxCoeff(), 1e-300);
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("heat_defect: Laplacian not self-adjoint w.r.t. weights");
  s = 0.5 * (s + s.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("heat_defect: eigensolver failed to converge");
  if (es.eigenvalues().minCoeff() < -1e-9 * std::max(1.0, scale))
    throw std::invalid_argument("heat_defect: Laplacian has negative eigenvalues");
  SpectralCalc calc;
  calc.eigenvalues = es.eigenvalues();
  calc.weights = w;
  calc.vectors = w.array().sqrt().inverse().matrix().asDiagonal() * es.eigenvectors();
  return calc;
}

}  // namespace detail

struct HeatDefectResult {
  double norm = 0.0;   // |exp(-t Delta~) - J exp(-t Delta) J'| on the target space
  double bound = 0.0;  // (16/t + 5) delta
  double delta = 0.0;  // certified delta of the resolvent pair
};

// Heat-semigroup transfer error against the certified resolvent bound.
// Exponentials are evaluated by full eigendecomposition of the symmetrized
// matrices (dense, dim <= 2000).
inline HeatDefectResult heat_defect(const Matrix& delta0, const Vector& w0, const Matrix& delta1,
                                    const Vector& w1, const IdentificationPair& pair, double t,
                                    const QUEOptions& opts = {}) {
  if (!(t > 0.0)) throw std::invalid_argument("heat_defect: t must be positive");
  if (delta0.rows() > 2000 || delta1.rows() > 2000)
    throw std::invalid_argument("heat_defect: dimension above the dense-exponential cap 2000");
  auto c0 = detail::laplacian_eig(delta0, w0);
  auto c1 = detail::laplacian_eig(delta1, w1);
  if (pair.j.cols() != delta0.rows() || pair.j.rows() != delta1.rows())
    throw std::invalid_argument("heat_defect: identification shape mismatch");

  Matrix r0 = c0.function_of_laplacian([](double l) { return 1.0 / (1.0 + l); });
  Matrix r1 = c1.function_of_laplacian([](double l) { return 1.0 / (1.0 + l); });
  QUEReport rep = que_certify(HermOperator(r0, c0.weights), HermOperator(r1, c1.weights), pair,
                              opts);

  Matrix e0 = c0.function_of_laplacian([t](double l) { return std::exp(-t * l); });
  Matrix e1 = c1.function_of_laplacian([t](double l) { return std::exp(-t * l); });
  Matrix jp = pair.jprime ? *pair.jprime : weighted_adjoint(pair.j, c0.weights, c1.weights);

  Matrix diff = e1 - pair.j * e0 * jp;
  OpNormOptions nopts;
  nopts.seed = seed_stream(opts.seed, 17);
  nopts.tol = opts.tol;
  nopts.max_iter = opts.max_iter;
  HeatDefectResult res;
  res.norm = op_norm_dense(diff, c1.weights, c1.weights, nopts);
  res.delta = rep.delta;
  res.bound = (16.0 / t + 5.0) * rep.delta;
  return res;
}

struct PairedEigenvalue {
  double mu = 0.0;
  double mu_tilde = 0.0;
  double gap = 0.0;
  bool flagged = false;  // gap > 10 delta, reporting heuristic only
};

// Greedy matching of sorted spectra (optimal for sup cost in one dimension).
// Sequences of different length are padded with zeros.
inline std::vector<PairedEigenvalue> eigenvalue_pairing(const HermOperator& r,
                                                        const HermOperator& rt, double delta) {
  EigenSequence mu = eig_sym(r).seq;
  EigenSequence nu = eig_sym(rt).seq;
  std::size_t n = std::max(mu.size(), nu.size());
  std::vector<PairedEigenvalue> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    out[k].mu = k < mu.size() ? mu.values[k] : 0.0;
    out[k].mu_tilde = k < nu.size() ? nu.values[k] : 0.0;
    out[k].gap = std::abs(out[k].mu - out[k].mu_tilde);
    out[k].flagged = out[k].gap > 10.0 * delta;
  }
  return out;
}

// Empirical transfer error |phi(R~) J - J phi(R)| for a user-supplied scalar
// function of the resolvent; no bound is claimed.
inline double functional_transfer(const HermOperator& r, const HermOperator& rt,
                                  const IdentificationPair& pair,
                                  const std::function<double(double)>& f,
                                  const QUEOptions& opts = {}) {
  EigResult er = eig_sym(r);
  EigResult ert = eig_sym(rt);
  auto apply_f = [&f](const EigResult& e, const Vector& w) {
    Vector fv(e.vectors.cols());
    for (Index i = 0; i < fv.size(); ++i) fv[i] = f(e.seq.values[static_cast<std::size_t>(i)]);
    return Matrix(e.vectors * fv.asDiagonal() * e.vectors.transpose() * w.asDiagonal());
  };
  Matrix fr = apply_f(er, r.weights);
  Matrix frt = apply_f(ert, rt.weights);
  OpNormOptions nopts;
  nopts.seed = seed_stream(opts.seed, 23);
  nopts.tol = opts.tol;
  nopts.max_iter = opts.max_iter;
  return op_norm_dense(frt * pair.j - pair.j * fr, r.weights, rt.weights, nopts);
}

}  // namespace opdist
