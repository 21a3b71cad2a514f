#pragma once

#include <functional>
#include <memory>
#include <utility>

#include "opdist/core.hpp"
#include "opdist/herm_operator.hpp"

namespace opdist {

// Black-box linear map between weighted spaces, given by apply and
// adjoint-apply callbacks.  apply maps l2(w_in) -> l2(w_out); apply_adjoint
// must implement the weighted adjoint W_in^{-1} A^T W_out.
struct LinOp {
  Index rows = 0;  // target dimension
  Index cols = 0;  // source dimension
  Vector w_out, w_in;
  std::function<Vector(const Vector&)> apply;
  std::function<Vector(const Vector&)> apply_adjoint;
};

inline LinOp linop_dense(Matrix a, Vector w_in, Vector w_out) {
  auto m = std::make_shared<Matrix>(std::move(a));
  LinOp op;
  op.rows = m->rows();
  op.cols = m->cols();
  op.w_in = std::move(w_in);
  op.w_out = std::move(w_out);
  if (op.w_in.size() != op.cols || op.w_out.size() != op.rows)
    throw std::invalid_argument("linop_dense: weights do not match matrix shape");
  Vector wi = op.w_in, wo = op.w_out;
  op.apply = [m](const Vector& x) { return Vector((*m) * x); };
  op.apply_adjoint = [m, wi, wo](const Vector& y) {
    return Vector(wi.cwiseInverse().asDiagonal() * (m->transpose() * (wo.asDiagonal() * y)));
  };
  return op;
}

inline LinOp linop_sparse(SparseMatrix a, Vector w_in, Vector w_out) {
  auto m = std::make_shared<SparseMatrix>(std::move(a));
  LinOp op;
  op.rows = m->rows();
  op.cols = m->cols();
  op.w_in = std::move(w_in);
  op.w_out = std::move(w_out);
  if (op.w_in.size() != op.cols || op.w_out.size() != op.rows)
    throw std::invalid_argument("linop_sparse: weights do not match matrix shape");
  Vector wi = op.w_in, wo = op.w_out;
  op.apply = [m](const Vector& x) { return Vector((*m) * x); };
  op.apply_adjoint = [m, wi, wo](const Vector& y) {
    return Vector(wi.cwiseInverse().asDiagonal() * (m->transpose() * (wo.asDiagonal() * y)));
  };
  return op;
}

inline LinOp adjoint(const LinOp& a) {
  LinOp op;
  op.rows = a.cols;
  op.cols = a.rows;
  op.w_out = a.w_in;
  op.w_in = a.w_out;
  op.apply = a.apply_adjoint;
  op.apply_adjoint = a.apply;
  return op;
}

// a after b (a.cols must equal b.rows).
inline LinOp compose(const LinOp& a, const LinOp& b) {
  if (a.cols != b.rows) throw std::invalid_argument("compose: inner dimension mismatch");
  LinOp op;
  op.rows = a.rows;
  op.cols = b.cols;
  op.w_out = a.w_out;
  op.w_in = b.w_in;
  op.apply = [a, b](const Vector& x) { return a.apply(b.apply(x)); };
  op.apply_adjoint = [a, b](const Vector& y) { return b.apply_adjoint(a.apply_adjoint(y)); };
  return op;
}

inline LinOp subtract(const LinOp& a, const LinOp& b) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw std::invalid_argument("subtract: shape mismatch");
  LinOp op;
  op.rows = a.rows;
  op.cols = a.cols;
  op.w_out = a.w_out;
  op.w_in = a.w_in;
  op.apply = [a, b](const Vector& x) { return Vector(a.apply(x) - b.apply(x)); };
  op.apply_adjoint = [a, b](const Vector& y) {
    return Vector(a.apply_adjoint(y) - b.apply_adjoint(y));
  };
  return op;
}

// I - a for square a.
inline LinOp identity_minus(const LinOp& a) {
  if (a.rows != a.cols) throw std::invalid_argument("identity_minus: operator not square");
  LinOp op;
  op.rows = a.rows;
  op.cols = a.cols;
  op.w_out = a.w_out;
  op.w_in = a.w_in;
  op.apply = [a](const Vector& x) { return Vector(x - a.apply(x)); };
  op.apply_adjoint = [a](const Vector& y) { return Vector(y - a.apply_adjoint(y)); };
  return op;
}

inline LinOp linop_identity(Vector w) {
  LinOp op;
  op.rows = op.cols = w.size();
  op.w_out = op.w_in = std::move(w);
  op.apply = [](const Vector& x) { return x; };
  op.apply_adjoint = [](const Vector& y) { return y; };
  return op;
}

}  // namespace opdist
