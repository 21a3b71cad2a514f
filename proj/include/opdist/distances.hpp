#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "opdist/core.hpp"
#include "opdist/eig.hpp"
#include "opdist/eigen_sequence.hpp"
#include "opdist/herm_operator.hpp"

namespace opdist {

struct DSpecResult {
  double distance = 0.0;
  std::size_t index = 0;  // 1-based position attaining the supremum
  bool padded = false;    // lengths differed; shorter sequence zero-padded
  double tail_threshold = 0.0;
};

// Supremum metric on eigenvalue sequences.  Sequences of different length are
// compared by padding the shorter one with zeros; the padding value 0 is a
// truncation artifact, reported via the padded flag together with the larger
// tail_threshold of the two inputs.
inline DSpecResult d_spec(const EigenSequence& mu, const EigenSequence& nu) {
  DSpecResult res;
  res.padded = mu.size() != nu.size();
  res.tail_threshold = std::max(mu.tail_threshold, nu.tail_threshold);
  std::size_t n = std::max(mu.size(), nu.size());
  res.index = 1;
  for (std::size_t k = 0; k < n; ++k) {
    double a = k < mu.size() ? mu.values[k] : 0.0;
    double b = k < nu.size() ? nu.values[k] : 0.0;
    double d = std::abs(a - b);
    if (d > res.distance) {
      res.distance = d;
      res.index = k + 1;
    }
  }
  return res;
}

// Hausdorff distance between the two spectra viewed as sets; blind to
// multiplicities, hence only a pseudometric on sequences.
inline double d_hausdorff_spec(const EigenSequence& mu, const EigenSequence& nu) {
  auto directed = [](const std::vector<double>& from, const std::vector<double>& to) {
    double worst = 0.0;
    for (double a : from) {
      double best = std::numeric_limits<double>::infinity();
      for (double b : to) best = std::min(best, std::abs(a - b));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(mu.values, nu.values), directed(nu.values, mu.values));
}

struct DUniResult {
  double distance = 0.0;
  std::size_t index = 0;  // eigenvalue position attaining the distance
  Matrix unitary;         // realizing weighted-unitary map, source -> target
};

// Unitary-orbit distance inf_U |b - U a U*| for equal finite dimension.
// The infimum is attained by the eigenbasis-matching unitary and equals the
// supremum eigenvalue distance (matching sorted spectra is optimal: any
// conjugation preserves the spectrum, and eigenvalue perturbation by a
// self-adjoint difference is bounded by its norm).
inline DUniResult d_uni_equal_dim(const HermOperator& a, const HermOperator& b) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("d_uni_equal_dim: operators have different dimensions; "
                                "route through d_spec on padded sequences instead");
  EigResult ea = eig_sym(a);
  EigResult eb = eig_sym(b);
  DSpecResult ds = d_spec(ea.seq, eb.seq);
  DUniResult res;
  res.distance = ds.distance;
  res.index = ds.index;
  // U maps the k-th eigenvector of a onto the k-th eigenvector of b:
  // U = V_b * V_a^{-1} with V_a^{-1} = V_a^T W_a (weighted orthonormality).
  res.unitary = eb.vectors * (ea.vectors.transpose() * a.weights.asDiagonal());
  return res;
}

}  // namespace opdist
