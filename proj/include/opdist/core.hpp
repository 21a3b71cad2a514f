#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <random>
#include <stdexcept>

namespace opdist {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Contract violations (bad arguments, failed validation) throw
// std::invalid_argument; solver breakdowns throw std::runtime_error.

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64{seed}; }

// Distinct sub-seeds for the independent randomized stages of one computation.
inline std::uint64_t seed_stream(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 step keeps streams decorrelated even for adjacent inputs.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Vector random_vector(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = gauss(rng);
  return v;
}

// Inner product and norm of the weighted sequence space l2(w).
inline double wdot(const Vector& x, const Vector& y, const Vector& w) {
  return (x.array() * w.array() * y.array()).sum();
}

inline double wnorm(const Vector& x, const Vector& w) {
  double s = wdot(x, x, w);
  return s <= 0.0 ? 0.0 : std::sqrt(s);
}

inline void check_positive_weights(const Vector& w) {
  for (Index i = 0; i < w.size(); ++i)
    if (!(w[i] > 0.0)) throw std::invalid_argument("weights must be strictly positive");
}

}  // namespace opdist
