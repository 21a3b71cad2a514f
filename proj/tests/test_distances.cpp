#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "opdist/distances.hpp"
#include "opdist/op_norm.hpp"
#include "test_helpers.hpp"

using namespace opdist;
using Catch::Approx;

namespace {

EigenSequence random_sequence(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(1e-6, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  std::sort(v.begin(), v.end(), std::greater<double>());
  return EigenSequence(std::move(v));
}

}  // namespace

TEST_CASE("d_spec basics: identity, padding, attaining index", "[distances]") {
  EigenSequence a({0.9, 0.5, 0.2});
  REQUIRE(d_spec(a, a).distance == 0.0);

  // Shorter sequence is padded with zeros; sup attained at the padded tail.
  EigenSequence b({0.9, 0.5});
  DSpecResult r = d_spec(a, b);
  REQUIRE(r.padded);
  REQUIRE(r.distance == Approx(0.2));
  REQUIRE(r.index == 3);

  EigenSequence c({1.0, 0.5, 0.2});
  r = d_spec(a, c);
  REQUIRE_FALSE(r.padded);
  REQUIRE(r.distance == Approx(0.1));
  REQUIRE(r.index == 1);
}

TEST_CASE("d_spec on harmonic tails reproduces |1/n - 1/m|", "[distances]") {
  // mu_k = 1/(k n) vs 1/(k m): the gap is largest at k = 1.
  auto harmonic = [](int n, std::size_t len) {
    std::vector<double> v(len);
    for (std::size_t k = 0; k < len; ++k) v[k] = 1.0 / (static_cast<double>(k + 1) * n);
    return EigenSequence(std::move(v));
  };
  DSpecResult r = d_spec(harmonic(2, 50), harmonic(3, 50));
  REQUIRE(r.distance == Approx(1.0 / 2.0 - 1.0 / 3.0).epsilon(1e-14));
  REQUIRE(r.index == 1);
}

TEST_CASE("d_spec is symmetric and satisfies the triangle inequality", "[distances]") {
  auto rng = make_rng(101);
  for (int trial = 0; trial < 30; ++trial) {
    EigenSequence a = random_sequence(rng, 50);
    EigenSequence b = random_sequence(rng, 50);
    EigenSequence c = random_sequence(rng, 50);
    double ab = d_spec(a, b).distance;
    double ba = d_spec(b, a).distance;
    double bc = d_spec(b, c).distance;
    double ac = d_spec(a, c).distance;
    REQUIRE(ab == ba);
    REQUIRE(ac <= ab + bc + 1e-12);
  }
}

TEST_CASE("Hausdorff distance of spectra ignores multiplicities", "[distances]") {
  EigenSequence a({1.0, 0.5, 0.5});
  EigenSequence b({1.0, 0.5});
  REQUIRE(d_hausdorff_spec(a, b) == 0.0);
  REQUIRE(d_spec(a, b).distance > 0.0);  // pseudometric vs metric

  EigenSequence c({0.8, 0.3});
  REQUIRE(d_hausdorff_spec(a, c) == Approx(0.2));
}

TEST_CASE("d_uni on diagonal resolvents", "[distances]") {
  Vector va(2), vb(2);
  va << 0.9, 0.4;
  vb << 0.8, 0.5;
  DUniResult r =
      d_uni_equal_dim(HermOperator(Matrix(va.asDiagonal())), HermOperator(Matrix(vb.asDiagonal())));
  REQUIRE(r.distance == Approx(0.1).margin(1e-12));
}

TEST_CASE("d_uni equals the rotation-grid brute force in 2x2", "[distances]") {
  auto rng = make_rng(202);
  auto op_norm_2x2 = [](const Matrix& s) {
    double m = (s(0, 0) + s(1, 1)) / 2.0;
    double r = std::hypot((s(0, 0) - s(1, 1)) / 2.0, s(0, 1));
    return std::max(std::abs(m + r), std::abs(m - r));
  };
  for (int trial = 0; trial < 8; ++trial) {
    HermOperator a = testhelp::random_resolvent(rng, 2, Vector::Ones(2));
    HermOperator b = testhelp::random_resolvent(rng, 2, Vector::Ones(2));
    double exact = d_uni_equal_dim(a, b).distance;

    double best = std::numeric_limits<double>::infinity();
    int grid = 10000;
    for (int i = 0; i < grid; ++i) {
      double th = 2.0 * M_PI * i / grid;
      Matrix u(2, 2);
      u << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
      best = std::min(best, op_norm_2x2(b.matrix - u * a.matrix * u.transpose()));
      u.col(1) *= -1.0;  // reflection branch of O(2)
      best = std::min(best, op_norm_2x2(b.matrix - u * a.matrix * u.transpose()));
    }
    REQUIRE(exact == Approx(best).margin(1e-3));
  }
}

TEST_CASE("d_uni realizing unitary attains the distance", "[distances]") {
  auto rng = make_rng(303);
  Index n = 8;
  HermOperator a = testhelp::random_resolvent(rng, n);
  HermOperator b = testhelp::random_resolvent(rng, n);
  DUniResult r = d_uni_equal_dim(a, b);

  // U is unitary between the weighted spaces: U* U = I.
  Matrix ustar = weighted_adjoint(r.unitary, a.weights, b.weights);
  REQUIRE((ustar * r.unitary - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10);

  Matrix diff = b.matrix - r.unitary * a.matrix * ustar;
  OpNormOptions opts;
  opts.seed = 17;
  double attained = op_norm_dense(diff, b.weights, b.weights, opts);
  REQUIRE(attained == Approx(r.distance).margin(1e-8));
}

TEST_CASE("chain inequality d_hausdorff <= d_uni <= d_spec", "[distances]") {
  auto rng = make_rng(404);
  for (int trial = 0; trial < 20; ++trial) {
    HermOperator a = testhelp::random_resolvent(rng, 10);
    HermOperator b = testhelp::random_resolvent(rng, 10);
    double spec = d_spec(eig_sym(a).seq, eig_sym(b).seq).distance;
    double uni = d_uni_equal_dim(a, b).distance;
    double haus = d_hausdorff_spec(eig_sym(a).seq, eig_sym(b).seq);
    REQUIRE(haus <= uni + 1e-9);
    REQUIRE(uni <= spec + 1e-9);
  }
}

TEST_CASE("d_uni requires equal dimensions", "[distances]") {
  auto rng = make_rng(505);
  HermOperator a = testhelp::random_resolvent(rng, 3);
  HermOperator b = testhelp::random_resolvent(rng, 4);
  REQUIRE_THROWS_AS(d_uni_equal_dim(a, b), std::invalid_argument);
}
