#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "opdist/core.hpp"

namespace opdist {

// Non-increasing sequence of eigenvalues in (0, 1], e.g. of a resolvent
// (Delta + 1)^{-1}.  Strict positivity encodes injectivity of the resolvent;
// values below tail_threshold are regarded as truncated-away tail when two
// sequences of different length are compared.
struct EigenSequence {
  std::vector<double> values;
  double tail_threshold = 0.0;

  EigenSequence() = default;

  explicit EigenSequence(std::vector<double> vals, double tail = 0.0)
      : values(std::move(vals)), tail_threshold(tail) {
    if (values.empty()) throw std::invalid_argument("EigenSequence: empty sequence");
    if (tail_threshold < 0.0)
      throw std::invalid_argument("EigenSequence: negative tail_threshold");
    for (std::size_t k = 0; k < values.size(); ++k) {
      double v = values[k];
      if (!std::isfinite(v) || v <= 0.0 || v > 1.0)
        throw std::invalid_argument("EigenSequence: value " + std::to_string(v) +
                                    " outside (0, 1] at position " + std::to_string(k));
      if (k > 0 && v > values[k - 1] + 1e-12)
        throw std::invalid_argument("EigenSequence: values not non-increasing at position " +
                                    std::to_string(k));
    }
    // Repair sub-1e-12 inversions coming from finite-precision eigensolvers.
    for (std::size_t k = 1; k < values.size(); ++k)
      values[k] = std::min(values[k], values[k - 1]);
  }

  std::size_t size() const { return values.size(); }
};

}  // namespace opdist
