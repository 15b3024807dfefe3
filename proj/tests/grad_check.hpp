#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "numval/tensor.hpp"

// Central finite-difference oracle for backward implementations. Always runs
// at 64-bit: h = 1e-5 puts the truncation error near 1e-10 for O(1) values,
// far below the tolerances asserted in the tests.

namespace gradcheck {

// Relative error with a floored denominator, so entries whose gradients are
// tiny on both sides compare in absolute terms instead of blowing up.
inline double rel_err(double a, double b, double floor_ = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor_});
}

struct Result {
  double max_rel_err = 0.0;
  long entries = 0;
};

// `loss` is called once with a tape to build the graph analytically, then
// repeatedly with nullptr while leaf entries are perturbed. Leaves must be
// captured by the callable by pointer so perturbations are visible.
template <class LossFn>
Result check(std::vector<numval::Tensor<double>*> leaves, LossFn&& loss, double h = 1e-5,
             double floor_ = 1e-3) {
  numval::Tape<double> tape;
  for (auto* l : leaves) tape.watch(*l);
  numval::Tensor<double> root = loss(&tape);
  tape.backward(root);

  std::vector<std::vector<double>> analytic;
  for (auto* l : leaves) {
    const auto* g = tape.grad(*l);
    analytic.push_back(g ? *g : std::vector<double>(l->size(), 0.0));
  }

  Result res;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto* l = leaves[li];
    for (long i = 0; i < l->size(); ++i) {
      double keep = l->at(i);
      l->at(i) = keep + h;
      double up = loss(static_cast<numval::Tape<double>*>(nullptr)).item();
      l->at(i) = keep - h;
      double dn = loss(static_cast<numval::Tape<double>*>(nullptr)).item();
      l->at(i) = keep;
      double fd = (up - dn) / (2.0 * h);
      res.max_rel_err = std::max(res.max_rel_err, rel_err(analytic[li][i], fd, floor_));
      ++res.entries;
    }
  }
  return res;
}

template <class Real>
void fill_uniform(numval::Tensor<Real>& t, numval::Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (long i = 0; i < t.size(); ++i) t.at(i) = static_cast<Real>(lo + (hi - lo) * rng.uniform());
}

}  // namespace gradcheck
