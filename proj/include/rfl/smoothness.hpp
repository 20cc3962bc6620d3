#pragma once

#include "rfl/model.hpp"
#include "rfl/rng.hpp"

#include <cmath>

namespace rfl {

/// Smoothness bound of the squared hinge loss, 2 * lambda_max(X^T X / n) + mu,
/// by power iteration until the eigen-residual falls below `rel_tol` * lambda.
template <typename Scalar>
Scalar estimate_smoothness(const LabeledDataset<Scalar>& data, Scalar ridge = Scalar(0), double rel_tol = 1e-6,
                           int max_iters = 10000) {
  if (data.empty()) throw std::invalid_argument("estimate_smoothness: empty dataset");
  const Index d = data.dim();
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(data.size());

  Vector<Scalar> v(d);
  RngStream stream(0x5eed, 0, 0, Purpose::probe);
  std::uniform_real_distribution<double> uniform(0.5, 1.5);
  for (Index k = 0; k < d; ++k) v[k] = static_cast<Scalar>(uniform(stream.engine()));
  v.normalize();

  Vector<Scalar> av(d);
  for (int it = 0; it < max_iters; ++it) {
    av.noalias() = data.features.transpose() * (data.features * v);
    av *= inv_n;
    const Scalar lambda = v.dot(av);
    if (!(lambda > Scalar(0))) return ridge;  // X v == 0 for every v reached: zero curvature
    const Scalar residual = (av - lambda * v).norm();
    if (residual <= static_cast<Scalar>(rel_tol) * lambda) return Scalar(2) * lambda + ridge;
    v = av / av.norm();
  }
  throw NumericalError("estimate_smoothness: power iteration did not converge");
}

}  // namespace rfl
