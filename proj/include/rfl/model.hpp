#pragma once

// Linear classifier with the squared hinge loss
//   f(w; x, y) = max(0, 1 - y <w, x>)^2 + (mu / 2) ||w||^2
// and its first and second order kernels. A sample is margin-active iff its
// deficit 1 - y <w, x> is strictly positive.

#include "rfl/types.hpp"

#include <utility>

namespace rfl {

template <typename Scalar>
struct LabeledDataset {
  Matrix<Scalar> features;  // n x d, last column is the constant bias feature
  Vector<Scalar> labels;    // n entries in {-1, +1}

  LabeledDataset() = default;
  LabeledDataset(Matrix<Scalar> x, Vector<Scalar> y) : features(std::move(x)), labels(std::move(y)) {
    require_same_size(features.rows(), labels.size(), "LabeledDataset");
  }

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }
  bool empty() const { return features.rows() == 0; }

  template <typename Other>
  LabeledDataset<Other> cast() const {
    return LabeledDataset<Other>(features.template cast<Other>(), labels.template cast<Other>());
  }
};

using Dataset = LabeledDataset<double>;

namespace detail {

template <typename Scalar>
void check_inputs(const Vector<Scalar>& w, const LabeledDataset<Scalar>& data, const char* what) {
  if (data.empty()) throw std::invalid_argument(std::string(what) + ": empty dataset");
  require_same_size(w.size(), data.dim(), what);
}

// max(0, 1 - y <w, x>) per sample.
template <typename Scalar>
Vector<Scalar> margin_deficits(const Vector<Scalar>& w, const LabeledDataset<Scalar>& data) {
  Vector<Scalar> deficit = Vector<Scalar>::Ones(data.size()) - data.labels.cwiseProduct(data.features * w);
  return deficit.cwiseMax(Scalar(0));
}

}  // namespace detail

template <typename Scalar>
Scalar loss_value(const Vector<Scalar>& w, const LabeledDataset<Scalar>& data, Scalar ridge = Scalar(0)) {
  detail::check_inputs(w, data, "loss_value");
  const Vector<Scalar> deficit = detail::margin_deficits(w, data);
  return deficit.squaredNorm() / static_cast<Scalar>(data.size()) + Scalar(0.5) * ridge * w.squaredNorm();
}

template <typename Scalar>
Vector<Scalar> loss_gradient(const Vector<Scalar>& w, const LabeledDataset<Scalar>& data,
                             Scalar ridge = Scalar(0)) {
  detail::check_inputs(w, data, "loss_gradient");
  const Vector<Scalar> coeff =
      (Scalar(-2) / static_cast<Scalar>(data.size())) * data.labels.cwiseProduct(detail::margin_deficits(w, data));
  Vector<Scalar> grad = data.features.transpose() * coeff;
  if (ridge != Scalar(0)) grad += ridge * w;
  return grad;
}

/// Loss and gradient from a single pass over the margins.
template <typename Scalar>
std::pair<Scalar, Vector<Scalar>> loss_and_gradient(const Vector<Scalar>& w, const LabeledDataset<Scalar>& data,
                                                    Scalar ridge = Scalar(0)) {
  detail::check_inputs(w, data, "loss_and_gradient");
  const Vector<Scalar> deficit = detail::margin_deficits(w, data);
  const Scalar n = static_cast<Scalar>(data.size());
  Scalar value = deficit.squaredNorm() / n + Scalar(0.5) * ridge * w.squaredNorm();
  Vector<Scalar> grad = data.features.transpose() * ((Scalar(-2) / n) * data.labels.cwiseProduct(deficit));
  if (ridge != Scalar(0)) grad += ridge * w;
  return {value, std::move(grad)};
}

/// Generalized Hessian of the squared hinge applied to v: (2/n) sum_active <x_i, v> x_i + mu v.
template <typename Scalar>
Vector<Scalar> hessian_vector_product(const Vector<Scalar>& w, const Vector<Scalar>& v,
                                      const LabeledDataset<Scalar>& data, Scalar ridge = Scalar(0)) {
  detail::check_inputs(w, data, "hessian_vector_product");
  require_same_size(v.size(), w.size(), "hessian_vector_product");
  const Vector<Scalar> deficit = detail::margin_deficits(w, data);
  Vector<Scalar> projected = data.features * v;
  for (Index i = 0; i < projected.size(); ++i) {
    if (!(deficit[i] > Scalar(0))) projected[i] = Scalar(0);
  }
  Vector<Scalar> out = (Scalar(2) / static_cast<Scalar>(data.size())) * (data.features.transpose() * projected);
  if (ridge != Scalar(0)) out += ridge * v;
  return out;
}

/// Fraction of samples with sign(<w, x>) == y. A zero score counts as wrong.
template <typename Scalar>
Scalar evaluate_accuracy(const Vector<Scalar>& w, const LabeledDataset<Scalar>& data) {
  detail::check_inputs(w, data, "evaluate_accuracy");
  const Vector<Scalar> scores = data.features * w;
  Index correct = 0;
  for (Index i = 0; i < scores.size(); ++i) {
    if (scores[i] * data.labels[i] > Scalar(0)) ++correct;
  }
  return static_cast<Scalar>(correct) / static_cast<Scalar>(data.size());
}

}  // namespace rfl
