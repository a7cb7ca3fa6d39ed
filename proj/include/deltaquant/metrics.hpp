#pragma once

// Delta objectives. Every metric compares the post-training delta
// (w_post - w_base) with its quantized counterpart (Q(w_post) - w_base) over
// the flattened layer, accumulating in double. The free templates accept any
// pair of equally sized Eigen array expressions.

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "deltaquant/tensor.hpp"

namespace dq {

struct LayerPair {
  std::string name;
  Tensor base;
  Tensor post;

  /// Throws ShapeError on shape mismatch and InvalidValue on non-finite data.
  void validate() const;
};

struct DeltaPair {
  Shape shape;
  Eigen::ArrayXd post;   // w_post - w_base
  Eigen::ArrayXd quant;  // w_quant - w_base

  std::int64_t size() const { return post.size(); }
};

DeltaPair compute_delta(const LayerPair& pair, const Tensor& w_quant);

/// Deltas of raw weight arrays of any scalar type, subtracted in double.
template <typename Base, typename Post, typename Quant>
DeltaPair compute_delta(const Eigen::ArrayBase<Base>& w_base, const Eigen::ArrayBase<Post>& w_post,
                        const Eigen::ArrayBase<Quant>& w_quant) {
  if (w_base.size() != w_post.size() || w_post.size() != w_quant.size()) {
    throw ShapeError("weight arrays differ in size");
  }
  const Eigen::ArrayXd base = w_base.template cast<double>();
  return DeltaPair{Shape{static_cast<std::int64_t>(base.size())},
                   w_post.template cast<double>() - base, w_quant.template cast<double>() - base};
}

enum class MetricKind { NegMse, SignRate, CosSim };

std::string to_string(MetricKind kind);
/// Accepts mse, sign, cos (and the long forms neg-mse, sign-rate, cosine).
MetricKind parse_metric(const std::string& text);

namespace detail {

template <typename A, typename B>
void require_same_size(const Eigen::ArrayBase<A>& a, const Eigen::ArrayBase<B>& b) {
  if (a.size() != b.size()) {
    throw ShapeError("delta sizes differ: " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
}

}  // namespace detail

/// Mean squared difference of the deltas; equal to the mean squared
/// difference of the weights because the base cancels.
template <typename A, typename B>
double mse(const Eigen::ArrayBase<A>& d_post, const Eigen::ArrayBase<B>& d_quant) {
  detail::require_same_size(d_post, d_quant);
  if (d_post.size() == 0) return 0.0;
  const auto diff = d_quant.template cast<double>() - d_post.template cast<double>();
  return diff.square().sum() / static_cast<double>(d_post.size());
}

/// Fraction of positions where sign(d_post) == sign(d_quant), sign(0) = 0.
template <typename A, typename B>
double sign_rate(const Eigen::ArrayBase<A>& d_post, const Eigen::ArrayBase<B>& d_quant) {
  detail::require_same_size(d_post, d_quant);
  if (d_post.size() == 0) return 1.0;
  const auto matches =
      (d_post.template cast<double>().sign() == d_quant.template cast<double>().sign()).count();
  return static_cast<double>(matches) / static_cast<double>(d_post.size());
}

/// Cosine of the angle between the flattened deltas. Both zero gives 1,
/// exactly one zero gives 0.
template <typename A, typename B>
double cos_sim(const Eigen::ArrayBase<A>& d_post, const Eigen::ArrayBase<B>& d_quant) {
  detail::require_same_size(d_post, d_quant);
  const auto p = d_post.template cast<double>();
  const auto q = d_quant.template cast<double>();
  const double pp = p.square().sum();
  const double qq = q.square().sum();
  if (pp == 0.0 && qq == 0.0) return 1.0;
  if (pp == 0.0 || qq == 0.0) return 0.0;
  const double c = (p * q).sum() / (std::sqrt(pp) * std::sqrt(qq));
  return std::clamp(c, -1.0, 1.0);
}

/// l2 norm of d_quant - d_post, i.e. of w_quant - w_post.
template <typename A, typename B>
double delta_l2(const Eigen::ArrayBase<A>& d_post, const Eigen::ArrayBase<B>& d_quant) {
  detail::require_same_size(d_post, d_quant);
  const auto diff = d_quant.template cast<double>() - d_post.template cast<double>();
  return std::sqrt(diff.square().sum());
}

inline double mse(const DeltaPair& d) { return mse(d.post, d.quant); }
inline double sign_rate(const DeltaPair& d) { return sign_rate(d.post, d.quant); }
inline double cos_sim(const DeltaPair& d) { return cos_sim(d.post, d.quant); }
inline double delta_l2(const DeltaPair& d) { return delta_l2(d.post, d.quant); }

/// Objective value, higher is better: -mse, sign_rate or cos_sim.
double evaluate(MetricKind metric, const DeltaPair& d);

}  // namespace dq
