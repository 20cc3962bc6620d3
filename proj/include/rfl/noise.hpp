#pragma once

// Aggregation (uplink/center) and broadcast (downlink) corruption of model
// vectors under the expectation-based (Gaussian) and worst-case (norm ball)
// uncertainty models.

#include "rfl/rng.hpp"
#include "rfl/types.hpp"

#include <cmath>
#include <functional>
#include <string_view>
#include <vector>

namespace rfl {

enum class NoiseKind { expectation, worst_case };

/// How center and node radii combine under the worst-case model.
enum class CombineRule { paper_sum, triangle };

/// combined: one summed perturbation per node per round on the downlink.
/// two_stage: center noise on the aggregate, then raw broadcast noise per node.
enum class ChannelMode { combined, two_stage };

/// Where the center-side perturbation is applied in two_stage mode.
enum class UplinkMode { at_center, per_link };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::expectation;
  double center = 0.0;              // sigma^2: variance (expectation) or squared radius (worst case)
  std::vector<double> node;         // sigma_j^2 per node
  CombineRule combine = CombineRule::paper_sum;
  ChannelMode channel = ChannelMode::combined;
  UplinkMode uplink = UplinkMode::at_center;

  static NoiseSpec none(std::size_t nodes) {
    NoiseSpec s;
    s.node.assign(nodes, 0.0);
    return s;
  }

  static NoiseSpec uniform(NoiseKind kind, double center, double per_node, std::size_t nodes) {
    NoiseSpec s;
    s.kind = kind;
    s.center = center;
    s.node.assign(nodes, per_node);
    return s;
  }

  std::size_t nodes() const { return node.size(); }

  bool silent() const {
    if (center != 0.0) return false;
    for (double v : node) {
      if (v != 0.0) return false;
    }
    return true;
  }

  void validate() const {
    if (!(center >= 0.0) || !std::isfinite(center)) throw ConfigError("noise: center variance/radius must be >= 0");
    for (double v : node) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("noise: node variance/radius must be >= 0");
    }
  }
};

std::string_view to_string(NoiseKind kind);
std::string_view to_string(CombineRule rule);
std::string_view to_string(ChannelMode mode);
std::string_view to_string(UplinkMode mode);

/// sigma_e^2 = sigma^2 + sigma_j^2 (expectation); sigma_w^2 = sigma^2 + sigma_j^2
/// or (sigma + sigma_j)^2 under the triangle rule (worst case).
inline double combined_noise_param(const NoiseSpec& spec, std::size_t node) {
  if (node >= spec.node.size()) throw std::out_of_range("combined_noise_param: unknown node " + std::to_string(node));
  const double nv = spec.node[node];
  if (spec.kind == NoiseKind::worst_case && spec.combine == CombineRule::triangle) {
    const double r = std::sqrt(spec.center) + std::sqrt(nv);
    return r * r;
  }
  return spec.center + nv;
}

template <typename Scalar = double>
Vector<Scalar> sample_gaussian_noise(Index dim, double variance, RngStream& stream) {
  if (!(variance >= 0.0)) throw std::invalid_argument("sample_gaussian_noise: negative variance");
  if (variance == 0.0) return Vector<Scalar>::Zero(dim);
  std::normal_distribution<double> normal(0.0, std::sqrt(variance));
  Vector<Scalar> out(dim);
  for (Index k = 0; k < dim; ++k) out[k] = static_cast<Scalar>(normal(stream.engine()));
  return out;
}

/// Uniform direction on the sphere scaled to squared norm `radius_sq`.
template <typename Scalar = double>
Vector<Scalar> sample_boundary_noise(Index dim, double radius_sq, RngStream& stream) {
  if (!(radius_sq >= 0.0)) throw std::invalid_argument("sample_boundary_noise: negative squared radius");
  if (radius_sq == 0.0) return Vector<Scalar>::Zero(dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector<double> dir(dim);
  double norm = 0.0;
  do {
    for (Index k = 0; k < dim; ++k) dir[k] = normal(stream.engine());
    norm = dir.norm();
  } while (!(norm > 0.0));
  return (dir * (std::sqrt(radius_sq) / norm)).template cast<Scalar>();
}

/// Gaussian for the expectation model, boundary sample for the worst case.
template <typename Scalar = double>
Vector<Scalar> sample_perturbation(NoiseKind kind, Index dim, double param, RngStream& stream) {
  return kind == NoiseKind::expectation ? sample_gaussian_noise<Scalar>(dim, param, stream)
                                        : sample_boundary_noise<Scalar>(dim, param, stream);
}

/// Downlink noise parameter for one node under the configured channel mode.
inline double downlink_param(const NoiseSpec& spec, std::size_t node) {
  if (spec.channel == ChannelMode::combined) return combined_noise_param(spec, node);
  if (node >= spec.node.size()) throw std::out_of_range("downlink_param: unknown node " + std::to_string(node));
  return spec.node[node];
}

/// Model as received by `node`: global + perturbation.
template <typename Scalar>
Vector<Scalar> corrupt_downlink(const Vector<Scalar>& global, const NoiseSpec& spec, std::size_t node,
                                RngStream& stream) {
  const double param = downlink_param(spec, node);
  if (param == 0.0) return global;
  return global + sample_perturbation<Scalar>(spec.kind, global.size(), param, stream);
}

using StreamFactory = std::function<RngStream(std::size_t node)>;

/// Local models as received at the center. Identity unless two_stage/per_link,
/// in which case every link adds its own center-variance perturbation.
template <typename Scalar>
std::vector<Vector<Scalar>> corrupt_uplink(const std::vector<Vector<Scalar>>& locals, const NoiseSpec& spec,
                                           const StreamFactory& streams) {
  if (locals.size() != spec.nodes()) {
    throw DimensionError("corrupt_uplink: " + std::to_string(locals.size()) + " local models for " +
                         std::to_string(spec.nodes()) + " nodes");
  }
  if (spec.channel != ChannelMode::two_stage || spec.uplink != UplinkMode::per_link || spec.center == 0.0) {
    return locals;
  }
  std::vector<Vector<Scalar>> out;
  out.reserve(locals.size());
  for (std::size_t j = 0; j < locals.size(); ++j) {
    RngStream stream = streams(j);
    out.push_back(locals[j] + sample_perturbation<Scalar>(spec.kind, locals[j].size(), spec.center, stream));
  }
  return out;
}

/// Center-side perturbation of the aggregate (two_stage/at_center only).
template <typename Scalar>
Vector<Scalar> apply_center_noise(const Vector<Scalar>& aggregate, const NoiseSpec& spec, RngStream& stream) {
  if (spec.channel != ChannelMode::two_stage || spec.uplink != UplinkMode::at_center || spec.center == 0.0) {
    return aggregate;
  }
  return aggregate + sample_perturbation<Scalar>(spec.kind, aggregate.size(), spec.center, stream);
}

}  // namespace rfl
