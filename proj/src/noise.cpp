#include "rfl/noise.hpp"

namespace rfl {

std::string_view to_string(NoiseKind kind) {
  return kind == NoiseKind::expectation ? "expectation" : "worst_case";
}

std::string_view to_string(CombineRule rule) { return rule == CombineRule::paper_sum ? "paper_sum" : "triangle"; }

std::string_view to_string(ChannelMode mode) { return mode == ChannelMode::combined ? "combined" : "two_stage"; }

std::string_view to_string(UplinkMode mode) { return mode == UplinkMode::at_center ? "at_center" : "per_link"; }

}  // namespace rfl
