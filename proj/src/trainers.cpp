#include "rfl/trainers.hpp"

#include <stdexcept>

namespace rfl {

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::centralized: return "centralized";
    case Scheme::conventional: return "conventional";
    case Scheme::rla: return "rla";
    case Scheme::worst_case: return "worst_case";
  }
  return "unknown";
}

std::string_view to_string(RlaMode mode) {
  return mode == RlaMode::paper_closed_form ? "paper_closed_form" : "exact_hvp";
}

std::string_view to_string(SampleSharing sharing) {
  return sharing == SampleSharing::per_node ? "per_node" : "shared";
}

Scheme parse_scheme(std::string_view name) {
  for (Scheme s : {Scheme::centralized, Scheme::conventional, Scheme::rla, Scheme::worst_case}) {
    if (name == to_string(s)) return s;
  }
  throw ConfigError("unknown scheme '" + std::string(name) + "'");
}

RlaMode parse_rla_mode(std::string_view name) {
  if (name == "paper_closed_form") return RlaMode::paper_closed_form;
  if (name == "exact_hvp") return RlaMode::exact_hvp;
  throw ConfigError("unknown rla_mode '" + std::string(name) + "'");
}

void TrainerConfig::validate() const {
  if (!(step_size > 0.0)) throw ConfigError("trainer.step_size: must be > 0");
  if (rounds < 0) throw ConfigError("trainer.rounds: must be >= 0");
  if (nodes < 1) throw ConfigError("trainer.nodes: must be >= 1");
  if (!(stop_tol >= 0.0)) throw ConfigError("trainer.stop_tol: must be >= 0");
  if (!(ridge >= 0.0)) throw ConfigError("trainer.ridge: must be >= 0");
  if (rla_variance && !(*rla_variance >= 0.0)) throw ConfigError("trainer.rla_variance: must be >= 0");
  if (scheme == Scheme::worst_case) {
    if (!(0.5 < rho_exponent && rho_exponent < gamma_exponent && gamma_exponent < 1.0)) {
      throw ConfigError("trainer.alpha/beta: worst_case requires 0.5 < beta < alpha < 1 (got alpha=" +
                        std::to_string(gamma_exponent) + ", beta=" + std::to_string(rho_exponent) + ")");
    }
    if (!(proximal > 0.0)) throw ConfigError("trainer.lambda: must be > 0");
    if (inner_iters < 0) throw ConfigError("trainer.inner_iters: must be >= 0");
    if (!(inner_tol >= 0.0)) throw ConfigError("trainer.inner_tol: must be >= 0");
  }
}

}  // namespace rfl
