#pragma once

// Named property suites behind `rflsim verify`. Each returns a list of
// checks with the measured value and the threshold it was compared against.

#include "rfl/data.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace rfl {

class UnknownSuite : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Check {
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  std::string relation;  // how measured is compared with threshold, e.g. "<" or ">="
  bool pass = false;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<Check> checks;

  bool passed() const;
};

/// The separable convex problem used by the bound and rate checks.
SyntheticSpec reference_problem();

const std::vector<std::string>& suite_names();
SuiteReport run_suite(std::string_view name);
std::string format_report(const SuiteReport& report);

}  // namespace rfl
