#pragma once

#include <string>

#include "ensplan/nets.hpp"

// Oracle and property checks shared by the unit suites and the acceptance
// runner. Each returns ok plus a one-line detail.
namespace ensplan::testing {

struct Check {
  bool ok = true;
  std::string detail;
};

Check factual_closed_form();
Check gradient_check(Arch arch, int draws);
Check penalty_conservation(int passes);
Check vote_scores_sum(int trials);
Check batch_pattern_half_ratio();
Check no_reevaluation();
Check full_run_determinism();
Check generator_solvability(int boards);
Check chain_optimal(int seeds);

}  // namespace ensplan::testing
