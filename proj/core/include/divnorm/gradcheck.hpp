#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace divnorm {

// Relative error with a unit floor: |a - b| / max(1, |a|, |b|). The floor
// keeps finite-difference noise on true-zero gradients (e.g. the backbone
// bias, which whitening's mean subtraction cancels exactly) from reading
// as huge relative errors.
double gradcheck_rel_err(double analytic, double numeric);

struct GradCheckResult {
  struct Group {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
  };
  std::vector<Group> groups;
  double max_layer_rel_err = 0.0;
  double max_end_to_end_rel_err = 0.0;
  bool pass = false;
};

// Finite-difference verification of every layer backward (tolerance 1e-6)
// and of the end-to-end dual-branch parameter gradients with the
// re-weighting scores held constant (n=8, d=6, C=4, tolerance 1e-5,
// end_to_end_seeds random repetitions).
GradCheckResult run_gradient_checks(std::uint64_t seed, int end_to_end_seeds = 20);

void print_gradcheck(const GradCheckResult& result, std::ostream& os);

}  // namespace divnorm
