#ifndef REPCOUNT_GRADSUITE_HPP
#define REPCOUNT_GRADSUITE_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace repcount {

// One named finite-difference check: max relative error across 10 seeded
// random configurations vs. its tolerance.
struct GradCheckCase {
  std::string name;
  double tol = 0.0;
  double max_err = 0.0;
  bool pass = false;
};

// Central-difference verification of every differentiable tensor op, every
// loss, and a reduced-size end-to-end model. Deterministic in seed_base.
std::vector<GradCheckCase> run_grad_suite(uint64_t seed_base = 1);

bool all_pass(const std::vector<GradCheckCase>& cases);

}  // namespace repcount

#endif
