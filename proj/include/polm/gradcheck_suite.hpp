#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace polm::check {

struct SuiteResult {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Finite-difference checks of every differentiable primitive plus the full
// two-pass masked training loss on a small dual-pol input. tol applies to
// every case; inputs are drawn away from activation kinks.
std::vector<SuiteResult> run_autodiff_suite(std::uint64_t seed, double tol = 1e-4);

bool all_pass(const std::vector<SuiteResult>& results);

}  // namespace polm::check
