#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nst/autodiff.hpp"

namespace nst {

struct GradCheckResult {
    std::string name;
    int instances = 0;
    double max_rel_err = 0.0;
};

// Finite-difference checks for every differentiable op (conv2d wrt
// input and weights on both backends, relu, avg_pool, gram, mse,
// weighted-sum) plus the full 16-px style objective. 64-bit precision,
// central differences with the given eps.
std::vector<GradCheckResult> gradcheck_suite(std::uint64_t seed, int instances_per_op = 20,
                                             double eps = 1e-4);

}  // namespace nst
