#pragma once

#include <cstdint>
#include <vector>

#include "flameiv/dataset.hpp"
#include "flameiv/matcher.hpp"

// Slow, obviously-correct reference implementations. These back the test
// suite and the `oracle-check` command; they enumerate rather than encode,
// so keep p small.
namespace flameiv::oracle {

struct WeightVector {
    std::vector<double> w;  // nonnegative, length p
};

// sum_j w_j * [x_i[j] != x_k[j]]
double weighted_hamming(const std::int32_t* xi, const std::int32_t* xk, int p,
                        const WeightVector& w);
double weighted_hamming(const std::vector<std::int32_t>& xi, const std::vector<std::int32_t>& xk,
                        const WeightVector& w);

struct AmeIvSolution {
    bool feasible = false;       // false when no opposite-arm unit exists
    CovariateMask theta;         // argmax of theta'w subject to an opposite-arm match
    double weight = 0.0;         // theta' w
    std::vector<int> group_ids;  // MG(theta, x_i): every unit agreeing on theta
};

// Enumerates all 2^p masks for one unit; ties broken toward the
// lexicographically largest mask (index 0 most significant).
AmeIvSolution exhaustive_ame_iv(int unit_id, const Dataset& d, const WeightVector& w);

// Hash-based exact matching on the masked tuple, keeping groups that
// contain both instrument arms. Reference for grouped_mr.
GroupedResult brute_force_match(const Dataset& d, const CovariateMask& mask, int iteration = 0);

}  // namespace flameiv::oracle
