#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <gmpxx.h>

#include "flameiv/dataset.hpp"

namespace flameiv {

// Active-covariate indicator (theta). Index j is active when active[j] != 0.
struct CovariateMask {
    std::vector<std::uint8_t> active;

    static CovariateMask all(int p) { return CovariateMask{std::vector<std::uint8_t>(p, 1)}; }
    static CovariateMask none(int p) { return CovariateMask{std::vector<std::uint8_t>(p, 0)}; }

    int size() const { return static_cast<int>(active.size()); }
    int popcount() const;
    CovariateMask without(int j) const;
    std::vector<int> active_indices() const;
    std::string bitstring() const;  // index 0 first, '1' = active

    bool operator==(const CovariateMask&) const = default;
};

// Per-unit integer codes for exact matching on the active covariates.
// Active covariates are permuted so cardinalities ascend; position j then
// carries weight k_(j)^j, which keeps the code injective on value tuples.
// The augmented code folds the instrument in at radix position 0:
//   b  = sum_j a_j * k_(j)^j
//   b+ = z + sum_j a_j * k_(j)^(j+1)
// A unit can be matched iff its covariate code count differs from its
// augmented count, i.e. some unit shares the signature with opposite z.
// Codes live in 128-bit words while every code fits; wider schemas fall
// back to arbitrary precision.
struct BitEncoding {
    std::vector<int> radix_order;          // active covariate indices, cardinality-ascending
    bool wide = false;
    std::vector<unsigned __int128> code;   // b,  when !wide
    std::vector<unsigned __int128> code_plus;
    std::vector<mpz_class> wide_code;      // b,  when wide
    std::vector<mpz_class> wide_code_plus;
    std::vector<std::uint32_t> count;      // c_u
    std::vector<std::uint32_t> count_plus; // c_u^+
    std::vector<std::uint8_t> matchable;   // c_u != c_u^+

    // Small-value accessors for fixtures; require the value to fit.
    std::uint64_t b_u64(int i) const;
    std::uint64_t bplus_u64(int i) const;
};

BitEncoding encode_units(const Dataset& d, const CovariateMask& mask);

struct MatchedGroup {
    int id = 0;
    int iteration = 0;
    CovariateMask theta;
    std::vector<std::int32_t> signature;  // values of active covariates, index order
    std::vector<int> members;             // unit ids, ascending
    int n = 0;
    int n_instrumented = 0;               // z = 1
    int n_noninstrumented = 0;            // z = 0
};

struct GroupedResult {
    std::vector<MatchedGroup> groups;   // sorted by smallest member id
    std::vector<int> matched_ids;       // ascending
};

// Exact matching of the listed units on the masked covariates; keeps only
// groups with at least one unit from each instrument arm (R1).
GroupedResult grouped_mr(const std::vector<int>& unmatched_ids, const Dataset& d,
                         const CovariateMask& mask, int iteration = 0);

// Holdout sum of squared residuals of ridge least squares on the active
// covariates plus the instrument (intercept unpenalized).
double prediction_error(const Dataset& holdout, const CovariateMask& mask, double ridge);

// matched/available per arm, summed; nullopt when an arm has nothing
// available (that situation is a stop condition, not a score).
std::optional<double> balancing_factor(long available_instrumented, long available_noninstrumented,
                                       long matched_instrumented, long matched_noninstrumented);

inline double match_quality(double pe, double bf, double tradeoff_c) {
    return tradeoff_c * bf - pe;
}

struct MatchConfig {
    double tradeoff_c = 0.1;       // MQ weight on the balancing factor
    double ridge = 1e-6;           // PE model regularization
    bool early_stop = true;
    double early_stop_inflation = 0.05;  // stop when best PE > baseline*(1+eps)
    double holdout_fraction = 0.15;      // used by callers that split
    unsigned threads = 0;                // 0 = hardware
};

enum class StopReason {
    NotStopped,
    AllMatched,
    NoCovariatesLeft,
    InstrumentArmExhausted,
    MatchQualityDegraded,
};

std::string to_string(StopReason r);

struct IterationState {
    long unmatched_instrumented = 0;
    long unmatched_noninstrumented = 0;
    int covariates_remaining = 0;
    std::optional<double> best_candidate_pe;
};

struct StopDecision {
    bool stop = false;
    StopReason reason = StopReason::NotStopped;
};

StopDecision check_stop(const IterationState& state, const MatchConfig& cfg, double pe_baseline);

struct CandidateScore {
    int covariate = -1;
    double pe = 0.0;
    double bf = 0.0;
    double mq = 0.0;
};

struct IterationLog {
    int iteration = 0;
    std::vector<CandidateScore> candidates;
    int dropped = -1;  // -1 when the iteration stopped instead of dropping
};

struct MatchResult {
    std::vector<int> drop_sequence;       // covariate index dropped at iteration 1, 2, ...
    std::vector<MatchedGroup> groups;     // all iterations, formation order
    std::vector<int> unmatched_ids;       // ascending
    std::vector<IterationLog> log;
    double pe_baseline = 0.0;
    StopReason stop_reason = StopReason::NotStopped;
};

// The full greedy loop: exact matching on all covariates, then one covariate
// dropped per iteration by match quality until a stop condition fires.
MatchResult flame_iv_run(const Dataset& train, const Dataset& holdout, const MatchConfig& cfg);

}  // namespace flameiv
