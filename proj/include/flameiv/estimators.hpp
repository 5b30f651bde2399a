#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flameiv/dataset.hpp"
#include "flameiv/matcher.hpp"

namespace flameiv {

// Within-group intent-to-treat effects plus the pieces the variance
// construction needs. Arm variances are defined only when that arm has at
// least two units; variance_ok gates a group's entry into variance sums.
struct GroupEffect {
    int group_id = 0;
    double itt_y = 0.0;
    double itt_t = 0.0;
    int n = 0;
    int n_instrumented = 0;
    int n_noninstrumented = 0;
    double s2_y1 = 0.0;   // sample variance of y, z = 1 arm
    double s2_y0 = 0.0;   // sample variance of y, z = 0 arm
    double r2_t1 = 0.0;   // sample variance of t, z = 1 arm (z = 0 arm is 0 by monotonicity)
    double cov_yt = 0.0;  // sample cov(y, t) on the z = 1 arm, scaled by 1/n_instrumented
    bool variance_ok = false;
    int n_treated = 0;    // t != 0
    int n_control = 0;    // t == 0
};

// Mean differences between instrument arms within the group.
GroupEffect group_itt(const MatchedGroup& g, const Dataset& d);

// Size-weighted ratio over groups; throws WeakInstrumentError when the
// weighted treatment uptake is zero.
double late_pooled(const std::vector<GroupEffect>& effects);

// Within-group Wald ratio; nullopt when the group had no treatment uptake.
std::optional<double> late_group(const GroupEffect& e);

struct VarianceReport {
    double var_itt_y = 0.0;
    double var_itt_t = 0.0;
    double cov = 0.0;
    double sigma_sq = 0.0;          // asymptotic variance of the pooled ratio
    double pooled_itt_y = 0.0;
    double pooled_itt_t = 0.0;
    std::vector<int> flagged;       // groups left out of variance sums (arm < 2)
};

// Stratified variance and delta-method combination. n is the total matched
// count behind the effects. Flagged groups still contribute to the pooled
// means, only their variance terms are dropped.
VarianceReport variance_report(const std::vector<GroupEffect>& effects, long n);

// lambda +/- z_{1-alpha/2} * sigma; sigma_sq already carries all sample-size
// scaling.
std::pair<double, double> confidence_interval(double lambda_hat, double sigma_sq, double alpha);

struct ExclusionEntry {
    int group_id = 0;
    std::string reason;
};

struct EffectEstimate {
    double lambda_hat = 0.0;
    double sigma_sq = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double level = 0.05;
    long n_used = 0;
    std::vector<int> groups_used;
    std::vector<ExclusionEntry> excluded;   // groups contributing nothing
    std::vector<int> variance_flagged;      // in the estimate, not the variance
    VarianceReport variance;
    std::vector<GroupEffect> effects;       // per-group detail for reporting
};

struct EstimateConfig {
    double alpha = 0.05;
    // Also drop groups lacking treated (t != 0) or control (t == 0) units.
    bool strict_treatment_filter = false;
};

// Pooled estimate with variance and CI over a set of matched groups.
EffectEstimate estimate_pooled(const std::vector<MatchedGroup>& groups, const Dataset& d,
                               const EstimateConfig& cfg = {});

}  // namespace flameiv
