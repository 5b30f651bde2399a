#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flameiv/dataset.hpp"
#include "flameiv/estimators.hpp"
#include "flameiv/matcher.hpp"

namespace flameiv::sim {

enum class OutcomeModel { Linear, Nonlinear, HeteroLinear, HeteroNonlinear };
enum class InstrumentMode { Randomized, Confounded };
// Which arm drives the nuisance-covariate distribution shift.
enum class NuisanceArmRule { Instrument, Treatment };

OutcomeModel model_from_string(const std::string& s);
std::string to_string(OutcomeModel m);
InstrumentMode mode_from_string(const std::string& s);
std::string to_string(InstrumentMode m);

struct DgpConfig {
    int n_per_arm = 1000;
    int p = 10;
    int n_important = 8;
    double pi = 1.5;             // instrument strength
    double intercept_k = 0.0;
    double rho_important = 0.3;  // confounder loading on important covariates
    double noise_sd = 0.8;
    OutcomeModel model = OutcomeModel::Linear;
    InstrumentMode instrument = InstrumentMode::Randomized;
    NuisanceArmRule nuisance_arm = NuisanceArmRule::Instrument;
    std::uint64_t seed = 0;
};

// Ground truth recorded next to a generated dataset. Outcomes are linear in
// the exposure, so y at any exposure level is y_base + unit_effect * t.
struct SimTruth {
    std::vector<double> t_z0;         // potential treatment without instrument
    std::vector<double> t_z1;         // potential treatment with instrument
    std::vector<double> y_base;       // outcome at exposure 0
    std::vector<double> unit_effect;  // outcome change per unit of exposure
    std::vector<std::uint8_t> complier;
    std::vector<double> alpha;
    std::vector<double> beta;         // empty for homogeneous models
    double s = 1.0;
    double sample_late = 0.0;         // sum(y(1)-y(0)) / sum(t(1)-t(0))

    double y_at(int i, double t) const { return y_base[i] + unit_effect[i] * t; }
};

struct SimulatedData {
    Dataset dataset;
    SimTruth truth;
};

SimulatedData gen_dataset(const DgpConfig& cfg);

struct TwoSlsResult {
    double estimate = 0.0;
    double std_error = 0.0;
};

// Two-stage least squares of y on treatment instrumented by z, controlling
// for all covariates; conventional homoskedastic standard error.
TwoSlsResult two_sls(const Dataset& d);

// Partial F statistic for the instrument in the first-stage regression.
double first_stage_f(const Dataset& d);

struct TrueGroupEffect {
    int group_id = 0;
    long n_compliers = 0;
    std::optional<double> effect;  // nullopt when the group has no uptake
};

// Counterfactual complier effect per matched group. Group member ids must
// index the truth arrays (i.e. the groups come from the generated dataset).
std::vector<TrueGroupEffect> true_group_effects(const std::vector<MatchedGroup>& groups,
                                                const SimTruth& truth);

struct MethodMetrics {
    std::string method;
    std::vector<double> estimates;   // NaN where the replication failed
    long failures = 0;
    double abs_bias_of_median = 0.0;
    double mad = 0.0;
    double seconds = 0.0;
};

struct BenchmarkMetrics {
    int replications = 0;
    std::vector<double> truths;          // per replication
    std::vector<double> first_stage_fs;  // per replication, on the training set
    double median_first_stage_f = 0.0;
    std::vector<MethodMetrics> methods;
};

struct BenchmarkOptions {
    std::vector<std::string> methods{"flame-iv", "2sls"};
    int replications = 100;
    unsigned threads = 0;
    MatchConfig match;
    EstimateConfig estimate;
};

// Paper protocol: fresh training + holdout pair per replication, every
// method estimates the pooled effect, metrics are medians over
// replications. Known methods: flame-iv, flame-iv-full (no early stop),
// 2sls.
BenchmarkMetrics run_benchmark(const DgpConfig& cfg, const BenchmarkOptions& opt);

// |median(estimates) - truth| and median |estimate - truth|; NaN estimates
// are failures and do not contribute.
std::pair<double, double> bias_and_mad(const std::vector<double>& estimates,
                                       const std::vector<double>& truths);

}  // namespace flameiv::sim
