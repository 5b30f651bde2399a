#include "flameiv/simgen.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "flameiv/errors.hpp"
#include "flameiv/parallel.hpp"
#include "flameiv/rng.hpp"
#include "flameiv/stats.hpp"

namespace flameiv::sim {

OutcomeModel model_from_string(const std::string& s) {
    if (s == "linear") return OutcomeModel::Linear;
    if (s == "nonlinear") return OutcomeModel::Nonlinear;
    if (s == "hetero-linear") return OutcomeModel::HeteroLinear;
    if (s == "hetero-nonlinear") return OutcomeModel::HeteroNonlinear;
    throw ConfigError("unknown model '" + s +
                      "'; valid: linear, nonlinear, hetero-linear, hetero-nonlinear");
}

std::string to_string(OutcomeModel m) {
    switch (m) {
        case OutcomeModel::Linear: return "linear";
        case OutcomeModel::Nonlinear: return "nonlinear";
        case OutcomeModel::HeteroLinear: return "hetero-linear";
        case OutcomeModel::HeteroNonlinear: return "hetero-nonlinear";
    }
    return "unknown";
}

InstrumentMode mode_from_string(const std::string& s) {
    if (s == "randomized") return InstrumentMode::Randomized;
    if (s == "confounded") return InstrumentMode::Confounded;
    throw ConfigError("unknown instrument mode '" + s + "'; valid: randomized, confounded");
}

std::string to_string(InstrumentMode m) {
    return m == InstrumentMode::Randomized ? "randomized" : "confounded";
}

namespace {

// Exposure thresholds shared by both potential treatments.
double discretize_exposure(double t_star) {
    if (t_star > 1.0) return 3.0;
    if (t_star > 0.6) return 2.0;
    if (t_star > 0.3) return 1.0;
    return 0.0;
}

bool heterogeneous(OutcomeModel m) {
    return m == OutcomeModel::HeteroLinear || m == OutcomeModel::HeteroNonlinear;
}

bool has_interactions(OutcomeModel m) {
    return m == OutcomeModel::Nonlinear || m == OutcomeModel::HeteroNonlinear;
}

}  // namespace

SimulatedData gen_dataset(const DgpConfig& cfg) {
    if (cfg.n_per_arm < 1) throw ConfigError("need at least one unit per arm");
    if (cfg.p < 1) throw ConfigError("need at least one covariate");
    if (cfg.n_important < 0 || cfg.n_important > cfg.p) {
        throw ConfigError("important covariate count must be in [0, p]");
    }
    if (cfg.noise_sd <= 0.0) throw ConfigError("noise sd must be positive");

    const int n = 2 * cfg.n_per_arm;
    const int p = cfg.p;
    Rng rng(derive_seed(cfg.seed, 0xD62));

    SimTruth truth;
    truth.alpha.resize(p);
    if (heterogeneous(cfg.model)) {
        truth.s = rng.bernoulli(0.5) ? 1.0 : -1.0;
        for (int j = 0; j < p; ++j) truth.alpha[j] = rng.normal(10.0 * truth.s, 1.0);
        truth.beta.resize(p);
        for (int j = 0; j < p; ++j) truth.beta[j] = rng.normal(1.5, 0.15);
    } else {
        for (int j = 0; j < p; ++j) truth.alpha[j] = std::pow(0.5, j + 1);
    }

    std::vector<std::uint8_t> z(n, 0);
    if (cfg.instrument == InstrumentMode::Randomized) {
        for (int i = 0; i < cfg.n_per_arm; ++i) z[i] = 1;
    }

    // Important covariates are Bernoulli(0.5) everywhere; the nuisance
    // covariates shift with the arm and are drawn later (or uniformly, when
    // the instrument itself is a function of them).
    std::vector<std::int32_t> x(static_cast<std::size_t>(n) * p, 0);
    for (int j = 0; j < cfg.n_important; ++j) {
        for (int i = 0; i < n; ++i) {
            x[static_cast<std::size_t>(i) * p + j] = rng.bernoulli(0.5) ? 1 : 0;
        }
    }
    if (cfg.instrument == InstrumentMode::Confounded) {
        for (int j = cfg.n_important; j < p; ++j) {
            for (int i = 0; i < n; ++i) {
                x[static_cast<std::size_t>(i) * p + j] = rng.bernoulli(0.5) ? 1 : 0;
            }
        }
        if (p < 2) throw ConfigError("confounded instrument needs at least two covariates");
        const double rho_a = rng.normal(0.1, 0.1);
        const double rho_b = rng.normal(0.1, 0.1);
        std::vector<double> z_raw(n);
        for (int i = 0; i < n; ++i) {
            z_raw[i] = rho_a * x[static_cast<std::size_t>(i) * p + (p - 2)] +
                       rho_b * x[static_cast<std::size_t>(i) * p + (p - 1)];
        }
        const double cut = median(z_raw);
        for (int i = 0; i < n; ++i) z[i] = z_raw[i] >= cut ? 1 : 0;
    }

    std::vector<double> xi(n);
    for (int i = 0; i < n; ++i) xi[i] = rng.normal(0.0, cfg.noise_sd);

    truth.t_z0.resize(n);
    truth.t_z1.resize(n);
    std::vector<double> t_obs(n);
    for (int i = 0; i < n; ++i) {
        double linear = cfg.intercept_k + xi[i];
        for (int j = 0; j < cfg.n_important; ++j) {
            linear += cfg.rho_important * x[static_cast<std::size_t>(i) * p + j];
        }
        truth.t_z0[i] = discretize_exposure(linear);
        truth.t_z1[i] = discretize_exposure(linear + cfg.pi);
        if (cfg.pi >= 0.0 && truth.t_z1[i] < truth.t_z0[i]) {
            throw std::logic_error("monotonicity violated by construction");
        }
        t_obs[i] = z[i] ? truth.t_z1[i] : truth.t_z0[i];
    }

    // Nuisance covariates, shifted by arm (randomized mode only; the
    // confounded mode drew them above).
    if (cfg.instrument == InstrumentMode::Randomized) {
        for (int j = cfg.n_important; j < p; ++j) {
            for (int i = 0; i < n; ++i) {
                const bool in_shifted_arm = cfg.nuisance_arm == NuisanceArmRule::Instrument
                                                ? z[i] != 0
                                                : t_obs[i] != 0.0;
                const double prob = in_shifted_arm ? 0.9 : 0.1;
                x[static_cast<std::size_t>(i) * p + j] = rng.bernoulli(prob) ? 1 : 0;
            }
        }
    }

    truth.y_base.resize(n);
    truth.unit_effect.resize(n);
    truth.complier.resize(n);
    std::vector<double> y(n);
    const int inter_limit = std::min(5, p);
    double late_num = 0.0, late_den = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto* row = &x[static_cast<std::size_t>(i) * p];
        double base = 0.0;
        for (int j = 0; j < p; ++j) base += truth.alpha[j] * row[j];
        if (has_interactions(cfg.model)) {
            for (int j = 0; j < inter_limit; ++j) {
                for (int g = j + 1; g < inter_limit; ++g) base += row[j] * row[g];
            }
        }
        double effect = 10.0;
        if (heterogeneous(cfg.model)) {
            effect = 0.0;
            for (int j = 0; j < p; ++j) effect += truth.beta[j] * row[j];
        }
        truth.y_base[i] = base;
        truth.unit_effect[i] = effect;
        truth.complier[i] = truth.t_z1[i] > truth.t_z0[i];
        y[i] = base + effect * t_obs[i];
        late_num += effect * (truth.t_z1[i] - truth.t_z0[i]);
        late_den += truth.t_z1[i] - truth.t_z0[i];
    }
    truth.sample_late = late_den != 0.0 ? late_num / late_den
                                        : std::numeric_limits<double>::quiet_NaN();

    CovariateSchema schema;
    schema.names.reserve(p);
    for (int j = 0; j < p; ++j) schema.names.push_back("x" + std::to_string(j + 1));
    schema.cardinalities.assign(p, 2);

    SimulatedData out{Dataset(std::move(schema), std::move(x), std::move(z), std::move(t_obs),
                              std::move(y)),
                      std::move(truth)};
    return out;
}

namespace {

Eigen::MatrixXd design_with(const Dataset& d, bool include_z,
                            const std::optional<Eigen::VectorXd>& replace_t = std::nullopt) {
    const int n = d.n();
    const int p = d.p();
    const int cols = 1 + (include_z ? 1 : 0) + (replace_t ? 1 : 0) + p;
    Eigen::MatrixXd X(n, cols);
    for (int i = 0; i < n; ++i) {
        int c = 0;
        X(i, c++) = 1.0;
        if (include_z) X(i, c++) = static_cast<double>(d.z(i));
        if (replace_t) X(i, c++) = (*replace_t)(i);
        for (int j = 0; j < p; ++j) X(i, c++) = static_cast<double>(d.x(i, j));
    }
    return X;
}

Eigen::VectorXd solve_ls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const std::string& context) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < X.cols()) {
        throw RankDeficiencyError("singular design in " + context);
    }
    return qr.solve(y);
}

}  // namespace

TwoSlsResult two_sls(const Dataset& d) {
    const int n = d.n();
    const int p = d.p();
    if (n < p + 3) throw ConfigError("too few units for two-stage least squares");

    Eigen::VectorXd t(n), y(n);
    for (int i = 0; i < n; ++i) {
        t(i) = d.t(i);
        y(i) = d.y(i);
    }

    const Eigen::MatrixXd stage1 = design_with(d, /*include_z=*/true);
    const Eigen::VectorXd b1 = solve_ls(stage1, t, "first stage");
    if (std::fabs(b1(1)) < 1e-12) {
        throw WeakInstrumentError("first-stage instrument coefficient is zero");
    }
    const Eigen::VectorXd t_hat = stage1 * b1;

    const Eigen::MatrixXd stage2 = design_with(d, /*include_z=*/false, t_hat);
    const Eigen::VectorXd b2 = solve_ls(stage2, y, "second stage");

    // Conventional 2SLS variance: residuals from the structural equation
    // with the observed treatment, scale from the projected design.
    Eigen::MatrixXd structural = stage2;
    for (int i = 0; i < n; ++i) structural(i, 1) = t(i);
    const Eigen::VectorXd resid = y - structural * b2;
    const double sigma2 = resid.squaredNorm() / (n - stage2.cols());
    const Eigen::MatrixXd gram_inv =
        (stage2.transpose() * stage2).ldlt().solve(Eigen::MatrixXd::Identity(stage2.cols(),
                                                                             stage2.cols()));
    TwoSlsResult out;
    out.estimate = b2(1);
    out.std_error = std::sqrt(sigma2 * gram_inv(1, 1));
    return out;
}

double first_stage_f(const Dataset& d) {
    const int n = d.n();
    const int p = d.p();
    if (n <= p + 2) throw ConfigError("need n > p + 2 for the first-stage F statistic");

    Eigen::VectorXd t(n);
    for (int i = 0; i < n; ++i) t(i) = d.t(i);

    const Eigen::MatrixXd full = design_with(d, /*include_z=*/true);
    const Eigen::VectorXd b_full = solve_ls(full, t, "first stage");
    const double rss_full = (t - full * b_full).squaredNorm();

    const Eigen::MatrixXd restricted = design_with(d, /*include_z=*/false);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(restricted);
    const double rss_restricted = (t - restricted * qr.solve(t)).squaredNorm();

    const double df = static_cast<double>(n - p - 2);
    return (rss_restricted - rss_full) / (rss_full / df);
}

std::vector<TrueGroupEffect> true_group_effects(const std::vector<MatchedGroup>& groups,
                                                const SimTruth& truth) {
    std::vector<TrueGroupEffect> out;
    out.reserve(groups.size());
    for (const auto& g : groups) {
        TrueGroupEffect e;
        e.group_id = g.id;
        double num = 0.0, den = 0.0;
        for (int id : g.members) {
            if (id < 0 || id >= static_cast<int>(truth.t_z0.size())) {
                throw ConfigError("group member id outside the simulated dataset");
            }
            const double uptake = truth.t_z1[id] - truth.t_z0[id];
            num += truth.unit_effect[id] * uptake;
            den += uptake;
            e.n_compliers += truth.complier[id] ? 1 : 0;
        }
        if (den != 0.0) e.effect = num / den;
        out.push_back(std::move(e));
    }
    return out;
}

std::pair<double, double> bias_and_mad(const std::vector<double>& estimates,
                                       const std::vector<double>& truths) {
    if (estimates.size() != truths.size()) throw ConfigError("estimate/truth length mismatch");
    std::vector<double> est, tru, dev;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        if (!std::isfinite(estimates[i])) continue;
        est.push_back(estimates[i]);
        tru.push_back(truths[i]);
        dev.push_back(std::fabs(estimates[i] - truths[i]));
    }
    if (est.empty()) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        return {nan, nan};
    }
    return {std::fabs(median(est) - median(tru)), median(dev)};
}

BenchmarkMetrics run_benchmark(const DgpConfig& cfg, const BenchmarkOptions& opt) {
    if (opt.replications < 1) throw ConfigError("need at least one replication");
    for (const auto& m : opt.methods) {
        if (m != "flame-iv" && m != "flame-iv-full" && m != "2sls") {
            throw ConfigError("unknown method '" + m +
                              "'; valid: flame-iv, flame-iv-full, 2sls");
        }
    }

    const int reps = opt.replications;
    const auto n_methods = opt.methods.size();
    const double nan = std::numeric_limits<double>::quiet_NaN();

    BenchmarkMetrics metrics;
    metrics.replications = reps;
    metrics.truths.assign(reps, nan);
    metrics.first_stage_fs.assign(reps, nan);
    metrics.methods.resize(n_methods);
    for (std::size_t m = 0; m < n_methods; ++m) {
        metrics.methods[m].method = opt.methods[m];
        metrics.methods[m].estimates.assign(reps, nan);
    }
    std::vector<std::vector<double>> seconds(n_methods, std::vector<double>(reps, 0.0));

    parallel_for(static_cast<std::size_t>(reps), opt.threads, [&](std::size_t r) {
        DgpConfig train_cfg = cfg;
        train_cfg.seed = derive_seed(cfg.seed, 2 * r);
        DgpConfig holdout_cfg = cfg;
        holdout_cfg.seed = derive_seed(cfg.seed, 2 * r + 1);

        const SimulatedData train = gen_dataset(train_cfg);
        const SimulatedData holdout = gen_dataset(holdout_cfg);
        metrics.truths[r] = train.truth.sample_late;
        try {
            metrics.first_stage_fs[r] = first_stage_f(train.dataset);
        } catch (const std::exception&) {
            // left as NaN
        }

        for (std::size_t m = 0; m < n_methods; ++m) {
            const auto& method = opt.methods[m];
            const auto start = std::chrono::steady_clock::now();
            try {
                double estimate = nan;
                if (method == "2sls") {
                    estimate = two_sls(train.dataset).estimate;
                } else {
                    MatchConfig mc = opt.match;
                    mc.threads = 1;  // replications already run in parallel
                    mc.early_stop = method == "flame-iv";
                    const MatchResult match = flame_iv_run(train.dataset, holdout.dataset, mc);
                    estimate = estimate_pooled(match.groups, train.dataset, opt.estimate)
                                   .lambda_hat;
                }
                metrics.methods[m].estimates[r] = estimate;
            } catch (const std::exception&) {
                // failure recorded as NaN
            }
            seconds[m][r] =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
    });

    std::vector<double> finite_f;
    for (double f : metrics.first_stage_fs) {
        if (std::isfinite(f)) finite_f.push_back(f);
    }
    metrics.median_first_stage_f = finite_f.empty() ? nan : median(finite_f);

    for (std::size_t m = 0; m < n_methods; ++m) {
        auto& mm = metrics.methods[m];
        for (double e : mm.estimates) {
            if (!std::isfinite(e)) ++mm.failures;
        }
        std::tie(mm.abs_bias_of_median, mm.mad) = bias_and_mad(mm.estimates, metrics.truths);
        for (double s : seconds[m]) mm.seconds += s;
    }
    return metrics;
}

}  // namespace flameiv::sim
