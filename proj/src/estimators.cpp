#include "flameiv/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "flameiv/errors.hpp"
#include "flameiv/stats.hpp"

namespace flameiv {

GroupEffect group_itt(const MatchedGroup& g, const Dataset& d) {
    GroupEffect e;
    e.group_id = g.id;
    e.n = g.n;
    e.n_instrumented = g.n_instrumented;
    e.n_noninstrumented = g.n_noninstrumented;
    if (e.n_instrumented < 1 || e.n_noninstrumented < 1) {
        throw ConfigError("group " + std::to_string(g.id) + " violates the R1 requirement");
    }

    std::vector<double> y1, y0, t1;
    y1.reserve(e.n_instrumented);
    y0.reserve(e.n_noninstrumented);
    t1.reserve(e.n_instrumented);
    double t0_sum = 0.0;
    for (int id : g.members) {
        const int i = d.index_of(id);
        if (i < 0) throw ConfigError("group member " + std::to_string(id) + " not in dataset");
        if (d.t(i) != 0.0) ++e.n_treated;
        else ++e.n_control;
        if (d.z(i)) {
            y1.push_back(d.y(i));
            t1.push_back(d.t(i));
        } else {
            y0.push_back(d.y(i));
            t0_sum += d.t(i);
        }
    }

    const double y1_mean = mean(y1);
    const double y0_mean = mean(y0);
    const double t1_mean = mean(t1);
    const double t0_mean = t0_sum / e.n_noninstrumented;
    e.itt_y = y1_mean - y0_mean;
    e.itt_t = t1_mean - t0_mean;

    e.variance_ok = e.n_instrumented >= 2 && e.n_noninstrumented >= 2;
    if (e.n_instrumented >= 2) {
        e.s2_y1 = sample_variance(y1);
        e.r2_t1 = sample_variance(t1);
        double cross = 0.0;
        for (std::size_t i = 0; i < y1.size(); ++i) {
            cross += (y1[i] - y1_mean) * (t1[i] - t1_mean);
        }
        // Sample covariance on the instrumented arm, scaled by the arm size:
        // this is the group's contribution before the (n_l/n)^2 weight.
        e.cov_yt = cross / (e.n_instrumented * (e.n_instrumented - 1.0));
    }
    if (e.n_noninstrumented >= 2) {
        e.s2_y0 = sample_variance(y0);
    }
    return e;
}

double late_pooled(const std::vector<GroupEffect>& effects) {
    double num = 0.0, den = 0.0;
    for (const auto& e : effects) {
        num += e.n * e.itt_y;
        den += e.n * e.itt_t;
    }
    if (den == 0.0) {
        throw WeakInstrumentError("pooled instrument effect on treatment is zero");
    }
    return num / den;
}

std::optional<double> late_group(const GroupEffect& e) {
    if (e.itt_t == 0.0) return std::nullopt;
    return e.itt_y / e.itt_t;
}

VarianceReport variance_report(const std::vector<GroupEffect>& effects, long n) {
    if (n <= 0) throw ConfigError("variance report needs a positive matched count");
    VarianceReport vr;
    for (const auto& e : effects) {
        const double w = static_cast<double>(e.n) / static_cast<double>(n);
        vr.pooled_itt_y += w * e.itt_y;
        vr.pooled_itt_t += w * e.itt_t;
        if (!e.variance_ok) {
            vr.flagged.push_back(e.group_id);
            continue;
        }
        const double w2 = w * w;
        vr.var_itt_y += w2 * (e.s2_y1 / e.n_instrumented + e.s2_y0 / e.n_noninstrumented);
        vr.var_itt_t += w2 * e.r2_t1 / e.n_instrumented;
        vr.cov += w2 * e.cov_yt;
    }
    if (vr.pooled_itt_t == 0.0) {
        throw WeakInstrumentError("pooled instrument effect on treatment is zero");
    }
    const double t = vr.pooled_itt_t;
    const double y = vr.pooled_itt_y;
    vr.sigma_sq = vr.var_itt_y / (t * t) + y * y * vr.var_itt_t / (t * t * t * t) -
                  2.0 * y * vr.cov / (t * t * t);
    // The delta-method combination is a nonnegative quadratic form; clamp
    // away rounding noise.
    vr.sigma_sq = std::max(0.0, vr.sigma_sq);
    std::sort(vr.flagged.begin(), vr.flagged.end());
    return vr;
}

std::pair<double, double> confidence_interval(double lambda_hat, double sigma_sq, double alpha) {
    if (sigma_sq < 0.0) throw ConfigError("variance must be nonnegative");
    if (alpha <= 0.0 || alpha >= 1.0) throw ConfigError("level must be in (0,1)");
    const double zq = normal_quantile(1.0 - alpha / 2.0);
    const double half = zq * std::sqrt(sigma_sq);
    return {lambda_hat - half, lambda_hat + half};
}

EffectEstimate estimate_pooled(const std::vector<MatchedGroup>& groups, const Dataset& d,
                               const EstimateConfig& cfg) {
    EffectEstimate out;
    out.level = cfg.alpha;

    std::vector<GroupEffect> used;
    for (const auto& g : groups) {
        GroupEffect e = group_itt(g, d);
        if (cfg.strict_treatment_filter && (e.n_treated == 0 || e.n_control == 0)) {
            out.excluded.push_back(
                {g.id, e.n_treated == 0 ? "no treated units" : "no control units"});
            out.effects.push_back(std::move(e));
            continue;
        }
        out.groups_used.push_back(g.id);
        out.n_used += e.n;
        used.push_back(e);
        out.effects.push_back(std::move(e));
    }
    if (used.empty()) throw ConfigError("no groups available for estimation");

    out.lambda_hat = late_pooled(used);
    out.variance = variance_report(used, out.n_used);
    out.variance_flagged = out.variance.flagged;
    out.sigma_sq = out.variance.sigma_sq;
    std::tie(out.ci_lo, out.ci_hi) = confidence_interval(out.lambda_hat, out.sigma_sq, cfg.alpha);
    std::sort(out.groups_used.begin(), out.groups_used.end());
    return out;
}

}  // namespace flameiv
