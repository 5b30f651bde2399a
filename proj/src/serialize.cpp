#include "flameiv/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "flameiv/csv.hpp"
#include "flameiv/errors.hpp"
#include "flameiv/stats.hpp"

namespace flameiv {

using nlohmann::json;

namespace {

json group_to_json(const MatchedGroup& g) {
    return json{{"id", g.id},
                {"iteration", g.iteration},
                {"theta", g.theta.bitstring()},
                {"signature", g.signature},
                {"members", g.members},
                {"n", g.n},
                {"n_instrumented", g.n_instrumented},
                {"n_noninstrumented", g.n_noninstrumented}};
}

MatchedGroup group_from_json(const json& j) {
    MatchedGroup g;
    g.id = j.at("id").get<int>();
    g.iteration = j.at("iteration").get<int>();
    const auto theta = j.at("theta").get<std::string>();
    g.theta = CovariateMask::none(static_cast<int>(theta.size()));
    for (std::size_t i = 0; i < theta.size(); ++i) g.theta.active[i] = theta[i] == '1';
    g.signature = j.at("signature").get<std::vector<std::int32_t>>();
    g.members = j.at("members").get<std::vector<int>>();
    g.n = j.at("n").get<int>();
    g.n_instrumented = j.at("n_instrumented").get<int>();
    g.n_noninstrumented = j.at("n_noninstrumented").get<int>();
    return g;
}

StopReason stop_reason_from_string(const std::string& s) {
    for (StopReason r : {StopReason::NotStopped, StopReason::AllMatched,
                         StopReason::NoCovariatesLeft, StopReason::InstrumentArmExhausted,
                         StopReason::MatchQualityDegraded}) {
        if (to_string(r) == s) return r;
    }
    throw ValidationError("unknown stop reason '" + s + "'");
}

json finite_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

}  // namespace

json to_json(const MatchResult& result) {
    json iterations = json::array();
    for (const auto& entry : result.log) {
        json candidates = json::array();
        for (const auto& c : entry.candidates) {
            candidates.push_back(
                json{{"covariate", c.covariate}, {"pe", c.pe}, {"bf", c.bf}, {"mq", c.mq}});
        }
        iterations.push_back(json{{"iteration", entry.iteration},
                                  {"dropped", entry.dropped},
                                  {"candidates", std::move(candidates)}});
    }
    json groups = json::array();
    for (const auto& g : result.groups) groups.push_back(group_to_json(g));
    return json{{"pe_baseline", result.pe_baseline},
                {"stop_reason", to_string(result.stop_reason)},
                {"drop_sequence", result.drop_sequence},
                {"iterations", std::move(iterations)},
                {"groups", std::move(groups)},
                {"unmatched", result.unmatched_ids}};
}

MatchResult match_result_from_json(const json& j) {
    MatchResult r;
    r.pe_baseline = j.at("pe_baseline").get<double>();
    r.stop_reason = stop_reason_from_string(j.at("stop_reason").get<std::string>());
    r.drop_sequence = j.at("drop_sequence").get<std::vector<int>>();
    for (const auto& entry : j.at("iterations")) {
        IterationLog log;
        log.iteration = entry.at("iteration").get<int>();
        log.dropped = entry.at("dropped").get<int>();
        for (const auto& c : entry.at("candidates")) {
            log.candidates.push_back(CandidateScore{c.at("covariate").get<int>(),
                                                    c.at("pe").get<double>(),
                                                    c.at("bf").get<double>(),
                                                    c.at("mq").get<double>()});
        }
        r.log.push_back(std::move(log));
    }
    for (const auto& g : j.at("groups")) r.groups.push_back(group_from_json(g));
    r.unmatched_ids = j.at("unmatched").get<std::vector<int>>();
    return r;
}

void write_match_result_json(const MatchResult& result, const std::string& path) {
    write_text_file(path, to_json(result).dump(2) + "\n");
}

MatchResult read_match_result_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open file: " + path);
    json j;
    in >> j;
    return match_result_from_json(j);
}

void write_groups_csv(const MatchResult& result, const std::string& path) {
    CsvTable table;
    table.header = {"unit_id", "group_id", "iteration"};
    for (const auto& g : result.groups) {
        for (int id : g.members) {
            table.rows.push_back(
                {std::to_string(id), std::to_string(g.id), std::to_string(g.iteration)});
        }
    }
    write_csv(path, table);
}

json to_json(const EffectEstimate& e) {
    json excluded = json::array();
    for (const auto& x : e.excluded) {
        excluded.push_back(json{{"group_id", x.group_id}, {"reason", x.reason}});
    }
    json per_group = json::array();
    for (const auto& g : e.effects) {
        const auto lg = late_group(g);
        per_group.push_back(json{{"group_id", g.group_id},
                                 {"n", g.n},
                                 {"n_instrumented", g.n_instrumented},
                                 {"n_noninstrumented", g.n_noninstrumented},
                                 {"itt_y", g.itt_y},
                                 {"itt_t", g.itt_t},
                                 {"lambda_group", lg ? json(*lg) : json(nullptr)},
                                 {"variance_ok", g.variance_ok}});
    }
    return json{{"lambda_hat", e.lambda_hat},
                {"sigma_sq", e.sigma_sq},
                {"sigma", std::sqrt(e.sigma_sq)},
                {"ci", json::array({e.ci_lo, e.ci_hi})},
                {"level", e.level},
                {"n_used", e.n_used},
                {"groups_used", e.groups_used},
                {"excluded", std::move(excluded)},
                {"variance_flagged", e.variance_flagged},
                {"variance",
                 json{{"var_itt_y", e.variance.var_itt_y},
                      {"var_itt_t", e.variance.var_itt_t},
                      {"cov", e.variance.cov},
                      {"pooled_itt_y", e.variance.pooled_itt_y},
                      {"pooled_itt_t", e.variance.pooled_itt_t}}},
                {"per_group", std::move(per_group)}};
}

void write_effect_json(const EffectEstimate& e, const std::string& path) {
    write_text_file(path, to_json(e).dump(2) + "\n");
}

void write_per_group_csv(const EffectEstimate& e, const std::string& path) {
    std::map<int, std::string> reasons;
    for (const auto& x : e.excluded) reasons[x.group_id] = x.reason;

    CsvTable table;
    table.header = {"group_id", "n",     "n_instrumented", "n_noninstrumented",
                    "itt_y",    "itt_t", "lambda_group",   "exclusion_reason"};
    for (const auto& g : e.effects) {
        const auto lg = late_group(g);
        std::string reason;
        if (auto it = reasons.find(g.group_id); it != reasons.end()) {
            reason = it->second;
        } else if (!lg) {
            reason = "no treatment uptake";
        }
        table.rows.push_back({std::to_string(g.group_id), std::to_string(g.n),
                              std::to_string(g.n_instrumented),
                              std::to_string(g.n_noninstrumented), format_double(g.itt_y),
                              format_double(g.itt_t), lg ? format_double(*lg) : "",
                              reason});
    }
    write_csv(path, table);
}

std::string effect_table(const EffectEstimate& e) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof(line), "pooled LATE estimate : %.6f\n", e.lambda_hat);
    out << line;
    std::snprintf(line, sizeof(line), "std error            : %.6f\n", std::sqrt(e.sigma_sq));
    out << line;
    std::snprintf(line, sizeof(line), "%.0f%% CI              : (%.6f, %.6f)\n",
                  (1.0 - e.level) * 100.0, e.ci_lo, e.ci_hi);
    out << line;
    out << "matched units used   : " << e.n_used << "\n";
    out << "groups used          : " << e.groups_used.size() << "\n";
    out << "groups excluded      : " << e.excluded.size() << "\n";
    out << "variance-flagged     : " << e.variance_flagged.size() << "\n";
    return out.str();
}

json to_json(const sim::BenchmarkMetrics& m) {
    json methods = json::array();
    for (const auto& mm : m.methods) {
        json estimates = json::array();
        for (double v : mm.estimates) estimates.push_back(finite_or_null(v));
        methods.push_back(json{{"method", mm.method},
                               {"abs_bias_of_median", finite_or_null(mm.abs_bias_of_median)},
                               {"mad", finite_or_null(mm.mad)},
                               {"failures", mm.failures},
                               {"estimates", std::move(estimates)}});
    }
    json truths = json::array();
    for (double v : m.truths) truths.push_back(finite_or_null(v));
    return json{{"replications", m.replications},
                {"median_first_stage_f", finite_or_null(m.median_first_stage_f)},
                {"truths", std::move(truths)},
                {"methods", std::move(methods)}};
}

json runtimes_json(const sim::BenchmarkMetrics& m) {
    json out = json::object();
    for (const auto& mm : m.methods) out[mm.method] = mm.seconds;
    return out;
}

void write_bench_estimates_csv(const sim::BenchmarkMetrics& m, const std::string& path) {
    CsvTable table;
    table.header = {"replication", "method", "estimate", "truth", "failed"};
    for (const auto& mm : m.methods) {
        for (int r = 0; r < m.replications; ++r) {
            const bool failed = !std::isfinite(mm.estimates[r]);
            table.rows.push_back({std::to_string(r), mm.method,
                                  failed ? "" : format_double(mm.estimates[r]),
                                  format_double(m.truths[r]), failed ? "1" : "0"});
        }
    }
    write_csv(path, table);
}

void write_bench_plot_csv(const sim::BenchmarkMetrics& m, double pi, const std::string& path) {
    CsvTable table;
    table.header = {"method", "pi", "median_first_stage_f", "abs_bias_of_median", "mad"};
    for (const auto& mm : m.methods) {
        table.rows.push_back({mm.method, format_double(pi),
                              format_double(m.median_first_stage_f),
                              format_double(mm.abs_bias_of_median), format_double(mm.mad)});
    }
    write_csv(path, table);
}

void write_truth_csv(const sim::SimTruth& truth, const Dataset& d, const std::string& path) {
    CsvTable table;
    table.header = {"id", "t_z0", "t_z1", "y_z0", "y_z1", "y_base", "unit_effect", "complier"};
    for (int i = 0; i < d.n(); ++i) {
        const int id = d.id(i);
        table.rows.push_back({std::to_string(id), format_double(truth.t_z0[id]),
                              format_double(truth.t_z1[id]),
                              format_double(truth.y_at(id, truth.t_z0[id])),
                              format_double(truth.y_at(id, truth.t_z1[id])),
                              format_double(truth.y_base[id]),
                              format_double(truth.unit_effect[id]),
                              truth.complier[id] ? "1" : "0"});
    }
    write_csv(path, table);
}

json truth_meta_json(const sim::SimTruth& truth, const sim::DgpConfig& cfg) {
    return json{{"model", sim::to_string(cfg.model)},
                {"instrument_mode", sim::to_string(cfg.instrument)},
                {"n_per_arm", cfg.n_per_arm},
                {"p", cfg.p},
                {"n_important", cfg.n_important},
                {"pi", cfg.pi},
                {"intercept_k", cfg.intercept_k},
                {"rho_important", cfg.rho_important},
                {"noise_sd", cfg.noise_sd},
                {"seed", cfg.seed},
                {"alpha", truth.alpha},
                {"beta", truth.beta},
                {"s", truth.s},
                {"sample_late", finite_or_null(truth.sample_late)}};
}

void write_group_scatter_csv(const std::vector<sim::TrueGroupEffect>& truths,
                             const std::vector<GroupEffect>& effects, const std::string& path) {
    std::map<int, const GroupEffect*> by_id;
    for (const auto& e : effects) by_id[e.group_id] = &e;

    CsvTable table;
    table.header = {"group_id", "n", "n_compliers", "true_effect", "estimated_effect"};
    for (const auto& t : truths) {
        auto it = by_id.find(t.group_id);
        if (it == by_id.end()) continue;
        const auto est = late_group(*it->second);
        table.rows.push_back({std::to_string(t.group_id), std::to_string(it->second->n),
                              std::to_string(t.n_compliers),
                              t.effect ? format_double(*t.effect) : "",
                              est ? format_double(*est) : ""});
    }
    write_csv(path, table);
}

std::string file_digest_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string content = buf.str();
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(content)));
    return hex;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write file: " + path);
    out << content;
    if (!out) throw ConfigError("write failed: " + path);
}

}  // namespace flameiv
