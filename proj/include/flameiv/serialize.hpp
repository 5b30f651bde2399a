#pragma once

#include <string>

#include <json.hpp>

#include "flameiv/estimators.hpp"
#include "flameiv/matcher.hpp"
#include "flameiv/simgen.hpp"

namespace flameiv {

nlohmann::json to_json(const MatchResult& result);
MatchResult match_result_from_json(const nlohmann::json& j);
void write_match_result_json(const MatchResult& result, const std::string& path);
MatchResult read_match_result_json(const std::string& path);

// One row per matched unit: unit_id, group_id, iteration.
void write_groups_csv(const MatchResult& result, const std::string& path);

nlohmann::json to_json(const EffectEstimate& e);
void write_effect_json(const EffectEstimate& e, const std::string& path);
// One row per group with its ITTs, Wald ratio and exclusion reason.
void write_per_group_csv(const EffectEstimate& e, const std::string& path);
std::string effect_table(const EffectEstimate& e);

nlohmann::json to_json(const sim::BenchmarkMetrics& m);
nlohmann::json runtimes_json(const sim::BenchmarkMetrics& m);
void write_bench_estimates_csv(const sim::BenchmarkMetrics& m, const std::string& path);
// Plot-ready row per method: instrument strength and F against bias/MAD.
void write_bench_plot_csv(const sim::BenchmarkMetrics& m, double pi, const std::string& path);

void write_truth_csv(const sim::SimTruth& truth, const Dataset& d, const std::string& path);
nlohmann::json truth_meta_json(const sim::SimTruth& truth, const sim::DgpConfig& cfg);

// (true effect, estimated effect) per group, for the per-group scatter.
void write_group_scatter_csv(const std::vector<sim::TrueGroupEffect>& truths,
                             const std::vector<GroupEffect>& effects, const std::string& path);

std::string file_digest_hex(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace flameiv
