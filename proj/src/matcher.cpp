#include "flameiv/matcher.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <unordered_map>

#include <Eigen/Dense>

#include "flameiv/errors.hpp"
#include "flameiv/parallel.hpp"
#include "flameiv/rng.hpp"

namespace flameiv {

int CovariateMask::popcount() const {
    int c = 0;
    for (auto b : active) c += b != 0;
    return c;
}

CovariateMask CovariateMask::without(int j) const {
    CovariateMask m = *this;
    m.active[j] = 0;
    return m;
}

std::vector<int> CovariateMask::active_indices() const {
    std::vector<int> idx;
    for (int j = 0; j < size(); ++j) {
        if (active[j]) idx.push_back(j);
    }
    return idx;
}

std::string CovariateMask::bitstring() const {
    std::string s(active.size(), '0');
    for (std::size_t j = 0; j < active.size(); ++j) {
        if (active[j]) s[j] = '1';
    }
    return s;
}

namespace {

struct U128Hash {
    std::size_t operator()(unsigned __int128 v) const {
        return static_cast<std::size_t>(
            splitmix64(static_cast<std::uint64_t>(v) ^
                       splitmix64(static_cast<std::uint64_t>(v >> 64))));
    }
};

// Covariate indices active in the mask, ordered by ascending cardinality
// (ties by index). Ascending order makes the radix code injective: the
// weight of position j, k_(j)^j, exceeds the largest value representable
// by positions 0..j-1.
std::vector<int> radix_order(const CovariateSchema& schema, const CovariateMask& mask) {
    std::vector<int> order = mask.active_indices();
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return schema.cardinalities[a] < schema.cardinalities[b];
    });
    return order;
}

// Whether every augmented code fits in 127 bits for this schema + order.
// Max b+ value is 1 + sum_j (k_(j)-1) * k_(j)^(j+1).
bool codes_fit_u128(const CovariateSchema& schema, const std::vector<int>& order) {
    mpz_class bound = 1;  // the z digit
    for (std::size_t j = 0; j < order.size(); ++j) {
        const int k = schema.cardinalities[order[j]];
        mpz_class w;
        mpz_ui_pow_ui(w.get_mpz_t(), static_cast<unsigned long>(k),
                      static_cast<unsigned long>(j + 1));
        bound += mpz_class(k - 1) * w;
    }
    mpz_class limit;
    mpz_ui_pow_ui(limit.get_mpz_t(), 2, 127);
    return bound < limit;
}

void tally_counts_u128(BitEncoding& enc) {
    const std::size_t n = enc.code.size();
    std::unordered_map<unsigned __int128, std::uint32_t, U128Hash> c, cp;
    c.reserve(2 * n);
    cp.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        ++c[enc.code[i]];
        ++cp[enc.code_plus[i]];
    }
    enc.count.resize(n);
    enc.count_plus.resize(n);
    enc.matchable.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        enc.count[i] = c[enc.code[i]];
        enc.count_plus[i] = cp[enc.code_plus[i]];
        enc.matchable[i] = enc.count[i] != enc.count_plus[i];
    }
}

void tally_counts_wide(BitEncoding& enc) {
    const std::size_t n = enc.wide_code.size();
    std::map<mpz_class, std::uint32_t> c, cp;
    for (std::size_t i = 0; i < n; ++i) {
        ++c[enc.wide_code[i]];
        ++cp[enc.wide_code_plus[i]];
    }
    enc.count.resize(n);
    enc.count_plus.resize(n);
    enc.matchable.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        enc.count[i] = c[enc.wide_code[i]];
        enc.count_plus[i] = cp[enc.wide_code_plus[i]];
        enc.matchable[i] = enc.count[i] != enc.count_plus[i];
    }
}

// Encode the units at the given dataset positions.
BitEncoding encode_positions(const Dataset& d, const std::vector<int>& positions,
                             const CovariateMask& mask) {
    if (mask.size() != d.p()) throw ConfigError("mask length does not match covariate count");
    BitEncoding enc;
    enc.radix_order = radix_order(d.schema(), mask);
    const auto& order = enc.radix_order;
    const std::size_t n = positions.size();

    enc.wide = !codes_fit_u128(d.schema(), order);
    if (!enc.wide) {
        std::vector<unsigned __int128> weight(order.size());       // k_(j)^j
        std::vector<unsigned __int128> weight_plus(order.size());  // k_(j)^(j+1)
        for (std::size_t j = 0; j < order.size(); ++j) {
            const auto k = static_cast<unsigned __int128>(d.schema().cardinalities[order[j]]);
            unsigned __int128 w = 1;
            for (std::size_t e = 0; e < j; ++e) w *= k;
            weight[j] = w;
            weight_plus[j] = w * k;
        }
        enc.code.resize(n);
        enc.code_plus.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto* row = d.row(positions[i]);
            unsigned __int128 b = 0, bp = 0;
            for (std::size_t j = 0; j < order.size(); ++j) {
                const auto a = static_cast<unsigned __int128>(row[order[j]]);
                b += a * weight[j];
                bp += a * weight_plus[j];
            }
            enc.code[i] = b;
            enc.code_plus[i] = bp + static_cast<unsigned>(d.z(positions[i]));
        }
        tally_counts_u128(enc);
    } else {
        std::vector<mpz_class> weight(order.size()), weight_plus(order.size());
        for (std::size_t j = 0; j < order.size(); ++j) {
            const int k = d.schema().cardinalities[order[j]];
            mpz_class w;
            mpz_ui_pow_ui(w.get_mpz_t(), static_cast<unsigned long>(k),
                          static_cast<unsigned long>(j));
            weight[j] = w;
            weight_plus[j] = w * k;
        }
        enc.wide_code.resize(n);
        enc.wide_code_plus.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto* row = d.row(positions[i]);
            mpz_class b = 0, bp = 0;
            for (std::size_t j = 0; j < order.size(); ++j) {
                b += mpz_class(row[order[j]]) * weight[j];
                bp += mpz_class(row[order[j]]) * weight_plus[j];
            }
            enc.wide_code[i] = b;
            enc.wide_code_plus[i] = bp + d.z(positions[i]);
        }
        tally_counts_wide(enc);
    }
    return enc;
}

std::vector<int> all_positions(const Dataset& d) {
    std::vector<int> pos(d.n());
    std::iota(pos.begin(), pos.end(), 0);
    return pos;
}

// Newly matchable units per arm, without materializing groups.
std::pair<long, long> count_matchable_per_arm(const Dataset& d, const std::vector<int>& positions,
                                              const CovariateMask& mask) {
    const BitEncoding enc = encode_positions(d, positions, mask);
    long m1 = 0, m0 = 0;
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (!enc.matchable[i]) continue;
        if (d.z(positions[i])) ++m1;
        else ++m0;
    }
    return {m1, m0};
}

}  // namespace

std::uint64_t BitEncoding::b_u64(int i) const {
    if (wide) return mpz_get_ui(wide_code[i].get_mpz_t());
    return static_cast<std::uint64_t>(code[i]);
}

std::uint64_t BitEncoding::bplus_u64(int i) const {
    if (wide) return mpz_get_ui(wide_code_plus[i].get_mpz_t());
    return static_cast<std::uint64_t>(code_plus[i]);
}

BitEncoding encode_units(const Dataset& d, const CovariateMask& mask) {
    return encode_positions(d, all_positions(d), mask);
}

GroupedResult grouped_mr(const std::vector<int>& unmatched_ids, const Dataset& d,
                         const CovariateMask& mask, int iteration) {
    std::vector<int> ids = unmatched_ids;
    std::sort(ids.begin(), ids.end());

    std::vector<int> positions;
    positions.reserve(ids.size());
    for (int id : ids) {
        const int pos = d.index_of(id);
        if (pos < 0) throw ConfigError("unit id " + std::to_string(id) + " not in dataset");
        positions.push_back(pos);
    }

    const BitEncoding enc = encode_positions(d, positions, mask);
    const auto active = mask.active_indices();

    GroupedResult out;
    if (!enc.wide) {
        std::unordered_map<unsigned __int128, std::size_t, U128Hash> group_of;
        group_of.reserve(2 * positions.size());
        for (std::size_t i = 0; i < positions.size(); ++i) {
            if (!enc.matchable[i]) continue;
            auto [it, inserted] = group_of.try_emplace(enc.code[i], out.groups.size());
            if (inserted) out.groups.emplace_back();
            auto& g = out.groups[it->second];
            const int pos = positions[i];
            if (g.members.empty()) {
                g.iteration = iteration;
                g.theta = mask;
                g.signature.reserve(active.size());
                for (int j : active) g.signature.push_back(d.x(pos, j));
            }
            g.members.push_back(d.id(pos));
            ++g.n;
            if (d.z(pos)) ++g.n_instrumented;
            else ++g.n_noninstrumented;
            out.matched_ids.push_back(d.id(pos));
        }
    } else {
        std::map<mpz_class, std::size_t> group_of;
        for (std::size_t i = 0; i < positions.size(); ++i) {
            if (!enc.matchable[i]) continue;
            auto [it, inserted] = group_of.try_emplace(enc.wide_code[i], out.groups.size());
            if (inserted) out.groups.emplace_back();
            auto& g = out.groups[it->second];
            const int pos = positions[i];
            if (g.members.empty()) {
                g.iteration = iteration;
                g.theta = mask;
                g.signature.reserve(active.size());
                for (int j : active) g.signature.push_back(d.x(pos, j));
            }
            g.members.push_back(d.id(pos));
            ++g.n;
            if (d.z(pos)) ++g.n_instrumented;
            else ++g.n_noninstrumented;
            out.matched_ids.push_back(d.id(pos));
        }
    }

    // Units were visited in ascending id order, so members are sorted and
    // matched_ids only needs the cross-group merge.
    std::sort(out.matched_ids.begin(), out.matched_ids.end());
    std::sort(out.groups.begin(), out.groups.end(),
              [](const MatchedGroup& a, const MatchedGroup& b) {
                  return a.members.front() < b.members.front();
              });
    for (std::size_t g = 0; g < out.groups.size(); ++g) {
        out.groups[g].id = static_cast<int>(g);
    }
    return out;
}

double prediction_error(const Dataset& holdout, const CovariateMask& mask, double ridge) {
    if (holdout.n() == 0) throw ConfigError("prediction error undefined on empty holdout");
    if (mask.size() != holdout.p()) throw ConfigError("mask length does not match covariate count");
    if (ridge < 0.0) throw ConfigError("ridge penalty must be nonnegative");

    const auto active = mask.active_indices();
    const int n = holdout.n();
    const int cols = static_cast<int>(active.size()) + 2;  // intercept, covariates, z

    Eigen::MatrixXd X(n, cols);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        for (std::size_t j = 0; j < active.size(); ++j) {
            X(i, static_cast<int>(j) + 1) = static_cast<double>(holdout.x(i, active[j]));
        }
        X(i, cols - 1) = static_cast<double>(holdout.z(i));
        y(i) = holdout.y(i);
    }

    Eigen::VectorXd beta;
    if (ridge > 0.0) {
        Eigen::MatrixXd gram = X.transpose() * X;
        for (int k = 1; k < cols; ++k) gram(k, k) += ridge;  // intercept unpenalized
        beta = gram.ldlt().solve(X.transpose() * y);
    } else {
        beta = X.colPivHouseholderQr().solve(y);
    }
    return (y - X * beta).squaredNorm();
}

std::optional<double> balancing_factor(long available_instrumented, long available_noninstrumented,
                                       long matched_instrumented, long matched_noninstrumented) {
    if (available_instrumented < 1 || available_noninstrumented < 1) return std::nullopt;
    return static_cast<double>(matched_noninstrumented) / available_noninstrumented +
           static_cast<double>(matched_instrumented) / available_instrumented;
}

std::string to_string(StopReason r) {
    switch (r) {
        case StopReason::NotStopped: return "not stopped";
        case StopReason::AllMatched: return "all matched";
        case StopReason::NoCovariatesLeft: return "no covariates remain";
        case StopReason::InstrumentArmExhausted: return "one instrument arm exhausted";
        case StopReason::MatchQualityDegraded: return "match quality degradation";
    }
    return "unknown";
}

StopDecision check_stop(const IterationState& state, const MatchConfig& cfg, double pe_baseline) {
    if (state.unmatched_instrumented + state.unmatched_noninstrumented == 0) {
        return {true, StopReason::AllMatched};
    }
    if (state.covariates_remaining == 0) {
        return {true, StopReason::NoCovariatesLeft};
    }
    if (state.unmatched_instrumented == 0 || state.unmatched_noninstrumented == 0) {
        return {true, StopReason::InstrumentArmExhausted};
    }
    if (cfg.early_stop && state.best_candidate_pe &&
        *state.best_candidate_pe > pe_baseline * (1.0 + cfg.early_stop_inflation)) {
        return {true, StopReason::MatchQualityDegraded};
    }
    return {false, StopReason::NotStopped};
}

MatchResult flame_iv_run(const Dataset& train, const Dataset& holdout, const MatchConfig& cfg) {
    if (!(train.schema() == holdout.schema())) {
        throw ConfigError("training and holdout datasets must share a schema");
    }
    if (holdout.n() == 0) throw ConfigError("holdout must be non-empty");
    if (cfg.tradeoff_c < 0.0) throw ConfigError("tradeoff constant must be nonnegative");
    if (cfg.early_stop_inflation < 0.0) throw ConfigError("early-stop inflation must be nonnegative");

    const int p = train.p();
    CovariateMask mask = CovariateMask::all(p);

    MatchResult result;
    result.pe_baseline = prediction_error(holdout, mask, cfg.ridge);

    // Iteration 0: exact matching on every covariate.
    GroupedResult exact = grouped_mr(train.ids(), train, mask, 0);
    int next_group_id = 0;
    for (auto& g : exact.groups) {
        g.id = next_group_id++;
        result.groups.push_back(std::move(g));
    }
    std::vector<int> unmatched;
    std::set_difference(train.ids().begin(), train.ids().end(), exact.matched_ids.begin(),
                        exact.matched_ids.end(), std::back_inserter(unmatched));
    std::sort(unmatched.begin(), unmatched.end());

    for (int iteration = 1;; ++iteration) {
        long avail1 = 0, avail0 = 0;
        for (int id : unmatched) {
            if (train.z(train.index_of(id))) ++avail1;
            else ++avail0;
        }
        IterationState state{avail1, avail0, mask.popcount(), std::nullopt};
        StopDecision pre = check_stop(state, cfg, result.pe_baseline);
        if (pre.stop) {
            result.stop_reason = pre.reason;
            break;
        }

        std::vector<int> unmatched_positions;
        unmatched_positions.reserve(unmatched.size());
        for (int id : unmatched) unmatched_positions.push_back(train.index_of(id));

        const std::vector<int> candidates = mask.active_indices();
        std::vector<CandidateScore> scores(candidates.size());
        parallel_for(candidates.size(), cfg.threads, [&](std::size_t c) {
            const int j = candidates[c];
            const CovariateMask cand = mask.without(j);
            const double pe = prediction_error(holdout, cand, cfg.ridge);
            const auto [m1, m0] = count_matchable_per_arm(train, unmatched_positions, cand);
            const auto bf = balancing_factor(avail1, avail0, m1, m0);
            scores[c] = CandidateScore{j, pe, *bf, match_quality(pe, *bf, cfg.tradeoff_c)};
        });

        // Argmax MQ; ties go to the lowest covariate index. Candidates are
        // index-ascending, so the first strict improvement wins.
        std::size_t best = 0;
        for (std::size_t c = 1; c < scores.size(); ++c) {
            if (scores[c].mq > scores[best].mq) best = c;
        }

        IterationLog log_entry;
        log_entry.iteration = iteration;
        log_entry.candidates = scores;

        state.best_candidate_pe = scores[best].pe;
        StopDecision post = check_stop(state, cfg, result.pe_baseline);
        if (post.stop) {
            result.log.push_back(std::move(log_entry));
            result.stop_reason = post.reason;
            break;
        }

        const int dropped = scores[best].covariate;
        mask = mask.without(dropped);
        result.drop_sequence.push_back(dropped);
        log_entry.dropped = dropped;
        result.log.push_back(std::move(log_entry));

        GroupedResult matched = grouped_mr(unmatched, train, mask, iteration);
        for (auto& g : matched.groups) {
            g.id = next_group_id++;
            result.groups.push_back(std::move(g));
        }
        std::vector<int> remaining;
        std::set_difference(unmatched.begin(), unmatched.end(), matched.matched_ids.begin(),
                            matched.matched_ids.end(), std::back_inserter(remaining));
        unmatched = std::move(remaining);
    }

    result.unmatched_ids = std::move(unmatched);
    return result;
}

}  // namespace flameiv
