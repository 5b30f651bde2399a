#include "flameiv/oracle.hpp"

#include <algorithm>
#include <map>

#include "flameiv/errors.hpp"

namespace flameiv::oracle {

double weighted_hamming(const std::int32_t* xi, const std::int32_t* xk, int p,
                        const WeightVector& w) {
    if (static_cast<int>(w.w.size()) != p) throw ConfigError("weight vector length mismatch");
    double d = 0.0;
    for (int j = 0; j < p; ++j) {
        if (xi[j] != xk[j]) d += w.w[j];
    }
    return d;
}

double weighted_hamming(const std::vector<std::int32_t>& xi, const std::vector<std::int32_t>& xk,
                        const WeightVector& w) {
    if (xi.size() != xk.size()) throw ConfigError("covariate vector length mismatch");
    return weighted_hamming(xi.data(), xk.data(), static_cast<int>(xi.size()), w);
}

namespace {

// Lexicographic comparison with index 0 most significant.
bool lex_greater(const CovariateMask& a, const CovariateMask& b) {
    for (int j = 0; j < a.size(); ++j) {
        if (a.active[j] != b.active[j]) return a.active[j] > b.active[j];
    }
    return false;
}

}  // namespace

AmeIvSolution exhaustive_ame_iv(int unit_id, const Dataset& d, const WeightVector& w) {
    const int p = d.p();
    if (p > 20) throw ConfigError("exhaustive enumeration limited to p <= 20");
    if (static_cast<int>(w.w.size()) != p) throw ConfigError("weight vector length mismatch");
    const int i = d.index_of(unit_id);
    if (i < 0) throw ConfigError("unit id not in dataset");
    const auto* xi = d.row(i);
    const int zi = d.z(i);

    AmeIvSolution best;
    for (std::uint32_t bits = 0; bits < (1u << p); ++bits) {
        CovariateMask theta = CovariateMask::none(p);
        double weight = 0.0;
        for (int j = 0; j < p; ++j) {
            if (bits & (1u << j)) {
                theta.active[j] = 1;
                weight += w.w[j];
            }
        }
        bool feasible = false;
        for (int k = 0; k < d.n() && !feasible; ++k) {
            if (d.z(k) == zi) continue;
            const auto* xk = d.row(k);
            bool agrees = true;
            for (int j = 0; j < p && agrees; ++j) {
                if (theta.active[j] && xk[j] != xi[j]) agrees = false;
            }
            feasible = agrees;
        }
        if (!feasible) continue;
        if (!best.feasible || weight > best.weight ||
            (weight == best.weight && lex_greater(theta, best.theta))) {
            best.feasible = true;
            best.theta = theta;
            best.weight = weight;
        }
    }
    if (!best.feasible) return best;

    for (int k = 0; k < d.n(); ++k) {
        const auto* xk = d.row(k);
        bool agrees = true;
        for (int j = 0; j < p && agrees; ++j) {
            if (best.theta.active[j] && xk[j] != xi[j]) agrees = false;
        }
        if (agrees) best.group_ids.push_back(d.id(k));
    }
    std::sort(best.group_ids.begin(), best.group_ids.end());
    return best;
}

GroupedResult brute_force_match(const Dataset& d, const CovariateMask& mask, int iteration) {
    if (mask.size() != d.p()) throw ConfigError("mask length does not match covariate count");
    const auto active = mask.active_indices();

    std::map<std::vector<std::int32_t>, std::vector<int>> cells;  // masked tuple -> positions
    for (int i = 0; i < d.n(); ++i) {
        std::vector<std::int32_t> key;
        key.reserve(active.size());
        for (int j : active) key.push_back(d.x(i, j));
        cells[std::move(key)].push_back(i);
    }

    GroupedResult out;
    for (const auto& [key, positions] : cells) {
        int n1 = 0, n0 = 0;
        for (int i : positions) {
            if (d.z(i)) ++n1;
            else ++n0;
        }
        if (n1 < 1 || n0 < 1) continue;
        MatchedGroup g;
        g.iteration = iteration;
        g.theta = mask;
        g.signature = key;
        for (int i : positions) g.members.push_back(d.id(i));
        std::sort(g.members.begin(), g.members.end());
        g.n = n1 + n0;
        g.n_instrumented = n1;
        g.n_noninstrumented = n0;
        out.matched_ids.insert(out.matched_ids.end(), g.members.begin(), g.members.end());
        out.groups.push_back(std::move(g));
    }
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

}  // namespace flameiv::oracle
