#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "flameiv/errors.hpp"
#include "flameiv/estimators.hpp"
#include "flameiv/matcher.hpp"
#include "flameiv/oracle.hpp"
#include "test_support.hpp"

using namespace flameiv;

namespace {

// One matched group over the whole dataset.
MatchedGroup whole_group(const Dataset& d, int id = 0) {
    MatchedGroup g;
    g.id = id;
    g.theta = CovariateMask::none(d.p());
    for (int i = 0; i < d.n(); ++i) {
        g.members.push_back(d.id(i));
        ++g.n;
        if (d.z(i)) ++g.n_instrumented;
        else ++g.n_noninstrumented;
    }
    return g;
}

Dataset dataset_from(std::vector<std::uint8_t> z, std::vector<double> t, std::vector<double> y) {
    const int n = static_cast<int>(z.size());
    CovariateSchema schema{{"a"}, {2}};
    return Dataset(schema, std::vector<std::int32_t>(n, 0), std::move(z), std::move(t),
                   std::move(y));
}

}  // namespace

TEST_CASE("group_itt hand-computed effects") {
    // z=(1,1,0,0), y=(3,5,1,1), t=(1,0,0,0): ITT_y = 3, ITT_t = 0.5.
    const Dataset d = dataset_from({1, 1, 0, 0}, {1, 0, 0, 0}, {3, 5, 1, 1});
    const auto e = group_itt(whole_group(d), d);
    CHECK(e.itt_y == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(e.itt_t == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(e.n == 4);
    CHECK(e.n_instrumented == 2);
    CHECK(e.n_noninstrumented == 2);
}

TEST_CASE("group_itt identity and symmetry cases") {
    // y = z and t = z gives (1, 1).
    const Dataset d1 = dataset_from({1, 0, 1, 0}, {1, 0, 1, 0}, {1, 0, 1, 0});
    const auto e1 = group_itt(whole_group(d1), d1);
    CHECK(e1.itt_y == doctest::Approx(1.0));
    CHECK(e1.itt_t == doctest::Approx(1.0));

    // Constant outcome gives ITT_y = 0.
    const Dataset d2 = dataset_from({1, 0, 1, 0}, {1, 0, 0, 0}, {7, 7, 7, 7});
    CHECK(group_itt(whole_group(d2), d2).itt_y == doctest::Approx(0.0));
}

TEST_CASE("group_itt rejects single-arm groups") {
    const Dataset d = dataset_from({1, 1}, {1, 0}, {3, 4});
    CHECK_THROWS_AS(group_itt(whole_group(d), d), ConfigError);
}

TEST_CASE("late_pooled weighted ratio") {
    GroupEffect a;
    a.n = 4;
    a.itt_y = 3.0;
    a.itt_t = 0.5;
    GroupEffect b;
    b.n = 4;
    b.itt_y = 1.0;
    b.itt_t = 1.0;
    CHECK(late_pooled({a, b}) == doctest::Approx(16.0 / 6.0).epsilon(1e-12));

    // Single group reduces to the Wald ratio.
    CHECK(late_pooled({a}) == doctest::Approx(6.0).epsilon(1e-12));

    GroupEffect zero = a;
    zero.itt_t = -0.5;
    CHECK_THROWS_AS(late_pooled({a, zero}), WeakInstrumentError);
}

TEST_CASE("late_group Wald ratio and uptake exclusion") {
    GroupEffect e;
    e.itt_y = 3.0;
    e.itt_t = 0.5;
    REQUIRE(late_group(e).has_value());
    CHECK(*late_group(e) == doctest::Approx(6.0));

    e.itt_t = 0.0;
    CHECK_FALSE(late_group(e).has_value());
}

TEST_CASE("variance_report matches the 8-unit hand fixture") {
    // z=(1,1,1,1,0,0,0,0), y=(4,6,5,5,1,1,2,0), t=(1,1,0,1,0,0,0,0):
    //   s2_1 = s2_0 = 2/3, r2_1 = 1/4, cov = 0,
    //   ITT_y = 4, ITT_t = 3/4, lambda = 16/3, sigma^2 = 304/81.
    const Dataset d = dataset_from({1, 1, 1, 1, 0, 0, 0, 0}, {1, 1, 0, 1, 0, 0, 0, 0},
                                   {4, 6, 5, 5, 1, 1, 2, 0});
    const auto e = group_itt(whole_group(d), d);
    CHECK(e.s2_y1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(e.s2_y0 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(e.r2_t1 == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(e.cov_yt == doctest::Approx(0.0).epsilon(1e-12));

    const auto vr = variance_report({e}, 8);
    CHECK(vr.pooled_itt_y == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(vr.pooled_itt_t == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(vr.var_itt_y == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(vr.var_itt_t == doctest::Approx(1.0 / 16.0).epsilon(1e-12));
    CHECK(vr.sigma_sq == doctest::Approx(304.0 / 81.0).epsilon(1e-12));

    CHECK(late_pooled({e}) == doctest::Approx(16.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("variance_report degenerate treatment variance") {
    // t identical to z in both groups: r2 and cov vanish, so
    // sigma^2 = Var(ITT_y) / ITT_t^2.
    const Dataset d = dataset_from({1, 1, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0},
                                   {1, 1, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0},
                                   {4, 6, 5, 1, 1, 2, 8, 9, 10, 3, 3, 4});
    MatchedGroup g1, g2;
    g1.id = 0;
    g2.id = 1;
    for (int i = 0; i < 6; ++i) g1.members.push_back(i);
    for (int i = 6; i < 12; ++i) g2.members.push_back(i);
    for (auto* g : {&g1, &g2}) {
        g->n = 6;
        g->n_instrumented = 3;
        g->n_noninstrumented = 3;
    }
    const auto e1 = group_itt(g1, d);
    const auto e2 = group_itt(g2, d);
    const auto vr = variance_report({e1, e2}, 12);
    CHECK(vr.var_itt_t == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(vr.cov == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(vr.sigma_sq ==
          doctest::Approx(vr.var_itt_y / (vr.pooled_itt_t * vr.pooled_itt_t)).epsilon(1e-12));
}

TEST_CASE("variance_report flags small arms but keeps them in the estimate") {
    const Dataset d = dataset_from({1, 0, 1, 1, 0, 0}, {1, 0, 1, 0, 0, 0}, {5, 1, 6, 4, 2, 1});
    MatchedGroup small, big;
    small.id = 0;
    small.members = {0, 1};
    small.n = 2;
    small.n_instrumented = 1;
    small.n_noninstrumented = 1;
    big.id = 1;
    big.members = {2, 3, 4, 5};
    big.n = 4;
    big.n_instrumented = 2;
    big.n_noninstrumented = 2;

    const auto es = group_itt(small, d);
    const auto eb = group_itt(big, d);
    CHECK_FALSE(es.variance_ok);
    CHECK(eb.variance_ok);

    const auto vr = variance_report({es, eb}, 6);
    CHECK(vr.flagged == std::vector<int>{0});
    // Pooled means still include the flagged group.
    CHECK(vr.pooled_itt_y ==
          doctest::Approx((2.0 * es.itt_y + 4.0 * eb.itt_y) / 6.0).epsilon(1e-12));
}

TEST_CASE("confidence_interval quantile arithmetic") {
    const auto degenerate = confidence_interval(3.5, 0.0, 0.05);
    CHECK(degenerate.first == doctest::Approx(3.5));
    CHECK(degenerate.second == doctest::Approx(3.5));

    const auto ci = confidence_interval(10.0, 0.22 * 0.22, 0.05);
    CHECK(ci.first == doctest::Approx(9.568807923401188).epsilon(1e-9));
    CHECK(ci.second == doctest::Approx(10.431192076598812).epsilon(1e-9));

    // Wider level nests inside the narrower one.
    const auto ci90 = confidence_interval(10.0, 0.22 * 0.22, 0.10);
    CHECK(ci90.first > ci.first);
    CHECK(ci90.second < ci.second);

    CHECK_THROWS_AS(confidence_interval(0.0, -1.0, 0.05), ConfigError);
    CHECK_THROWS_AS(confidence_interval(0.0, 1.0, 0.0), ConfigError);
}

TEST_CASE("scale equivariance and relabeling antisymmetry") {
    std::mt19937_64 gen(123);
    for (int rep = 0; rep < 1000; ++rep) {
        const int n1 = 2 + static_cast<int>(gen() % 5);
        const int n0 = 2 + static_cast<int>(gen() % 5);
        std::vector<std::uint8_t> z;
        std::vector<double> t, y;
        for (int i = 0; i < n1 + n0; ++i) {
            z.push_back(i < n1 ? 1 : 0);
            t.push_back(static_cast<double>(gen() % 4));
            y.push_back(static_cast<double>(gen() % 1000) / 50.0 - 10.0);
        }
        const Dataset d = dataset_from(z, t, y);
        const auto e = group_itt(whole_group(d), d);

        const double c = 0.5 + static_cast<double>(gen() % 100) / 10.0;
        std::vector<double> yc;
        for (double v : y) yc.push_back(c * v);
        const Dataset dc = dataset_from(z, t, yc);
        const auto ec = group_itt(whole_group(dc), dc);

        CHECK(ec.itt_y == doctest::Approx(c * e.itt_y).epsilon(1e-9));
        CHECK(ec.itt_t == doctest::Approx(e.itt_t).epsilon(1e-12));
        if (e.itt_t != 0.0) {
            CHECK(*late_group(ec) == doctest::Approx(c * *late_group(e)).epsilon(1e-9));
            const auto vr = variance_report({e}, e.n);
            const auto vrc = variance_report({ec}, ec.n);
            CHECK(vrc.sigma_sq == doctest::Approx(c * c * vr.sigma_sq).epsilon(1e-9));
            CHECK(vrc.var_itt_y == doctest::Approx(c * c * vr.var_itt_y).epsilon(1e-9));
        }

        // Swapping the instrument labels negates both ITTs and fixes the ratio.
        std::vector<std::uint8_t> zswap;
        for (auto v : z) zswap.push_back(v ? 0 : 1);
        const Dataset ds = dataset_from(zswap, t, y);
        const auto es = group_itt(whole_group(ds), ds);
        CHECK(es.itt_y == doctest::Approx(-e.itt_y).epsilon(1e-9));
        CHECK(es.itt_t == doctest::Approx(-e.itt_t).epsilon(1e-9));
        if (e.itt_t != 0.0) {
            CHECK(*late_group(es) == doctest::Approx(*late_group(e)).epsilon(1e-9));
        }

        // All variance terms are nonnegative.
        CHECK(e.s2_y1 >= 0.0);
        CHECK(e.s2_y0 >= 0.0);
        CHECK(e.r2_t1 >= 0.0);
        if (e.itt_t != 0.0) {
            CHECK(variance_report({e}, e.n).sigma_sq >= 0.0);
        }
    }
}

TEST_CASE("single-group pooled estimate equals the group ratio") {
    std::mt19937_64 gen(321);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<std::uint8_t> z{1, 1, 1, 0, 0, 0};
        std::vector<double> t, y;
        for (int i = 0; i < 6; ++i) {
            t.push_back(static_cast<double>(gen() % 3) + (i < 3 ? 1.0 : 0.0));
            y.push_back(static_cast<double>(gen() % 100) / 10.0);
        }
        const Dataset d = dataset_from(z, t, y);
        const auto e = group_itt(whole_group(d), d);
        if (e.itt_t == 0.0) continue;
        CHECK(late_pooled({e}) == doctest::Approx(*late_group(e)).epsilon(1e-12));
    }
}

TEST_CASE("estimate_pooled strict mode excludes groups without uptake contrast") {
    // Group 1 has treated and control units; group 0 has no treated units.
    const Dataset d = dataset_from({1, 0, 1, 0, 1, 0, 1, 0}, {0, 0, 0, 0, 2, 0, 1, 0},
                                   {1, 2, 0, 1, 9, 2, 8, 1});
    MatchedGroup g0, g1;
    g0.id = 0;
    g0.members = {0, 1, 2, 3};
    g0.n = 4;
    g0.n_instrumented = 2;
    g0.n_noninstrumented = 2;
    g1.id = 1;
    g1.members = {4, 5, 6, 7};
    g1.n = 4;
    g1.n_instrumented = 2;
    g1.n_noninstrumented = 2;

    EstimateConfig strict;
    strict.strict_treatment_filter = true;
    const auto est = estimate_pooled({g0, g1}, d, strict);
    CHECK(est.groups_used == std::vector<int>{1});
    REQUIRE(est.excluded.size() == 1);
    CHECK(est.excluded[0].group_id == 0);
    CHECK(est.excluded[0].reason == "no treated units");
    CHECK(est.n_used == 4);

    // Excluded units contribute nothing: the estimate equals group 1 alone.
    const auto only = estimate_pooled({g1}, d, EstimateConfig{});
    CHECK(est.lambda_hat == doctest::Approx(only.lambda_hat).epsilon(1e-12));
    CHECK(est.sigma_sq == doctest::Approx(only.sigma_sq).epsilon(1e-12));

    // Without strict mode both groups enter.
    const auto loose = estimate_pooled({g0, g1}, d, EstimateConfig{});
    CHECK(loose.groups_used == std::vector<int>{0, 1});
}

TEST_CASE("estimate_pooled weak instrument is a distinct error") {
    const Dataset d = dataset_from({1, 0, 1, 0}, {0, 0, 0, 0}, {1, 2, 3, 4});
    CHECK_THROWS_AS(estimate_pooled({whole_group(d)}, d, EstimateConfig{}), WeakInstrumentError);
}
