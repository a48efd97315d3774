#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "thintime/tree.hpp"

using namespace thintime;
using thintime::testing::Rng;

namespace {

template <typename F>
void require_error(F&& f, ErrorKind kind) {
    try {
        f();
        FAIL("expected an Error, none thrown");
    } catch (const Error& e) {
        REQUIRE(e.kind() == kind);
    }
}

RawProcess spread_to_leaves(const TreeModel& tree, const AdaptedProcess& p) {
    RawProcess raw = RawProcess::zeros(tree.n_leaves(), tree.depth());
    for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf)
        for (int t = 0; t <= tree.depth(); ++t) raw(leaf, t) = p.at[static_cast<std::size_t>(t)][tree.node_of(leaf, t)];
    return raw;
}

StoppingTimeMap random_stopping_time(Rng& rng, const TreeModel& tree) {
    auto seq = thintime::testing::random_exhausting(rng, tree, 1);
    return seq.times[0];
}

}  // namespace

TEST_CASE("build_tree: coin examples") {
    const TreeModel t1 = build_uniform_tree(1, {0.5, 0.5});
    REQUIRE(t1.n_leaves() == 2);
    REQUIRE(t1.leaf_prob(0) == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(t1.leaf_prob(1) == Catch::Approx(0.5).margin(1e-15));

    const TreeModel t2 = build_uniform_tree(2, {0.5, 0.5});
    REQUIRE(t2.n_leaves() == 4);
    for (std::size_t leaf = 0; leaf < 4; ++leaf) REQUIRE(t2.leaf_prob(leaf) == Catch::Approx(0.25).margin(1e-15));
}

TEST_CASE("build_tree: probabilities multiply along paths") {
    std::vector<LevelBranching> spec;
    spec.push_back({{0.3, 0.7}});
    spec.push_back({{0.5, 0.5}});
    const TreeModel tree = build_tree(spec);
    const double expected[4] = {0.3 * 0.5, 0.3 * 0.5, 0.7 * 0.5, 0.7 * 0.5};
    for (std::size_t leaf = 0; leaf < 4; ++leaf)
        REQUIRE(tree.leaf_prob(leaf) == Catch::Approx(expected[leaf]).margin(1e-15));
}

TEST_CASE("build_tree: node counts equal prefix counts and errors fire") {
    const TreeModel tree = build_tree({{{0.2, 0.3, 0.5}}, {{0.5, 0.5}}});
    REQUIRE(tree.n_nodes(0) == 1);
    REQUIRE(tree.n_nodes(1) == 3);
    REQUIRE(tree.n_nodes(2) == 6);
    double total = 0.0;
    for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf) {
        REQUIRE(tree.leaf_prob(leaf) > 0.0);
        total += tree.leaf_prob(leaf);
    }
    REQUIRE(std::abs(total - 1.0) <= 1e-12);

    require_error([] { build_tree({}); }, ErrorKind::DepthZero);
    require_error([] { build_uniform_tree(1, {0.0, 1.0}); }, ErrorKind::NonPositiveProbability);
    require_error([] { build_uniform_tree(1, {0.4, 0.4}); }, ErrorKind::ProbabilitySumMismatch);
}

TEST_CASE("conditional_expectation: constants, terminal time, enumerated example") {
    const TreeModel tree = build_uniform_tree(2, {0.5, 0.5});

    RandomVariable c;
    c.values.assign(4, 3.25);
    for (int t = 0; t <= 2; ++t)
        for (double v : conditional_expectation(tree, c, t)) REQUIRE(v == Catch::Approx(3.25).margin(1e-15));

    // x = indicator of {second coin = H} (branch 0 at the second step)
    RandomVariable x;
    x.values = {1.0, 0.0, 1.0, 0.0};
    const auto at1 = conditional_expectation(tree, x, 1);
    REQUIRE(at1.size() == 2);
    REQUIRE(at1[0] == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(at1[1] == Catch::Approx(0.5).margin(1e-15));

    const auto at2 = conditional_expectation(tree, x, 2);
    for (std::size_t leaf = 0; leaf < 4; ++leaf) REQUIRE(at2[leaf] == x.values[leaf]);

    require_error([&] { conditional_expectation(tree, x, 3); }, ErrorKind::TimeOutOfRange);
    require_error([&] { conditional_expectation(tree, x, -1); }, ErrorKind::TimeOutOfRange);
    RandomVariable bad;
    bad.values.assign(3, 0.0);
    require_error([&] { conditional_expectation(tree, bad, 1); }, ErrorKind::ShapeMismatch);
}

TEST_CASE("conditional_expectation: tower property on randomized trees") {
    Rng rng(20240401);
    for (int rep = 0; rep < 50; ++rep) {
        const TreeModel tree = thintime::testing::random_tree(rng, 6);
        const RandomVariable x = thintime::testing::random_leaf_variable(rng, tree);
        const int t = std::uniform_int_distribution<int>(0, tree.depth())(rng);
        const int s = std::uniform_int_distribution<int>(0, t)(rng);
        const auto inner = conditional_expectation(tree, x, t);
        RandomVariable extended;
        extended.values.resize(tree.n_leaves());
        for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf)
            extended.values[leaf] = inner[tree.node_of(leaf, t)];
        const auto lhs = conditional_expectation(tree, extended, s);
        const auto rhs = conditional_expectation(tree, x, s);
        for (std::size_t j = 0; j < lhs.size(); ++j) REQUIRE(std::abs(lhs[j] - rhs[j]) <= 1e-12);
    }
}

TEST_CASE("optional_projection: adapted input unchanged, constants, S1 survival") {
    const TreeModel tree = build_uniform_tree(2, {0.5, 0.5});

    Rng rng(7);
    const AdaptedProcess mart = martingale_closure(tree, thintime::testing::random_leaf_variable(rng, tree));
    const RawProcess adapted = spread_to_leaves(tree, mart);
    const AdaptedProcess proj = optional_projection(tree, adapted);
    for (int t = 0; t <= 2; ++t)
        for (std::size_t j = 0; j < tree.n_nodes(t); ++j)
            REQUIRE(proj.at[static_cast<std::size_t>(t)][j] ==
                    Catch::Approx(mart.at[static_cast<std::size_t>(t)][j]).margin(1e-12));

    RawProcess ones = RawProcess::zeros(4, 2);
    for (auto& v : ones.v) v = 1.0;
    const AdaptedProcess pone = optional_projection(tree, ones);
    for (const auto& slice : pone.at)
        for (double v : slice) REQUIRE(v == Catch::Approx(1.0).margin(1e-15));

    // A = 1_{[[tau, inf[[} with tau = 1 on {second coin = H}, else inf.
    RawProcess A = RawProcess::zeros(4, 2);
    const int tau[4] = {1, kTimeInf, 1, kTimeInf};
    for (std::size_t leaf = 0; leaf < 4; ++leaf)
        for (int t = 0; t <= 2; ++t) A(leaf, t) = tau[leaf] <= t ? 1.0 : 0.0;
    const AdaptedProcess pa = optional_projection(tree, A);
    REQUIRE(pa.at[1][0] == Catch::Approx(0.5).margin(1e-15));  // 1 - Z_1
    REQUIRE(pa.at[1][1] == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("optional_projection: defining identity at random stopping times") {
    Rng rng(99);
    for (int rep = 0; rep < 40; ++rep) {
        const TreeModel tree = thintime::testing::random_tree(rng, 6);
        RawProcess raw = RawProcess::zeros(tree.n_leaves(), tree.depth());
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (auto& v : raw.v) v = u(rng);
        const AdaptedProcess proj = optional_projection(tree, raw);
        const StoppingTimeMap T = random_stopping_time(rng, tree);
        validate_stopping_time(tree, T);

        // E[X_T 1_{T<inf} | F_T] computed atom-wise over time-s node spans.
        for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf) {
            const int s = T.time[leaf];
            if (s == kTimeInf) continue;
            const TreeNode& nd = tree.node(s, tree.node_of(leaf, s));
            double num = 0.0;
            for (std::size_t w = nd.leaf_begin; w < nd.leaf_end; ++w) num += tree.leaf_prob(w) * raw(w, s);
            const double lhs = num / nd.prob;
            const double rhs = proj.at[static_cast<std::size_t>(s)][tree.node_of(leaf, s)];
            REQUIRE(std::abs(lhs - rhs) <= 1e-12);
        }
    }
}

TEST_CASE("projections are linear and positivity-preserving") {
    Rng rng(4242);
    const TreeModel tree = thintime::testing::random_tree(rng, 5);
    RawProcess a = RawProcess::zeros(tree.n_leaves(), tree.depth());
    RawProcess b = RawProcess::zeros(tree.n_leaves(), tree.depth());
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (auto& v : a.v) v = u(rng);
    for (auto& v : b.v) v = u(rng);
    RawProcess combo = a;
    for (std::size_t i = 0; i < combo.v.size(); ++i) combo.v[i] = 2.0 * a.v[i] - 0.5 * b.v[i];

    const AdaptedProcess pa = optional_projection(tree, a);
    const AdaptedProcess pb = optional_projection(tree, b);
    const AdaptedProcess pc = optional_projection(tree, combo);
    for (int t = 0; t <= tree.depth(); ++t)
        for (std::size_t j = 0; j < tree.n_nodes(t); ++j) {
            const auto tt = static_cast<std::size_t>(t);
            REQUIRE(std::abs(pc.at[tt][j] - (2.0 * pa.at[tt][j] - 0.5 * pb.at[tt][j])) <= 1e-12);
            REQUIRE(pa.at[tt][j] >= -1e-15);  // positivity on nonnegative input
        }
}

TEST_CASE("dual_optional_projection: fixed points, S1 increment, duality basis") {
    const TreeModel tree = build_uniform_tree(2, {0.5, 0.5});

    // adapted increasing process is its own dual projection
    AdaptedProcess inc;
    inc.at = {{0.0}, {0.25, 0.5}, {0.5, 1.0, 0.75, 1.25}};
    inc.pre0 = 0.0;
    const RawProcess raw_inc = spread_to_leaves(tree, inc);
    const AdaptedProcess self = dual_optional_projection(tree, raw_inc);
    for (int t = 0; t <= 2; ++t)
        for (std::size_t j = 0; j < tree.n_nodes(t); ++j)
            REQUIRE(self.at[static_cast<std::size_t>(t)][j] ==
                    Catch::Approx(inc.at[static_cast<std::size_t>(t)][j]).margin(1e-12));

    // A for S1: increment 0.5 at t=1 at both nodes
    RawProcess A = RawProcess::zeros(4, 2);
    const int tau[4] = {1, kTimeInf, 1, kTimeInf};
    for (std::size_t leaf = 0; leaf < 4; ++leaf)
        for (int t = 0; t <= 2; ++t) A(leaf, t) = tau[leaf] <= t ? 1.0 : 0.0;
    const AdaptedProcess Ao = dual_optional_projection(tree, A);
    REQUIRE(Ao.at[0][0] == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(Ao.at[1][0] == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(Ao.at[1][1] == Catch::Approx(0.5).margin(1e-15));

    const RawProcess zero = RawProcess::zeros(4, 2);
    const AdaptedProcess pz = dual_optional_projection(tree, zero);
    for (const auto& slice : pz.at)
        for (double v : slice) REQUIRE(v == 0.0);

    RawProcess bad = RawProcess::zeros(4, 2);
    bad(0, 0) = 1.0;
    bad(0, 1) = 0.5;  // decreasing
    require_error([&] { dual_optional_projection(tree, bad); }, ErrorKind::NotIncreasing);
}

TEST_CASE("dual_optional_projection: duality against every node indicator") {
    Rng rng(1234);
    for (int rep = 0; rep < 25; ++rep) {
        const TreeModel tree = thintime::testing::random_tree(rng, 5);
        RawProcess raw = RawProcess::zeros(tree.n_leaves(), tree.depth());
        std::uniform_real_distribution<double> u(0.0, 0.5);
        for (std::size_t leaf = 0; leaf < tree.n_leaves(); ++leaf) {
            double acc = u(rng);  // jump at 0 allowed
            raw(leaf, 0) = acc;
            for (int t = 1; t <= tree.depth(); ++t) {
                acc += u(rng);
                raw(leaf, t) = acc;
            }
        }
        const AdaptedProcess dual = dual_optional_projection(tree, raw);

        for (int t0 = 0; t0 <= tree.depth(); ++t0) {
            for (std::size_t j = 0; j < tree.n_nodes(t0); ++j) {
                const TreeNode& nd = tree.node(t0, j);
                double lhs = 0.0, rhs = 0.0;
                for (std::size_t leaf = nd.leaf_begin; leaf < nd.leaf_end; ++leaf) {
                    const double dv = t0 == 0 ? raw(leaf, 0) : raw(leaf, t0) - raw(leaf, t0 - 1);
                    const double dvo = t0 == 0 ? dual.at[0][tree.node_of(leaf, 0)]
                                               : dual.at[static_cast<std::size_t>(t0)][tree.node_of(leaf, t0)] -
                                                     dual.at[static_cast<std::size_t>(t0) - 1][tree.node_of(leaf, t0 - 1)];
                    lhs += tree.leaf_prob(leaf) * dv;
                    rhs += tree.leaf_prob(leaf) * dvo;
                }
                REQUIRE(std::abs(lhs - rhs) <= 1e-12);
            }
        }
    }
}

TEST_CASE("check_martingale: closures pass, running maximum fails") {
    Rng rng(31337);
    const TreeModel tree = thintime::testing::random_tree(rng, 6);
    const AdaptedProcess mart = martingale_closure(tree, thintime::testing::random_leaf_variable(rng, tree));
    REQUIRE(check_martingale(tree, mart).max_residual <= 1e-12);

    AdaptedProcess runmax = mart;
    for (int t = 1; t <= tree.depth(); ++t)
        for (std::size_t j = 0; j < tree.n_nodes(t); ++j) {
            const auto tt = static_cast<std::size_t>(t);
            runmax.at[tt][j] = std::max(runmax.at[tt][j], runmax.at[tt - 1][tree.node(t, j).parent]);
        }
    // a running maximum of a non-constant martingale is a strict submartingale somewhere
    REQUIRE(check_martingale(tree, runmax).max_residual > 1e-10);
}

TEST_CASE("stopping time validation rejects non-cylinder sets") {
    const TreeModel tree = build_uniform_tree(2, {0.5, 0.5});
    StoppingTimeMap good;
    good.time = {1, 1, 2, 2};  // depends on the first coin only
    validate_stopping_time(tree, good);

    StoppingTimeMap bad;
    bad.time = {1, kTimeInf, 1, kTimeInf};  // {T=1} depends on the second coin
    require_error([&] { validate_stopping_time(tree, bad); }, ErrorKind::ShapeMismatch);
}
