#include "adaptree/ensemble.hpp"
#include "adaptree/engine.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace adaptree;
using namespace adaptree::test;

namespace {

EnsembleMeta rf_meta(int n_estimators, int n_classes, int depth) {
    EnsembleMeta m;
    m.kind = ModelKind::RandomForest;
    m.n_estimators = n_estimators;
    m.n_classes = n_classes;
    m.max_depth = depth;
    m.n_features = 1;
    return m;
}

LogicalTree stump3() {
    return LogicalTree::split(0, 1.5, LogicalTree::leaf({1, 0, 0}), LogicalTree::leaf({0, 0.5, 0.5}));
}

bool has_rule(const std::vector<Violation>& v, const char* rule) {
    return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.rule == rule; });
}

// Subtree size by walking the layout, independent of the builder.
int subtree_size(const FlatEnsemble<double>& flat, int node) {
    const auto& rec = flat.nodes[static_cast<std::size_t>(node)];
    if (rec.is_leaf()) return 1;
    return 1 + subtree_size(flat, node + 1) + subtree_size(flat, node + rec.right);
}

} // namespace

TEST_CASE("stump flattens in pre-order") {
    const std::vector<LogicalTree> trees{stump3()};
    const auto flat = build_flat(trees, rf_meta(1, 3, 1), false);
    REQUIRE(flat.n_nodes() == 3);
    CHECK(flat.nodes[0] == NodeRecord<double>{0, 1.5, 2});
    CHECK(flat.nodes[1].fidx == -2);
    CHECK(flat.nodes[1].right == 0);
    CHECK(flat.nodes[2].fidx == -2);
    CHECK(flat.nodes[2].right == 1);
    CHECK(flat.roots == std::vector<std::int32_t>{0});
    CHECK(flat.leaves.rows() == 2);
    CHECK(flat.leaves.row(1).isApprox(Eigen::RowVector3d(0, 0.5, 0.5)));
    CHECK(validate(flat).empty());
}

TEST_CASE("leaf-only tree is one sentinel record") {
    const std::vector<LogicalTree> trees{LogicalTree::leaf({0.2, 0.3, 0.5})};
    const auto flat = build_flat(trees, rf_meta(1, 3, 1), false);
    REQUIRE(flat.n_nodes() == 1);
    CHECK(flat.nodes[0].fidx == kLeafSentinel);
    CHECK(flat.nodes[0].right == 0);
    CHECK(flat.roots == std::vector<std::int32_t>{0});
    CHECK(validate(flat).empty());
}

TEST_CASE("two stumps give roots 0 and 3") {
    const std::vector<LogicalTree> trees{stump3(), stump3()};
    const auto flat = build_flat(trees, rf_meta(2, 3, 1), false);
    CHECK(flat.roots == std::vector<std::int32_t>{0, 3});
    CHECK(flat.n_nodes() == 6);
    CHECK(validate(flat).empty());
}

TEST_CASE("build_flat rejects inconsistent input") {
    SUBCASE("arity mismatch") {
        const std::vector<LogicalTree> trees{LogicalTree::leaf({0.5, 0.5})};
        CHECK_THROWS_AS(build_flat(trees, rf_meta(1, 3, 1), false), Error);
    }
    SUBCASE("too deep") {
        const std::vector<LogicalTree> trees{LogicalTree::split(0, 0.0, stump3(), stump3())};
        CHECK_THROWS_AS(build_flat(trees, rf_meta(1, 3, 1), false), Error);
    }
    SUBCASE("folding multi-class leaves") {
        const std::vector<LogicalTree> trees{stump3()};
        CHECK_THROWS_AS(build_flat(trees, rf_meta(1, 3, 1), true), Error);
    }
    SUBCASE("tree count") {
        const std::vector<LogicalTree> trees{stump3()};
        CHECK_THROWS_AS(build_flat(trees, rf_meta(2, 3, 1), false), Error);
    }
}

TEST_CASE("folding stores the single leaf value in alpha") {
    const std::vector<LogicalTree> trees{
        LogicalTree::split(0, 2.0, LogicalTree::leaf({0.25}), LogicalTree::leaf({0.75}))};
    const auto flat = build_flat(trees, rf_meta(1, 2, 1), true);
    CHECK(flat.folded);
    CHECK(flat.leaves.size() == 0);
    CHECK(flat.nodes[1].alpha == 0.25);
    CHECK(flat.nodes[2].alpha == 0.75);
    CHECK(validate(flat).empty());
}

TEST_CASE("validate reports layout violations") {
    const std::vector<LogicalTree> trees{stump3()};
    auto flat = build_flat(trees, rf_meta(1, 3, 1), false);
    SUBCASE("right offset") {
        flat.nodes[0].right = 1;
        CHECK(has_rule(validate(flat), rules::kRightOffset));
    }
    SUBCASE("leaf row") {
        flat.nodes[2].right = 2;
        const auto v = validate(flat);
        REQUIRE(has_rule(v, rules::kLeafRow));
        CHECK(v.front().index == 2);
    }
    SUBCASE("roots") {
        flat.roots = {1};
        CHECK(has_rule(validate(flat), rules::kRootsOrder));
    }
    SUBCASE("feature") {
        flat.nodes[0].fidx = 5;
        CHECK(has_rule(validate(flat), rules::kBadFeature));
    }
}

TEST_CASE("flattening round-trips through unflatten") {
    Rng rng(11);
    for (int i = 0; i < 50; ++i) {
        const EnsembleShape s{i % 2 ? ModelKind::GradientBoosting : ModelKind::RandomForest, uniform_int(rng, 1, 5),
                              uniform_int(rng, 2, 4), uniform_int(rng, 1, 5), 3};
        const auto model = random_ensemble(rng, s);
        const bool fold = model.meta.natural_leaf_arity() == 1 && i % 3 == 0;
        const auto flat = build_flat(model, fold);
        REQUIRE(validate(flat).empty());
        CHECK(build_flat(unflatten(flat), fold) == flat);
    }
}

TEST_CASE("pre-order property holds for random trees") {
    Rng rng(12);
    for (int i = 0; i < 100; ++i) {
        const auto model = random_ensemble(rng, {ModelKind::RandomForest, 3, 3, uniform_int(rng, 1, 7), 4});
        const auto flat = build_flat(model, false);
        for (int t = 0; t < flat.n_trees(); ++t) {
            const auto [begin, end] = flat.tree_span(t);
            CHECK(subtree_size(flat, begin) == end - begin);
            CHECK(end - begin == model.trees[static_cast<std::size_t>(t)].node_count());
            for (int n = begin; n < end; ++n) {
                const auto& rec = flat.nodes[static_cast<std::size_t>(n)];
                if (!rec.is_leaf()) CHECK(subtree_size(flat, n + 1) == rec.right - 1);
            }
        }
    }
}

TEST_CASE("flat evaluation equals recursive evaluation") {
    Rng rng(13);
    for (int i = 0; i < 200; ++i) {
        const auto model = random_ensemble(rng, {ModelKind::RandomForest, 1, 3, uniform_int(rng, 1, 6), 3});
        const auto flat = build_flat(model, false);
        const Eigen::VectorXd x = random_real_input(rng, 3);
        const auto r = eval_tree<double>(flat, 0, x);
        const auto& expected = evaluate(model.trees[0], x);
        const Eigen::VectorXd got = flat.leaf_values(r.leaf_node);
        for (std::size_t c = 0; c < expected.size(); ++c) CHECK(got(static_cast<Eigen::Index>(c)) == expected[c]);
    }
}

TEST_CASE("permute and truncate estimators") {
    Rng rng(14);
    const auto model = random_ensemble(rng, {ModelKind::GradientBoosting, 4, 3, 3, 3});
    const auto flat = build_flat(model, true);
    const std::vector<int> order{2, 0, 3, 1};
    const auto permuted = permute_estimators(flat, std::span<const int>(order));
    CHECK(validate(permuted).empty());
    // Estimator 2's three trees come first, in class order.
    for (int k = 0; k < 3; ++k) {
        const auto [b0, e0] = flat.tree_span(2 * 3 + k);
        const auto [b1, e1] = permuted.tree_span(k);
        CHECK(std::equal(flat.nodes.begin() + b0, flat.nodes.begin() + e0, permuted.nodes.begin() + b1,
                         permuted.nodes.begin() + e1));
    }
    const std::vector<int> bad{0, 0, 1, 2};
    CHECK_THROWS_AS(permute_estimators(flat, std::span<const int>(bad)), Error);

    const auto cut = truncate_estimators(build_flat(model, false), 2);
    CHECK(cut.n_trees() == 6);
    CHECK(validate(cut).empty());
    CHECK_THROWS_AS(truncate_estimators(flat, 0), Error);
}

TEST_CASE("plan_memory priority order") {
    MemorySizes s;
    s.input = 1000;
    s.accumulator = 500;
    s.roots = 500;
    SUBCASE("leaves first") {
        s.nodes = 100000;
        s.leaves = 30000;
        const auto plan = plan_memory(s, 65536);
        CHECK(plan.leaves == MemoryLevel::L1);
        CHECK(plan.nodes == MemoryLevel::L2);
        CHECK(plan.l1_used == 32000);
    }
    SUBCASE("everything fits") {
        s.nodes = 10000;
        s.leaves = 5000;
        const auto plan = plan_memory(s, 65536);
        CHECK(plan.leaves == MemoryLevel::L1);
        CHECK(plan.nodes == MemoryLevel::L1);
        CHECK(plan.l1_used == 17000);
    }
    SUBCASE("budget below the mandatory set") {
        CHECK_THROWS_AS(plan_memory(s, 1000), Error);
    }
    SUBCASE("nodes fit once leaves do not") {
        s.nodes = 10000;
        s.leaves = 64000;
        const auto plan = plan_memory(s, 65536);
        CHECK(plan.leaves == MemoryLevel::L2);
        CHECK(plan.nodes == MemoryLevel::L1);
    }
}

TEST_CASE("plan_memory never exceeds the budget") {
    Rng rng(15);
    for (int i = 0; i < 500; ++i) {
        MemorySizes s;
        s.input = static_cast<std::size_t>(uniform_int(rng, 1, 400));
        s.accumulator = static_cast<std::size_t>(uniform_int(rng, 4, 40));
        s.roots = static_cast<std::size_t>(uniform_int(rng, 2, 80));
        s.nodes = static_cast<std::size_t>(uniform_int(rng, 0, 5000));
        s.leaves = static_cast<std::size_t>(uniform_int(rng, 0, 5000));
        const auto budget = s.mandatory() + static_cast<std::size_t>(uniform_int(rng, 1, 8000));
        const auto plan = plan_memory(s, budget);
        CHECK(plan.l1_used <= budget);
        const std::size_t expected = s.mandatory() + (plan.leaves == MemoryLevel::L1 ? s.leaves : 0) +
                                     (plan.nodes == MemoryLevel::L1 ? s.nodes : 0);
        CHECK(plan.l1_used == expected);
    }
}

TEST_CASE("memory sizes follow the field widths") {
    const std::vector<LogicalTree> trees{stump3()};
    const auto flat = build_flat(trees, rf_meta(1, 3, 1), false);
    const QuantSpec q{8, 16, 1.0, 1.0};
    const auto s = memory_sizes(flat, q);
    CHECK(s.input == 1);
    CHECK(s.accumulator == 12);
    CHECK(s.roots == 2);
    CHECK(s.nodes == 3 * (2 + 1 + 2));
    CHECK(s.leaves == 2 * 3 * 2);
}
