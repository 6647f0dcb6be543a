// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances are pinned here and nowhere else.

#include "adaptree/dataset.hpp"
#include "adaptree/engine.hpp"
#include "adaptree/harness.hpp"
#include "adaptree/qwyc.hpp"
#include "adaptree/trainer.hpp"

#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

using namespace adaptree;
using namespace adaptree::test;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

// Leaf values reached by walking the logical tree from the root.
const std::vector<double>& walk(const LogicalTree& tree, const Eigen::VectorXd& x) {
    int n = 0;
    while (!tree.nodes[static_cast<std::size_t>(n)].is_leaf()) {
        const auto& node = tree.nodes[static_cast<std::size_t>(n)];
        n = x(node.feature) > node.threshold ? node.right : node.left;
    }
    return tree.nodes[static_cast<std::size_t>(n)].values;
}

Outcome static_dynamic_equivalence() {
    const auto start = Clock::now();
    Rng rng(1001);
    int models = 0;
    int mismatches = 0;
    for (int i = 0; i < 240; ++i) {
        const EnsembleShape s{i % 2 ? ModelKind::GradientBoosting : ModelKind::RandomForest, uniform_int(rng, 1, 16),
                              std::array{2, 3, 5}[static_cast<std::size_t>(i / 2 % 3)], uniform_int(rng, 1, 6), 4};
        const auto logical = random_ensemble(rng, s);
        const bool fold = logical.meta.natural_leaf_arity() == 1 && uniform_int(rng, 0, 1) == 1;
        const auto q = quantize_direct(build_flat(logical, fold));
        const int b = std::array{1, 2, 3, 4, 8}[static_cast<std::size_t>(uniform_int(rng, 0, 4))];
        const EngineConfig dyn = EngineConfig::for_cores(b, never_stop_policy());
        ++models;
        for (int k = 0; k < 20; ++k) {
            const Vector<std::int32_t> x = random_int_input(rng, 4);
            const auto d = predict_dynamic<std::int32_t>(q, x, dyn);
            const auto st = predict_static<std::int32_t>(q, x, {});
            if (d.predicted_class != st.predicted_class || d.trace.final_state.acc != st.trace.final_state.acc) {
                ++mismatches;
            }
        }
    }
    const double secs = seconds_since(start);
    std::ostringstream out;
    out << models << " models x 20 inputs, " << mismatches << " mismatches, " << secs << " s";
    return {mismatches == 0 && secs < 60.0, out.str()};
}

Outcome flatten_round_trip() {
    Rng rng(1002);
    int mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
        const EnsembleShape s{i % 2 ? ModelKind::GradientBoosting : ModelKind::RandomForest, 1,
                              std::array{2, 3, 5}[static_cast<std::size_t>(i % 3)], uniform_int(rng, 1, 6), 4};
        const auto logical = random_ensemble(rng, s);
        const bool fold = logical.meta.natural_leaf_arity() == 1 && i % 4 < 2;
        const auto flat = build_flat(logical, fold);
        const Eigen::VectorXd x = random_real_input(rng, 4);
        const auto& expected = walk(logical.trees[0], x);
        const Eigen::VectorXd got = flat.leaf_values(eval_tree<double>(flat, 0, x).leaf_node);
        bool same = got.size() == static_cast<Eigen::Index>(expected.size());
        for (std::size_t c = 0; same && c < expected.size(); ++c) same = got(static_cast<Eigen::Index>(c)) == expected[c];
        mismatches += !same;
    }
    return {mismatches == 0, "1000 (tree, input) pairs, " + std::to_string(mismatches) + " mismatches"};
}

Outcome truncation_preserves_decisions() {
    Rng rng(1003);
    // Input scale 128 at 8 bits gives input factor 1, so thresholds are only
    // truncated, never rescaled.
    const QuantSpec spec{8, 8, 128.0, 1.0};
    TreeShape shape;
    shape.n_features = 1;
    shape.lo = -130.0;
    shape.hi = 130.0;
    shape.leaf_prob = 0.15;
    EnsembleMeta m;
    m.kind = ModelKind::GradientBoosting;
    m.n_classes = 2;
    m.max_depth = 6;
    m.n_features = 1;
    long differing = 0;
    for (int i = 0; i < 100; ++i) {
        shape.max_depth = uniform_int(rng, 1, 6);
        const std::vector<LogicalTree> trees{random_tree(rng, shape, [&] { return std::vector<double>{uniform_real(rng, -1, 1)}; })};
        const auto real = build_flat(trees, m, true);
        const auto truncated = quantize_inputs_and_thresholds(real, spec);
        for (int v = -128; v <= 127; ++v) {
            const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, v);
            const auto a = eval_tree<double>(real, 0, x);
            const auto b = eval_tree<double>(truncated, 0, x);
            differing += a.leaf_node != b.leaf_node || a.visited != b.visited;
        }
    }
    return {differing == 0, "100 trees x 256 inputs, " + std::to_string(differing) + " differing paths"};
}

Outcome batch_semantics() {
    Rng rng(1004);
    int cases = 0;
    int failures = 0;
    for (auto kind : {ModelKind::RandomForest, ModelKind::GradientBoosting}) {
        for (int units = 1; units <= 40; ++units) {
            const auto q = random_quantized(rng, {kind, units, 3, 3, 4}, false);
            const int group = q.meta.trees_per_estimator();
            const Vector<std::int32_t> x = random_int_input(rng, 4);
            for (int b : {1, 2, 4, 8}) {
                ++cases;
                const auto never = predict_dynamic<std::int32_t>(q, x, EngineConfig::for_cores(b, never_stop_policy()));
                bool ok = never.trace.policy_evaluations == units / b && never.trace.trees_executed == units * group &&
                          !never.trace.stopped_early;
                PolicyConfig zero = never_stop_policy();
                zero.threshold = 0.0;
                const auto eager = predict_dynamic<std::int32_t>(q, x, EngineConfig::for_cores(b, zero));
                if (units >= b) {
                    ok = ok && eager.trace.trees_executed == b * group && eager.trace.policy_evaluations == 1;
                } else {
                    // No full batch, so no check: the leftover units run to the end.
                    ok = ok && eager.trace.trees_executed == units * group && eager.trace.policy_evaluations == 0;
                }
                failures += !ok;
            }
        }
    }
    return {failures == 0, std::to_string(cases) + " (kind, units, B) cases, " + std::to_string(failures) + " failures"};
}

Outcome order_independence() {
    Rng rng(1005);
    const auto q = random_quantized(rng, {ModelKind::RandomForest, 16, 3, 5, 4}, false);
    std::vector<Vector<std::int32_t>> inputs;
    for (int i = 0; i < 20; ++i) inputs.push_back(random_int_input(rng, 4));
    std::vector<Vector<std::int32_t>> reference;
    for (const auto& x : inputs) reference.push_back(predict_static<std::int32_t>(q, x, {}).trace.final_state.acc);

    std::vector<int> order(16);
    std::iota(order.begin(), order.end(), 0);
    int differing = 0;
    for (int p = 0; p < 100; ++p) {
        std::shuffle(order.begin(), order.end(), rng);
        const auto permuted = permute_estimators(q, std::span<const int>(order));
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            differing += predict_static<std::int32_t>(permuted, inputs[i], {}).trace.final_state.acc != reference[i];
        }
    }
    return {differing == 0, "100 permutations x 20 inputs, " + std::to_string(differing) + " differing accumulators"};
}

Outcome cost_simulator() {
    CostModel cm;
    cm.node_cycles = 10.0;
    cm.acc_cycles_per_value = 0.0;
    cm.policy_cycles = 0.0;
    auto uniform = [](int trees, int batch) {
        ExecutionProfile p;
        p.visited_nodes_per_tree.assign(static_cast<std::size_t>(trees), 3);
        p.batch_size = batch;
        return p;
    };
    const double nine = simulate_cost(uniform(9, 8), cm, 8, 8).trees_speedup;
    bool ok = nine == 4.5;
    for (int c : {1, 2, 4, 8}) {
        for (int k = 1; k <= 5; ++k) ok = ok && simulate_cost(uniform(k * c, c), cm, c, c).trees_speedup == c;
    }
    std::ostringstream out;
    out << "9 trees on 8 cores -> " << nine << "x; N = K*C -> C x for C in {1,2,4,8}, K in 1..5";
    return {ok, out.str()};
}

Outcome grid_cardinality() {
    const auto grid = enumerate_grid(GridSpace::full());
    std::set<std::tuple<int, int, int, int>> unique;
    for (const auto& g : grid) unique.emplace(g.depth, g.n_estimators, g.input_bits, g.leaf_bits);
    return {grid.size() == 5400 && unique.size() == 5400,
            std::to_string(grid.size()) + " configurations, " + std::to_string(unique.size()) + " distinct"};
}

Outcome dynamic_savings() {
    const auto start = Clock::now();
    int passing = 0;
    std::ostringstream out;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SynthParams sp;
        sp.n = 5000;
        sp.n_classes = 3;
        sp.difficulty = 1.0;
        sp.seed = seed;
        const auto data = synth_dataset(sp);
        const auto train = data.select(Split::Train);
        FitParams fp;
        fp.n_estimators = 32;
        fp.max_depth = 8;
        fp.rng_seed = seed;
        const auto q = quantize_model(build_flat(fit_random_forest(train, fp), false), QuantSpec{16, 16, 0.0, 0.0},
                                      train.features);

        const auto test = data.select(Split::Test);
        const auto base = evaluate_dataset(q, EngineConfig{}, test, MetricKind::BalancedAccuracy);
        PolicyConfig policy;
        policy.kind = PolicyKind::AggScoreMargin;
        const auto thresholds = default_thresholds(q, policy, data.select(Split::Validation));
        // Eight cores, one policy check per batch of eight trees.
        const auto points = threshold_sweep(q, policy, std::span<const double>(thresholds),
                                            EngineConfig::for_cores(8), data, MetricKind::BalancedAccuracy);
        double best_reduction = 0.0;
        for (const auto& p : points) {
            if (p.split != Split::Test || p.score < base.score) continue;
            best_reduction = std::max(best_reduction, 1.0 - p.mean_visited_nodes / base.mean_visited_nodes);
        }
        const bool ok = best_reduction >= 0.25;
        passing += ok;
        out << (seed > 1 ? "; " : "") << "seed " << seed << ": static BA " << base.score << ", node reduction "
            << 100.0 * best_reduction << "%";
    }
    const double secs = seconds_since(start);
    out << "; " << passing << "/5 seeds at B = C = 8, " << secs << " s";
    return {passing >= 3 && secs < 300.0, out.str()};
}

Outcome qwyc_soundness() {
    SynthParams sp;
    sp.kind = SynthKind::BinaryImbalanced;
    sp.n = 3000;
    sp.n_classes = 2;
    sp.minority_ratio = 0.3;
    sp.seed = 7;
    const auto data = synth_dataset(sp);
    const auto train = data.select(Split::Train);
    const auto val = data.select(Split::Validation);

    bool ok = true;
    std::ostringstream out;
    for (auto kind : {ModelKind::RandomForest, ModelKind::GradientBoosting}) {
        FitParams fp;
        fp.n_estimators = 16;
        fp.max_depth = 5;
        fp.rng_seed = 7;
        const auto logical = kind == ModelKind::RandomForest ? fit_random_forest(train, fp) : fit_gbt(train, fp);
        const auto q = quantize_model(build_flat(logical, true), QuantSpec{16, 16, 0.0, 0.0}, train.features);
        const int b = 4;
        const auto cal = calibrate_qwyc(q, val.features, b);
        PolicyConfig p;
        p.kind = PolicyKind::Qwyc;
        p.qwyc = cal.thresholds;
        const Engine<std::int32_t> dynamic(q, EngineConfig::for_cores(b, p));
        const Engine<std::int32_t> full(q, {});
        int flips = 0;
        long trees = 0;
        for (Eigen::Index i = 0; i < val.n_rows(); ++i) {
            const auto x = prepare_input(q, val.features.row(i));
            const auto d = dynamic.predict(x);
            flips += d.predicted_class != full.predict(x).predicted_class;
            trees += d.trace.trees_executed;
        }
        const double mean_trees = static_cast<double>(trees) / static_cast<double>(val.n_rows());
        ok = ok && flips == 0 && mean_trees < 16.0;
        out << (kind == ModelKind::RandomForest ? "rf" : "; gbt") << ": " << flips << " flips, mean trees "
            << mean_trees << "/16";
    }
    return {ok, out.str()};
}

std::vector<std::size_t> pareto_oracle(const std::vector<ParetoInput>& pts) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < pts.size() && !dominated; ++j) {
            const bool no_worse = pts[j].cost <= pts[i].cost && pts[j].select_score >= pts[i].select_score;
            const bool better = pts[j].cost < pts[i].cost || pts[j].select_score > pts[i].select_score;
            dominated = no_worse && better;
        }
        if (!dominated) keep.push_back(i);
    }
    std::stable_sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) { return pts[a].cost < pts[b].cost; });
    return keep;
}

Outcome pareto_extraction() {
    Rng rng(1010);
    int mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<ParetoInput> pts(static_cast<std::size_t>(uniform_int(rng, 0, 60)));
        // Small integer grids force ties on both axes.
        const int span = uniform_int(rng, 2, 30);
        for (auto& p : pts) {
            p.cost = uniform_int(rng, 0, span);
            p.select_score = uniform_int(rng, 0, span) / static_cast<double>(span);
            p.report_score = uniform_real(rng, 0.0, 1.0);
        }
        mismatches += pareto_front(std::span<const ParetoInput>(pts)) != pareto_oracle(pts);
    }
    return {mismatches == 0, "1000 point sets, " + std::to_string(mismatches) + " mismatches"};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"static-dynamic-equivalence", static_dynamic_equivalence},
        {"flatten-round-trip", flatten_round_trip},
        {"threshold-truncation", truncation_preserves_decisions},
        {"batch-semantics", batch_semantics},
        {"accumulation-order-independence", order_independence},
        {"cost-simulator", cost_simulator},
        {"grid-cardinality", grid_cardinality},
        {"dynamic-savings", dynamic_savings},
        {"qwyc-soundness", qwyc_soundness},
        {"pareto-extraction", pareto_extraction},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
