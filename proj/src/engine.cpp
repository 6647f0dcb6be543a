#include "adaptree/engine.hpp"

#include <algorithm>
#include <barrier>
#include <mutex>
#include <thread>

namespace adaptree {

void check_engine_config(const EngineConfig& cfg) {
    if (cfg.batch_size < 1) throw Error("batch size must be >= 1");
    if (cfg.cores < 1) throw Error("core count must be >= 1");
}

namespace {

double trees_section(const ExecutionProfile& p, const CostModel& m, int batch_size, int cores) {
    const auto n = p.visited_nodes_per_tree.size();
    const std::size_t segment =
        p.dynamic ? static_cast<std::size_t>(batch_size) * static_cast<std::size_t>(p.trees_per_unit) : std::max<std::size_t>(n, 1);
    double total = 0.0;
    std::vector<double> per_core(static_cast<std::size_t>(cores));
    for (std::size_t begin = 0; begin < n; begin += segment) {
        std::fill(per_core.begin(), per_core.end(), 0.0);
        const std::size_t end = std::min(n, begin + segment);
        for (std::size_t t = begin; t < end; ++t) {
            per_core[t % static_cast<std::size_t>(cores)] +=
                p.visited_nodes_per_tree[t] * m.node_cycles + m.tree_overhead_cycles;
        }
        total += *std::max_element(per_core.begin(), per_core.end());
    }
    return total;
}

CostReport cost_for(const ExecutionProfile& p, const CostModel& m, int batch_size, int cores) {
    CostReport r;
    const auto trees = static_cast<double>(p.visited_nodes_per_tree.size());
    r.trees_cycles = trees_section(p, m, batch_size, cores);
    r.acc_cycles = trees * p.values_per_tree * m.acc_cycles_per_value;
    r.policy_cycles = p.policy_evaluations * m.policy_cycles;
    // Two barriers around every policy check plus the final one.
    r.barrier_cycles = m.barrier_cycles * (p.dynamic ? 2.0 * p.policy_evaluations + 1.0 : 1.0);
    r.total_cycles = r.trees_cycles + r.acc_cycles + r.policy_cycles + r.barrier_cycles;
    return r;
}

double ratio(double num, double den) { return den > 0.0 ? num / den : 1.0; }

} // namespace

CostReport simulate_cost(const ExecutionProfile& profile, const CostModel& model, int batch_size, int cores) {
    if (batch_size < 1 || cores < 1) throw Error("batch size and core count must be >= 1");
    CostReport report = cost_for(profile, model, batch_size, cores);
    const CostReport single = cost_for(profile, model, batch_size, 1);
    report.speedup_vs_1core = ratio(single.total_cycles, report.total_cycles);
    report.trees_speedup = ratio(single.trees_cycles, report.trees_cycles);
    return report;
}

PolicyContext policy_context(const EnsembleMeta& meta, bool quantized, std::int64_t unit) {
    PolicyContext ctx;
    ctx.kind = meta.kind;
    ctx.n_classes = meta.n_classes;
    ctx.quantized = quantized;
    ctx.unit = quantized ? unit : 1;
    if (quantized) {
        const auto& q = meta.quant.value();
        ctx.quant_factor = quant_factor(q.leaf_scale, q.leaf_bits);
    }
    return ctx;
}

template <EnsembleScalar Scalar>
Eigen::VectorXd output_probabilities(const FlatEnsemble<Scalar>& flat, const ScoreState<Scalar>& state) {
    Eigen::VectorXd raw = state.acc.template cast<double>();
    if constexpr (is_quantized_v<Scalar>) {
        const auto& q = flat.meta.quant.value();
        raw /= quant_factor(q.leaf_scale, q.leaf_bits);
    }
    if (flat.meta.task == Task::Regression) return raw;
    if (flat.meta.kind == ModelKind::RandomForest) {
        const double sum = raw.sum();
        return sum > 0.0 ? Eigen::VectorXd(raw / sum) : raw;
    }
    if (flat.meta.n_classes == 2) {
        const double p1 = 1.0 / (1.0 + std::exp(-raw(1)));
        return Eigen::Vector2d(1.0 - p1, p1);
    }
    const Eigen::VectorXd e = (raw.array() - raw.maxCoeff()).exp();
    return e / e.sum();
}

template <EnsembleScalar Scalar>
Prediction<Scalar> predict_threaded(const FlatEnsemble<Scalar>& flat, const Eigen::Ref<const Vector<Scalar>>& input,
                                    const EngineConfig& cfg) {
    const Engine<Scalar> engine(flat, cfg);
    std::optional<StopRule> rule;
    if (cfg.policy) rule = compile_policy(*cfg.policy, policy_context(flat));
    if (input.size() < flat.meta.n_features) throw Error("input dimension mismatch");

    const int cores = cfg.cores;
    const int group = flat.meta.trees_per_estimator();
    const int units = flat.meta.n_estimators;
    const int batch_trees = cfg.batch_size * group;
    const int triggers = rule ? units / cfg.batch_size : 0;

    Vector<Scalar> acc = engine.zero_accumulator();
    std::vector<int> leaf_nodes(static_cast<std::size_t>(flat.n_trees()), -1);
    std::vector<int> visited(static_cast<std::size_t>(flat.n_trees()), 0);
    std::mutex acc_mutex;
    std::barrier sync(cores);
    bool stop = false;
    int executed_trees = 0;
    int evaluations = 0;

    auto run_range = [&](int core, int begin, int end) {
        for (int t = begin; t < end; ++t) {
            if (t % cores != core) continue;
            const TreeResult r = eval_tree(flat, t, input);
            leaf_nodes[static_cast<std::size_t>(t)] = r.leaf_node;
            visited[static_cast<std::size_t>(t)] = r.visited;
            const std::lock_guard lock(acc_mutex);
            engine.accumulate(t, r.leaf_node, acc);
        }
    };

    auto worker = [&](int core) {
        int t = 0;
        for (int bt = 0; bt < triggers; ++bt) {
            run_range(core, t, t + batch_trees);
            t += batch_trees;
            sync.arrive_and_wait();
            if (core == 0) {
                ScoreState<Scalar> state{acc, t, t / group};
                ++evaluations;
                if (rule->uses_last_output()) {
                    const Vector<Scalar> last = engine.unit_output(t - group, leaf_nodes);
                    stop = policy_decide(*rule, state, &last);
                } else {
                    stop = policy_decide<Scalar>(*rule, state, nullptr);
                }
                executed_trees = t;
            }
            sync.arrive_and_wait();
            if (stop) return;
        }
        run_range(core, t, flat.n_trees());
        if (core == 0) executed_trees = flat.n_trees();
    };

    {
        std::vector<std::jthread> threads;
        threads.reserve(static_cast<std::size_t>(cores));
        for (int c = 0; c < cores; ++c) threads.emplace_back(worker, c);
    }

    Prediction<Scalar> out;
    auto& trace = out.trace;
    trace.dynamic = rule.has_value();
    trace.trees_per_unit = group;
    trace.values_per_tree = engine.values_per_tree();
    trace.batch_size = cfg.batch_size;
    trace.policy_evaluations = evaluations;
    trace.visited_nodes_per_tree.assign(visited.begin(), visited.begin() + executed_trees);
    for (int v : trace.visited_nodes_per_tree) trace.visited_nodes_total += v;
    trace.trees_executed = executed_trees;
    trace.final_state = ScoreState<Scalar>{acc, executed_trees, executed_trees / group};
    trace.stopped_early = executed_trees < flat.n_trees();
    trace.predicted_class = argmax(acc);
    out.predicted_class = trace.predicted_class;
    out.cost = simulate_cost(trace, cfg.cost, cfg.batch_size, cfg.cores);
    return out;
}

template Eigen::VectorXd output_probabilities(const FlatEnsemble<double>&, const ScoreState<double>&);
template Eigen::VectorXd output_probabilities(const FlatEnsemble<std::int32_t>&, const ScoreState<std::int32_t>&);
template Prediction<double> predict_threaded(const FlatEnsemble<double>&, const Eigen::Ref<const Vector<double>>&,
                                             const EngineConfig&);
template Prediction<std::int32_t> predict_threaded(const FlatEnsemble<std::int32_t>&,
                                                   const Eigen::Ref<const Vector<std::int32_t>>&,
                                                   const EngineConfig&);

} // namespace adaptree
