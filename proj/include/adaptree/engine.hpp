#ifndef ADAPTREE_ENGINE_HPP
#define ADAPTREE_ENGINE_HPP

#include "adaptree/ensemble.hpp"
#include "adaptree/policies.hpp"
#include "adaptree/quantizer.hpp"

#include <optional>
#include <vector>

namespace adaptree {

/// Abstract cycle costs used by the multi-core cost simulator.
struct CostModel {
    double node_cycles = 1.0;          // per visited internal node
    double tree_overhead_cycles = 0.0; // per executed tree
    double acc_cycles_per_value = 1.0; // per accumulated value (M per RF tree, 1 per GBT tree)
    double policy_cycles = 1.0;        // per policy evaluation
    double barrier_cycles = 0.0;       // per barrier
};

struct EngineConfig {
    int batch_size = 1; // B, in estimator units
    int cores = 1;      // C
    std::optional<PolicyConfig> policy;
    CostModel cost;

    /// B = C = cores.
    static EngineConfig for_cores(int cores, std::optional<PolicyConfig> policy = std::nullopt) {
        EngineConfig cfg;
        cfg.batch_size = cores;
        cfg.cores = cores;
        cfg.policy = std::move(policy);
        return cfg;
    }
};

void check_engine_config(const EngineConfig& cfg);

/// The schedule-relevant part of an inference: what ran, in which order,
/// and how often the policy was evaluated.
struct ExecutionProfile {
    std::vector<int> visited_nodes_per_tree; // execution order
    int policy_evaluations = 0;
    bool dynamic = false;
    int trees_per_unit = 1;  // trees per estimator
    int values_per_tree = 1; // accumulated values per tree
    int batch_size = 1;
};

template <EnsembleScalar Scalar>
struct InferenceTrace : ExecutionProfile {
    int predicted_class = 0;
    ScoreState<Scalar> final_state;
    int trees_executed = 0;
    long visited_nodes_total = 0;
    bool stopped_early = false;
};

struct CostReport {
    double trees_cycles = 0.0;
    double acc_cycles = 0.0;
    double policy_cycles = 0.0;
    double barrier_cycles = 0.0;
    double total_cycles = 0.0;
    double speedup_vs_1core = 1.0; // total cycles, same trace on C = 1
    double trees_speedup = 1.0;    // tree section only
};

/// Deterministic emulation of C cores. Trees are assigned round-robin by
/// execution index; between barriers each core runs its trees back to back,
/// so a batch costs the slowest core's sum. Static inference is a single
/// batch; dynamic inference has one batch per B estimator units plus the
/// left-over units. Accumulation is serialized in a critical section.
CostReport simulate_cost(const ExecutionProfile& profile, const CostModel& model, int batch_size, int cores);

template <EnsembleScalar Scalar>
struct Prediction {
    int predicted_class = 0;
    InferenceTrace<Scalar> trace;
    CostReport cost;
};

struct TreeResult {
    int leaf_node = 0;
    int visited = 0; // internal nodes visited
};

/// Walks tree `tree` from its root: input[fidx] > alpha moves by `right`,
/// otherwise to the next record, until the leaf sentinel.
template <EnsembleScalar Scalar>
TreeResult eval_tree(const FlatEnsemble<Scalar>& flat, int tree, const Eigen::Ref<const Vector<Scalar>>& input) {
    auto [node, end] = flat.tree_span(tree);
    const int limit = flat.meta.max_depth;
    int visited = 0;
    while (true) {
        if (node < 0 || node >= end) throw Error("node offset leaves tree " + std::to_string(tree));
        const auto& rec = flat.nodes[static_cast<std::size_t>(node)];
        if (rec.fidx == kLeafSentinel) break;
        if (++visited > limit) throw Error("tree " + std::to_string(tree) + " exceeds its depth bound");
        node += input(rec.fidx) > rec.alpha ? rec.right : 1;
    }
    return {node, visited};
}

PolicyContext policy_context(const EnsembleMeta& meta, bool quantized, std::int64_t unit);

template <EnsembleScalar Scalar>
PolicyContext policy_context(const FlatEnsemble<Scalar>& flat) {
    return policy_context(flat.meta, is_quantized_v<Scalar>, static_cast<std::int64_t>(leaf_unit(flat)));
}

/// Static and dynamic inference over one compiled ensemble. The engine keeps
/// a reference to `flat`, which must outlive it.
template <EnsembleScalar Scalar>
class Engine {
public:
    Engine(const FlatEnsemble<Scalar>& flat, EngineConfig cfg)
        : flat_(flat), cfg_(std::move(cfg)), unit_(leaf_unit(flat)) {
        check_engine_config(cfg_);
        if (cfg_.policy) rule_ = compile_policy(*cfg_.policy, policy_context(flat_));
    }

    const EngineConfig& config() const { return cfg_; }
    const FlatEnsemble<Scalar>& model() const { return flat_; }
    int estimator_units() const { return flat_.meta.n_estimators; }

    /// Dynamic when the config carries a policy, static otherwise.
    Prediction<Scalar> predict(const Eigen::Ref<const Vector<Scalar>>& input) const {
        return rule_ ? run(input, &*rule_) : run(input, nullptr);
    }

    Prediction<Scalar> predict_static(const Eigen::Ref<const Vector<Scalar>>& input) const {
        return run(input, nullptr);
    }

    Prediction<Scalar> predict_dynamic(const Eigen::Ref<const Vector<Scalar>>& input) const {
        if (!rule_) throw Error("dynamic inference needs a policy");
        return run(input, &*rule_);
    }

    /// Adds the output of tree `tree` (execution index) reaching `leaf_node`.
    void accumulate(int tree, int leaf_node, Vector<Scalar>& acc) const {
        const auto& meta = flat_.meta;
        const auto& rec = flat_.nodes[static_cast<std::size_t>(leaf_node)];
        if (!flat_.folded && flat_.leaves.cols() > 1) {
            acc += flat_.leaves.row(rec.right).transpose();
            return;
        }
        const Scalar v = flat_.folded ? rec.alpha : flat_.leaves(rec.right, 0);
        if (meta.task == Task::Regression) {
            acc(0) += v;
        } else if (meta.kind == ModelKind::GradientBoosting) {
            if (meta.n_classes == 2) {
                acc(1) += v; // class-0 logit fixed at 0
            } else {
                acc(tree % meta.n_classes) += v;
            }
        } else {
            acc(0) += v; // binary RF stores P0; P1 is its complement
            acc(1) += unit_ - v;
        }
    }

    int values_per_tree() const {
        return flat_.meta.kind == ModelKind::RandomForest ? flat_.meta.n_classes : 1;
    }

    Vector<Scalar> zero_accumulator() const {
        return Vector<Scalar>::Zero(flat_.meta.task == Task::Regression ? 1 : flat_.meta.n_classes);
    }

    /// Outputs of the estimator whose first tree is `first_tree`, as a
    /// class-score vector (used by the per-tree policies).
    Vector<Scalar> unit_output(int first_tree, std::span<const int> leaf_nodes) const {
        Vector<Scalar> out = zero_accumulator();
        const int group = flat_.meta.trees_per_estimator();
        for (int k = 0; k < group; ++k) {
            accumulate(first_tree + k, leaf_nodes[static_cast<std::size_t>(first_tree + k)], out);
        }
        return out;
    }

private:
    Prediction<Scalar> run(const Eigen::Ref<const Vector<Scalar>>& input, const StopRule* rule) const {
        if (input.size() < flat_.meta.n_features) {
            throw Error("input has " + std::to_string(input.size()) + " features, model needs " +
                        std::to_string(flat_.meta.n_features));
        }
        const int group = flat_.meta.trees_per_estimator();
        const int units = flat_.meta.n_estimators;
        const int batch = cfg_.batch_size;

        Prediction<Scalar> out;
        auto& trace = out.trace;
        trace.dynamic = rule != nullptr;
        trace.trees_per_unit = group;
        trace.values_per_tree = values_per_tree();
        trace.batch_size = batch;
        trace.final_state.acc = zero_accumulator();
        std::vector<int> leaf_nodes(static_cast<std::size_t>(flat_.n_trees()), -1);

        int unit = 0;
        auto run_unit = [&]() {
            for (int k = 0; k < group; ++k) {
                const int t = unit * group + k;
                const TreeResult r = eval_tree(flat_, t, input);
                leaf_nodes[static_cast<std::size_t>(t)] = r.leaf_node;
                accumulate(t, r.leaf_node, trace.final_state.acc);
                trace.visited_nodes_per_tree.push_back(r.visited);
                trace.visited_nodes_total += r.visited;
            }
            ++unit;
            trace.final_state.trees_executed = unit * group;
            trace.final_state.estimators_executed = unit;
        };

        bool stop = false;
        if (rule != nullptr) {
            const int triggers = units / batch;
            for (int bt = 0; bt < triggers && !stop; ++bt) {
                for (int i = 0; i < batch; ++i) run_unit();
                ++trace.policy_evaluations;
                if (rule->uses_last_output()) {
                    const Vector<Scalar> last = unit_output((unit - 1) * group, leaf_nodes);
                    stop = policy_decide(*rule, trace.final_state, &last);
                } else {
                    stop = policy_decide<Scalar>(*rule, trace.final_state, nullptr);
                }
            }
        }
        if (!stop) {
            while (unit < units) run_unit();
        }
        trace.stopped_early = stop && unit < units;
        trace.trees_executed = trace.final_state.trees_executed;
        trace.predicted_class = argmax(trace.final_state.acc);
        out.predicted_class = trace.predicted_class;
        out.cost = simulate_cost(trace, cfg_.cost, batch, cfg_.cores);
        return out;
    }

    const FlatEnsemble<Scalar>& flat_;
    EngineConfig cfg_;
    Scalar unit_;
    std::optional<StopRule> rule_;
};

/// Runs every tree (N for RFs, N*M for GBTs); the config's policy is ignored.
template <EnsembleScalar Scalar>
Prediction<Scalar> predict_static(const FlatEnsemble<Scalar>& flat, const Eigen::Ref<const Vector<Scalar>>& input,
                                  const EngineConfig& cfg) {
    EngineConfig plain = cfg;
    plain.policy.reset();
    return Engine<Scalar>(flat, plain).predict_static(input);
}

/// Batched early-exit inference: after every B estimator units the policy
/// is evaluated once; left-over units run without a policy check.
template <EnsembleScalar Scalar>
Prediction<Scalar> predict_dynamic(const FlatEnsemble<Scalar>& flat, const Eigen::Ref<const Vector<Scalar>>& input,
                                   const EngineConfig& cfg) {
    return Engine<Scalar>(flat, cfg).predict_dynamic(input);
}

template <EnsembleScalar Scalar>
CostReport simulate_cost(const InferenceTrace<Scalar>& trace, const CostModel& model, int batch_size, int cores) {
    return simulate_cost(static_cast<const ExecutionProfile&>(trace), model, batch_size, cores);
}

/// Class probabilities for reporting: normalized votes for RFs, logistic
/// (M = 2) or softmax (M > 2) of raw scores for GBTs. Integer accumulators
/// are dequantized first.
template <EnsembleScalar Scalar>
Eigen::VectorXd output_probabilities(const FlatEnsemble<Scalar>& flat, const ScoreState<Scalar>& state);

/// Real-threads execution with one std::thread per core, a mutex around
/// accumulation and barriers between batches. Integer models reproduce the
/// deterministic engine exactly.
template <EnsembleScalar Scalar>
Prediction<Scalar> predict_threaded(const FlatEnsemble<Scalar>& flat, const Eigen::Ref<const Vector<Scalar>>& input,
                                    const EngineConfig& cfg);

extern template Eigen::VectorXd output_probabilities(const FlatEnsemble<double>&, const ScoreState<double>&);
extern template Eigen::VectorXd output_probabilities(const FlatEnsemble<std::int32_t>&,
                                                     const ScoreState<std::int32_t>&);
extern template Prediction<double> predict_threaded(const FlatEnsemble<double>&,
                                                    const Eigen::Ref<const Vector<double>>&, const EngineConfig&);
extern template Prediction<std::int32_t> predict_threaded(const FlatEnsemble<std::int32_t>&,
                                                          const Eigen::Ref<const Vector<std::int32_t>>&,
                                                          const EngineConfig&);

} // namespace adaptree

#endif
