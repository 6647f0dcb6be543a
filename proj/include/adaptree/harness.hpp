#ifndef ADAPTREE_HARNESS_HPP
#define ADAPTREE_HARNESS_HPP

#include "adaptree/dataset.hpp"
#include "adaptree/engine.hpp"
#include "adaptree/metrics.hpp"
#include "adaptree/trainer.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adaptree {

/// Static or dynamic inference over every row of a dataset.
struct SplitEvaluation {
    std::vector<int> predictions;
    double score = 0.0;
    double mean_visited_nodes = 0.0;
    double mean_trees = 0.0;
    double mean_total_cycles = 0.0;
    double early_stop_fraction = 0.0;
};

template <EnsembleScalar Scalar>
SplitEvaluation evaluate_dataset(const FlatEnsemble<Scalar>& flat, const EngineConfig& cfg, const Dataset& data,
                                 MetricKind metric);

// ---------------------------------------------------------------- sweeps

struct SweepPoint {
    double threshold = 0.0;
    double mean_visited_nodes = 0.0;
    double mean_trees = 0.0;
    double mean_total_cycles = 0.0;
    double score = 0.0;
    Split split = Split::Validation;
};

/// The policy used for sweep threshold `t`. Non-QWYC kinds set t_h = t.
/// QWYC maps t to symmetric exits around the decision boundary: RFs use
/// eps_plus = 0.5 + t/2 and eps_minus = 0.5 - t/2, GBTs use +t and -t.
PolicyConfig sweep_policy(PolicyConfig base, ModelKind kind, double t);

/// One SweepPoint per threshold for the validation split, then one per
/// threshold for the test split (splits absent from `data` are skipped).
template <EnsembleScalar Scalar>
std::vector<SweepPoint> threshold_sweep(const FlatEnsemble<Scalar>& flat, const PolicyConfig& policy,
                                        std::span<const double> thresholds, const EngineConfig& cfg,
                                        const Dataset& data, MetricKind metric, bool parallel = false);

/// Normalized RF policies: 0, 0.05, ..., 1 and never-stop. Raw GBT scores: 0,
/// a log-spaced grid over the observed validation score range, never-stop.
template <EnsembleScalar Scalar>
std::vector<double> default_thresholds(const FlatEnsemble<Scalar>& flat, const PolicyConfig& policy,
                                       const Dataset& validation, int points = 20);

// ---------------------------------------------------------------- grid search

struct GridSpace {
    std::vector<int> depths;
    std::vector<int> estimators;
    std::vector<int> input_bits;
    std::vector<int> leaf_bits;
    std::vector<ModelKind> kinds{ModelKind::RandomForest};

    /// Configurations per model kind.
    std::size_t size() const { return depths.size() * estimators.size() * input_bits.size() * leaf_bits.size(); }

    /// depths 1..15, estimators 1..40, bits {8,16,32} for inputs and leaves.
    static GridSpace full();
    /// depths 1..8, estimators 1..16, bits {8,16,32}.
    static GridSpace desk();
};

void check_grid_space(const GridSpace& space);

struct GridParams {
    ModelKind kind = ModelKind::RandomForest;
    int depth = 1;
    int n_estimators = 1;
    int input_bits = 16;
    int leaf_bits = 16;
};

/// Every configuration, kinds outermost, then depth, estimators, input bits,
/// leaf bits.
std::vector<GridParams> enumerate_grid(const GridSpace& space);

struct GridResult {
    GridParams params;
    FlatEnsemble<std::int32_t> model;
    double val_score = 0.0;
    double test_score = 0.0;
    double mean_visited_nodes = 0.0; // validation, static inference
    std::size_t model_bytes = 0;     // total footprint: inputs, accumulator, roots, nodes, leaves
    bool seed = false;
};

struct GridOptions {
    std::size_t budget_bytes = 512 * 1024;
    MetricKind metric = MetricKind::BalancedAccuracy;
    FitParams fit; // n_estimators and max_depth are taken from the grid
    bool fold_leaves = true; // where leaves hold a single value
    bool parallel = false;
};

/// Trains each (kind, depth) once with the largest estimator count and
/// truncates it for smaller counts (prefixes of RFs and GBTs are themselves
/// valid models), quantizes per bit pair, drops models over the budget and
/// tags the top validation scorer (ties: fewer visited nodes, then order).
std::vector<GridResult> grid_search(const GridSpace& space, const Dataset& data, const GridOptions& options);

// ---------------------------------------------------------------- pareto

struct ParetoInput {
    double cost = 0.0;
    double select_score = 0.0; // drives domination
    double report_score = 0.0; // reported for survivors
};

/// Indices of the points not dominated on (cost minimised, select_score
/// maximised), sorted by cost then index. A point is dominated when another
/// is no worse on both axes and strictly better on one; exact duplicates
/// both survive. O(n log n).
std::vector<std::size_t> pareto_front(std::span<const ParetoInput> points);

enum class CostAxis { VisitedNodes, Trees, TotalCycles, ModelBytes };

std::string to_string(CostAxis axis);
CostAxis parse_cost_axis(std::string_view text);

struct ParetoRow {
    std::string label;
    double threshold = 0.0;
    double cost = 0.0;
    double select_score = 0.0;
    double report_score = 0.0;
};

/// Pairs validation and test sweep points by threshold, selects on
/// `select` and reports `report`.
std::vector<ParetoRow> sweep_pareto(std::span<const SweepPoint> points, CostAxis axis, Split select, Split report);
std::vector<ParetoRow> grid_pareto(std::span<const GridResult> results, CostAxis axis, Split select, Split report);

// ---------------------------------------------------------------- ordering

enum class OrderStrategy { Training, Random, Score, QwycLike };

std::string to_string(OrderStrategy strategy);
OrderStrategy parse_order_strategy(std::string_view text);

/// Execution order of estimator units. `score` ranks units by standalone
/// validation accuracy (ties by index). `qwyc_like` greedily appends the
/// unit that lets the most not-yet-decided validation samples become
/// decided, a sample being decided once its full-ensemble class leads by
/// more than the remaining units could possibly change; ties go to the
/// unit adding fewer visited nodes, then the lower index.
template <EnsembleScalar Scalar>
std::vector<int> estimator_order(const FlatEnsemble<Scalar>& flat, OrderStrategy strategy,
                                 const Dataset* validation = nullptr, std::uint64_t seed = 0);

template <EnsembleScalar Scalar>
FlatEnsemble<Scalar> order_estimators(const FlatEnsemble<Scalar>& flat, OrderStrategy strategy,
                                      const Dataset* validation = nullptr, std::uint64_t seed = 0) {
    const auto order = estimator_order(flat, strategy, validation, seed);
    return permute_estimators(flat, std::span<const int>(order));
}

// ---------------------------------------------------------------- reports

void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points);
void write_grid_csv(std::ostream& out, std::span<const GridResult> results);
void write_pareto_csv(std::ostream& out, std::span<const ParetoRow> rows);

/// {"curves": [{"name": ..., "points": [{"x": cost, "y": score, ...}]}]}
struct PlotCurve {
    std::string name;
    std::vector<ParetoRow> points;
};
std::string plotdata_json(std::span<const PlotCurve> curves);

#define ADAPTREE_HARNESS_EXTERN(S)                                                                                   \
    extern template SplitEvaluation evaluate_dataset(const FlatEnsemble<S>&, const EngineConfig&, const Dataset&,     \
                                                     MetricKind);                                                    \
    extern template std::vector<SweepPoint> threshold_sweep(const FlatEnsemble<S>&, const PolicyConfig&,              \
                                                            std::span<const double>, const EngineConfig&,            \
                                                            const Dataset&, MetricKind, bool);                       \
    extern template std::vector<double> default_thresholds(const FlatEnsemble<S>&, const PolicyConfig&,              \
                                                           const Dataset&, int);                                     \
    extern template std::vector<int> estimator_order(const FlatEnsemble<S>&, OrderStrategy, const Dataset*,          \
                                                     std::uint64_t);
ADAPTREE_HARNESS_EXTERN(double)
ADAPTREE_HARNESS_EXTERN(std::int32_t)
#undef ADAPTREE_HARNESS_EXTERN

} // namespace adaptree

#endif
