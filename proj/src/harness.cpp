#include "adaptree/harness.hpp"

#include "adaptree/quantizer.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <future>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

namespace adaptree {

namespace {

template <EnsembleScalar Scalar>
std::vector<Vector<Scalar>> prepare_rows(const FlatEnsemble<Scalar>& flat, const Dataset& data) {
    std::vector<Vector<Scalar>> rows;
    rows.reserve(static_cast<std::size_t>(data.n_rows()));
    for (Eigen::Index i = 0; i < data.n_rows(); ++i) rows.push_back(prepare_input(flat, data.features.row(i)));
    return rows;
}

template <EnsembleScalar Scalar>
SplitEvaluation evaluate_rows(const FlatEnsemble<Scalar>& flat, const EngineConfig& cfg,
                              const std::vector<Vector<Scalar>>& rows, const std::vector<int>& labels,
                              MetricKind metric_kind) {
    if (flat.meta.task != Task::Classification) throw Error("evaluation metrics need a classification model");
    if (rows.empty()) throw Error("cannot evaluate an empty split");
    const Engine<Scalar> engine(flat, cfg);
    SplitEvaluation out;
    out.predictions.reserve(rows.size());
    double visited = 0, trees = 0, cycles = 0, stopped = 0;
    for (const auto& x : rows) {
        const auto p = engine.predict(x);
        out.predictions.push_back(p.predicted_class);
        visited += static_cast<double>(p.trace.visited_nodes_total);
        trees += p.trace.trees_executed;
        cycles += p.cost.total_cycles;
        stopped += p.trace.stopped_early ? 1 : 0;
    }
    const auto n = static_cast<double>(rows.size());
    out.mean_visited_nodes = visited / n;
    out.mean_trees = trees / n;
    out.mean_total_cycles = cycles / n;
    out.early_stop_fraction = stopped / n;
    out.score = metric(out.predictions, labels, metric_kind);
    return out;
}

/// Per-sample outputs and visited nodes of every estimator unit.
struct UnitTable {
    int samples = 0;
    int units = 0;
    int slots = 0;
    std::vector<double> outputs; // [sample][unit][slot]
    std::vector<int> visited;    // [sample][unit]

    double output(int s, int u, int c) const {
        return outputs[(static_cast<std::size_t>(s) * units + u) * slots + c];
    }
};

template <EnsembleScalar Scalar>
UnitTable unit_table(const FlatEnsemble<Scalar>& flat, const Dataset& data) {
    const Engine<Scalar> engine(flat, EngineConfig{});
    UnitTable table;
    table.samples = static_cast<int>(data.n_rows());
    table.units = flat.meta.n_estimators;
    table.slots = static_cast<int>(engine.zero_accumulator().size());
    table.outputs.resize(static_cast<std::size_t>(table.samples) * table.units * table.slots);
    table.visited.resize(static_cast<std::size_t>(table.samples) * table.units);
    const int group = flat.meta.trees_per_estimator();
    std::vector<int> leaves(static_cast<std::size_t>(flat.n_trees()));
    for (int s = 0; s < table.samples; ++s) {
        const Vector<Scalar> x = prepare_input(flat, data.features.row(s));
        for (int u = 0; u < table.units; ++u) {
            int visited = 0;
            for (int k = 0; k < group; ++k) {
                const int t = u * group + k;
                const TreeResult r = eval_tree<Scalar>(flat, t, x);
                leaves[static_cast<std::size_t>(t)] = r.leaf_node;
                visited += r.visited;
            }
            const Vector<Scalar> out = engine.unit_output(u * group, leaves);
            for (int c = 0; c < table.slots; ++c) {
                table.outputs[(static_cast<std::size_t>(s) * table.units + u) * table.slots + c] =
                    static_cast<double>(out(c));
            }
            table.visited[static_cast<std::size_t>(s) * table.units + u] = visited;
        }
    }
    return table;
}

/// Largest change one estimator unit can make to any class-score gap.
template <EnsembleScalar Scalar>
std::vector<double> unit_swings(const FlatEnsemble<Scalar>& flat) {
    const Engine<Scalar> engine(flat, EngineConfig{});
    const int group = flat.meta.trees_per_estimator();
    const auto slots = engine.zero_accumulator().size();
    std::vector<double> swings;
    for (int u = 0; u < flat.meta.n_estimators; ++u) {
        Eigen::VectorXd lo = Eigen::VectorXd::Zero(slots);
        Eigen::VectorXd hi = Eigen::VectorXd::Zero(slots);
        for (int k = 0; k < group; ++k) {
            const int t = u * group + k;
            const auto [begin, end] = flat.tree_span(t);
            Eigen::VectorXd tlo = Eigen::VectorXd::Constant(slots, std::numeric_limits<double>::infinity());
            Eigen::VectorXd thi = -tlo;
            for (int n = begin; n < end; ++n) {
                if (!flat.nodes[static_cast<std::size_t>(n)].is_leaf()) continue;
                Vector<Scalar> v = engine.zero_accumulator();
                engine.accumulate(t, n, v);
                const Eigen::VectorXd d = v.template cast<double>();
                tlo = tlo.cwiseMin(d);
                thi = thi.cwiseMax(d);
            }
            lo += tlo;
            hi += thi;
        }
        swings.push_back(hi.maxCoeff() - lo.minCoeff());
    }
    return swings;
}

} // namespace

template <EnsembleScalar Scalar>
SplitEvaluation evaluate_dataset(const FlatEnsemble<Scalar>& flat, const EngineConfig& cfg, const Dataset& data,
                                 MetricKind metric_kind) {
    return evaluate_rows(flat, cfg, prepare_rows(flat, data), data.class_labels(), metric_kind);
}

PolicyConfig sweep_policy(PolicyConfig base, ModelKind kind, double t) {
    if (base.kind != PolicyKind::Qwyc) {
        base.threshold = t;
        return base;
    }
    auto& q = base.qwyc;
    q.plus_enabled = true;
    q.minus_enabled = true;
    if (kind == ModelKind::RandomForest) {
        q.eps_plus = 0.5 + t / 2.0;
        q.eps_minus = 0.5 - t / 2.0;
    } else {
        q.eps_plus = t;
        q.eps_minus = -t;
    }
    return base;
}

template <EnsembleScalar Scalar>
std::vector<SweepPoint> threshold_sweep(const FlatEnsemble<Scalar>& flat, const PolicyConfig& policy,
                                        std::span<const double> thresholds, const EngineConfig& cfg,
                                        const Dataset& data, MetricKind metric_kind, bool parallel) {
    if (thresholds.empty()) throw Error("threshold sweep needs at least one threshold");
    for (double t : thresholds) {
        if (std::isnan(t)) throw Error("threshold sweep got a NaN threshold");
    }
    // Fail early on incompatible policies (e.g. QWYC on M > 2).
    compile_policy(sweep_policy(policy, flat.meta.kind, thresholds.front()), policy_context(flat));

    std::vector<SweepPoint> points;
    for (Split split : {Split::Validation, Split::Test}) {
        if (!data.has_split(split)) continue;
        const Dataset part = data.select(split);
        const auto rows = prepare_rows(flat, part);
        const auto labels = part.class_labels();
        auto run = [&](double t) {
            EngineConfig c = cfg;
            c.policy = sweep_policy(policy, flat.meta.kind, t);
            const SplitEvaluation e = evaluate_rows(flat, c, rows, labels, metric_kind);
            return SweepPoint{t, e.mean_visited_nodes, e.mean_trees, e.mean_total_cycles, e.score, split};
        };
        if (parallel) {
            std::vector<std::future<SweepPoint>> jobs;
            for (double t : thresholds) jobs.push_back(std::async(std::launch::async, run, t));
            for (auto& j : jobs) points.push_back(j.get());
        } else {
            for (double t : thresholds) points.push_back(run(t));
        }
    }
    if (points.empty()) throw Error("dataset has neither a validation nor a test split");
    return points;
}

template <EnsembleScalar Scalar>
std::vector<double> default_thresholds(const FlatEnsemble<Scalar>& flat, const PolicyConfig& policy,
                                       const Dataset& validation, int points) {
    const bool rf = flat.meta.kind == ModelKind::RandomForest;
    const bool aggregated = policy.kind == PolicyKind::AggMax || policy.kind == PolicyKind::AggScoreMargin;
    std::vector<double> out;
    if (rf && (policy.normalized || !aggregated)) {
        for (int i = 0; i <= 20; ++i) out.push_back(i / 20.0);
        out.push_back(PolicyConfig::never_stop());
        return out;
    }
    if (points < 2) throw Error("need at least 2 grid points");
    if (validation.n_rows() == 0) throw Error("default thresholds need validation data");

    double to_real = 1.0;
    if constexpr (is_quantized_v<Scalar>) {
        const QuantSpec& q = flat.meta.quant.value();
        to_real = rf ? 1.0 / static_cast<double>(leaf_unit(flat)) : 1.0 / quant_factor(q.leaf_scale, q.leaf_bits);
    }
    const UnitTable table = unit_table(flat, validation);
    double hi = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    Eigen::VectorXd acc(table.slots);
    for (int s = 0; s < table.samples; ++s) {
        acc.setZero();
        for (int u = 0; u < table.units; ++u) {
            Eigen::VectorXd unit(table.slots);
            for (int c = 0; c < table.slots; ++c) unit(c) = table.output(s, u, c);
            acc += unit;
            double score = 0.0;
            if (policy.kind == PolicyKind::Qwyc) {
                score = std::abs(acc(1));
            } else {
                const Eigen::VectorXd& v = aggregated ? acc : unit;
                score = policy.kind == PolicyKind::Max || policy.kind == PolicyKind::AggMax ? score_max(v)
                                                                                             : score_margin(v);
            }
            score *= to_real;
            hi = std::max(hi, score);
            if (score > 0) lo = std::min(lo, score);
        }
    }
    out.push_back(0.0);
    if (hi > 0) {
        lo = std::max(lo, hi * 1e-3);
        for (int i = 0; i < points; ++i) out.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1)));
    }
    out.push_back(PolicyConfig::never_stop());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// ---------------------------------------------------------------- grid search

namespace {

std::vector<int> range(int lo, int hi) {
    std::vector<int> out(static_cast<std::size_t>(hi - lo + 1));
    std::iota(out.begin(), out.end(), lo);
    return out;
}

} // namespace

GridSpace GridSpace::full() {
    GridSpace s;
    s.depths = range(1, 15);
    s.estimators = range(1, 40);
    s.input_bits = {8, 16, 32};
    s.leaf_bits = {8, 16, 32};
    return s;
}

GridSpace GridSpace::desk() {
    GridSpace s;
    s.depths = range(1, 8);
    s.estimators = range(1, 16);
    s.input_bits = {8, 16, 32};
    s.leaf_bits = {8, 16, 32};
    return s;
}

void check_grid_space(const GridSpace& space) {
    if (space.depths.empty() || space.estimators.empty() || space.input_bits.empty() || space.leaf_bits.empty() ||
        space.kinds.empty()) {
        throw Error("grid space has an empty range");
    }
    for (int d : space.depths) {
        if (d < 1) throw Error("grid depths must be positive");
    }
    for (int n : space.estimators) {
        if (n < 1) throw Error("grid estimator counts must be positive");
    }
    for (int b : space.input_bits) check_bits(b);
    for (int b : space.leaf_bits) check_bits(b);
}

std::vector<GridParams> enumerate_grid(const GridSpace& space) {
    check_grid_space(space);
    std::vector<GridParams> out;
    out.reserve(space.size() * space.kinds.size());
    for (ModelKind kind : space.kinds) {
        for (int d : space.depths) {
            for (int n : space.estimators) {
                for (int ib : space.input_bits) {
                    for (int lb : space.leaf_bits) out.push_back(GridParams{kind, d, n, ib, lb});
                }
            }
        }
    }
    return out;
}

std::vector<GridResult> grid_search(const GridSpace& space, const Dataset& data, const GridOptions& options) {
    check_grid_space(space);
    for (Split s : {Split::Train, Split::Validation, Split::Test}) {
        if (!data.has_split(s)) throw Error("grid search needs train, val and test splits");
    }
    const Dataset train = data.select(Split::Train);
    const Dataset val = data.select(Split::Validation);
    const Dataset test = data.select(Split::Test);
    const int max_estimators = *std::max_element(space.estimators.begin(), space.estimators.end());

    auto job = [&](ModelKind kind, int depth) {
        FitParams fit = options.fit;
        fit.n_estimators = max_estimators;
        fit.max_depth = depth;
        const LogicalEnsemble logical = kind == ModelKind::RandomForest ? fit_random_forest(train, fit) : fit_gbt(train, fit);
        const bool fold = options.fold_leaves && logical.meta.natural_leaf_arity() == 1;
        const FlatEnsemble<double> full = build_flat(logical, fold);
        std::vector<GridResult> results;
        for (int n : space.estimators) {
            const FlatEnsemble<double> prefix = truncate_estimators(full, n);
            for (int ib : space.input_bits) {
                for (int lb : space.leaf_bits) {
                    QuantSpec spec;
                    spec.input_bits = ib;
                    spec.leaf_bits = lb;
                    GridResult r;
                    r.params = GridParams{kind, depth, n, ib, lb};
                    r.model = quantize_model(prefix, spec, train.features);
                    const MemorySizes sizes = memory_sizes(r.model, *r.model.meta.quant);
                    r.model_bytes = sizes.mandatory() + sizes.model_bytes();
                    if (r.model_bytes > options.budget_bytes) continue;
                    const SplitEvaluation v = evaluate_dataset(r.model, EngineConfig{}, val, options.metric);
                    r.val_score = v.score;
                    r.mean_visited_nodes = v.mean_visited_nodes;
                    r.test_score = evaluate_dataset(r.model, EngineConfig{}, test, options.metric).score;
                    results.push_back(std::move(r));
                }
            }
        }
        return results;
    };

    std::vector<std::vector<GridResult>> parts;
    if (options.parallel) {
        std::vector<std::future<std::vector<GridResult>>> jobs;
        for (ModelKind kind : space.kinds) {
            for (int d : space.depths) jobs.push_back(std::async(std::launch::async, job, kind, d));
        }
        for (auto& j : jobs) parts.push_back(j.get());
    } else {
        for (ModelKind kind : space.kinds) {
            for (int d : space.depths) parts.push_back(job(kind, d));
        }
    }

    // Restore enumeration order: estimators vary faster than depth.
    std::vector<GridResult> results;
    for (auto& p : parts) {
        for (auto& r : p) results.push_back(std::move(r));
    }
    auto key = [&](const GridParams& p) {
        const auto pos = [](const auto& v, auto x) { return std::find(v.begin(), v.end(), x) - v.begin(); };
        return std::array<long, 5>{pos(space.kinds, p.kind), pos(space.depths, p.depth), pos(space.estimators, p.n_estimators),
                                   pos(space.input_bits, p.input_bits), pos(space.leaf_bits, p.leaf_bits)};
    };
    std::stable_sort(results.begin(), results.end(),
                     [&](const GridResult& a, const GridResult& b) { return key(a.params) < key(b.params); });
    if (results.empty()) throw Error("no grid configuration fits the memory budget");

    std::size_t best = 0;
    for (std::size_t i = 1; i < results.size(); ++i) {
        const auto& r = results[i];
        const auto& b = results[best];
        if (r.val_score > b.val_score || (r.val_score == b.val_score && r.mean_visited_nodes < b.mean_visited_nodes)) {
            best = i;
        }
    }
    results[best].seed = true;
    return results;
}

// ---------------------------------------------------------------- pareto

std::vector<std::size_t> pareto_front(std::span<const ParetoInput> points) {
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (points[a].cost != points[b].cost) return points[a].cost < points[b].cost;
        if (points[a].select_score != points[b].select_score) return points[a].select_score > points[b].select_score;
        return a < b;
    });
    std::vector<std::size_t> out;
    double best_cheaper = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && points[order[j]].cost == points[order[i]].cost) ++j;
        // Within an equal-cost group the first entry has the top score.
        const double top = points[order[i]].select_score;
        if (top > best_cheaper) {
            for (std::size_t k = i; k < j && points[order[k]].select_score == top; ++k) out.push_back(order[k]);
            best_cheaper = top;
        }
        i = j;
    }
    return out;
}

std::string to_string(CostAxis axis) {
    switch (axis) {
    case CostAxis::VisitedNodes: return "visited_nodes";
    case CostAxis::Trees: return "trees";
    case CostAxis::TotalCycles: return "total_cycles";
    case CostAxis::ModelBytes: return "model_bytes";
    }
    return "unknown";
}

CostAxis parse_cost_axis(std::string_view text) {
    if (text == "visited_nodes") return CostAxis::VisitedNodes;
    if (text == "trees") return CostAxis::Trees;
    if (text == "total_cycles" || text == "cycles") return CostAxis::TotalCycles;
    if (text == "model_bytes" || text == "bytes") return CostAxis::ModelBytes;
    throw Error("unknown cost axis '" + std::string(text) + "'");
}

namespace {

std::string format_threshold(double t) {
    char buf[48];
    if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
    std::snprintf(buf, sizeof buf, "%.10g", t);
    return buf;
}

std::vector<ParetoRow> select_rows(const std::vector<ParetoRow>& rows) {
    std::vector<ParetoInput> inputs;
    inputs.reserve(rows.size());
    for (const auto& r : rows) inputs.push_back({r.cost, r.select_score, r.report_score});
    std::vector<ParetoRow> out;
    for (std::size_t i : pareto_front(inputs)) out.push_back(rows[i]);
    return out;
}

} // namespace

std::vector<ParetoRow> sweep_pareto(std::span<const SweepPoint> points, CostAxis axis, Split select, Split report) {
    std::vector<ParetoRow> rows;
    for (const auto& p : points) {
        if (p.split != select) continue;
        const auto match = std::find_if(points.begin(), points.end(), [&](const SweepPoint& q) {
            return q.split == report && q.threshold == p.threshold;
        });
        if (match == points.end()) continue;
        double cost = 0.0;
        switch (axis) {
        case CostAxis::VisitedNodes: cost = p.mean_visited_nodes; break;
        case CostAxis::Trees: cost = p.mean_trees; break;
        case CostAxis::TotalCycles: cost = p.mean_total_cycles; break;
        case CostAxis::ModelBytes: throw Error("sweep points carry no model size");
        }
        rows.push_back({"t=" + format_threshold(p.threshold), p.threshold, cost, p.score, match->score});
    }
    return select_rows(rows);
}

std::vector<ParetoRow> grid_pareto(std::span<const GridResult> results, CostAxis axis, Split select, Split report) {
    auto score = [](const GridResult& r, Split s) {
        if (s == Split::Train) throw Error("grid results carry no train score");
        return s == Split::Validation ? r.val_score : r.test_score;
    };
    std::vector<ParetoRow> rows;
    for (const auto& r : results) {
        double cost = 0.0;
        switch (axis) {
        case CostAxis::VisitedNodes: cost = r.mean_visited_nodes; break;
        case CostAxis::Trees: cost = r.model.n_trees(); break;
        case CostAxis::ModelBytes: cost = static_cast<double>(r.model_bytes); break;
        case CostAxis::TotalCycles: throw Error("grid results carry no cycle counts");
        }
        const auto& p = r.params;
        rows.push_back({to_string(p.kind) + " d=" + std::to_string(p.depth) + " n=" + std::to_string(p.n_estimators) +
                            " in=" + std::to_string(p.input_bits) + " leaf=" + std::to_string(p.leaf_bits),
                        0.0, cost, score(r, select), score(r, report)});
    }
    return select_rows(rows);
}

// ---------------------------------------------------------------- ordering

std::string to_string(OrderStrategy strategy) {
    switch (strategy) {
    case OrderStrategy::Training: return "training";
    case OrderStrategy::Random: return "random";
    case OrderStrategy::Score: return "score";
    case OrderStrategy::QwycLike: return "qwyc_like";
    }
    return "unknown";
}

OrderStrategy parse_order_strategy(std::string_view text) {
    if (text == "training") return OrderStrategy::Training;
    if (text == "random") return OrderStrategy::Random;
    if (text == "score") return OrderStrategy::Score;
    if (text == "qwyc_like" || text == "qwyc") return OrderStrategy::QwycLike;
    throw Error("unknown ordering strategy '" + std::string(text) + "'");
}

template <EnsembleScalar Scalar>
std::vector<int> estimator_order(const FlatEnsemble<Scalar>& flat, OrderStrategy strategy, const Dataset* validation,
                                 std::uint64_t seed) {
    const int units = flat.meta.n_estimators;
    std::vector<int> order(static_cast<std::size_t>(units));
    std::iota(order.begin(), order.end(), 0);
    if (strategy == OrderStrategy::Training) return order;
    if (strategy == OrderStrategy::Random) {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
        return order;
    }
    if (validation == nullptr || validation->n_rows() == 0) {
        throw Error("ordering strategy '" + to_string(strategy) + "' needs validation data");
    }
    if (flat.meta.task != Task::Classification) throw Error("ordering by score needs a classification model");
    const UnitTable table = unit_table(flat, *validation);
    const auto labels = validation->class_labels();
    auto unit_vector = [&](int s, int u) {
        Eigen::VectorXd v(table.slots);
        for (int c = 0; c < table.slots; ++c) v(c) = table.output(s, u, c);
        return v;
    };

    if (strategy == OrderStrategy::Score) {
        std::vector<double> accuracy(static_cast<std::size_t>(units), 0.0);
        for (int u = 0; u < units; ++u) {
            int hits = 0;
            for (int s = 0; s < table.samples; ++s) hits += argmax(unit_vector(s, u)) == labels[static_cast<std::size_t>(s)];
            accuracy[static_cast<std::size_t>(u)] = static_cast<double>(hits) / table.samples;
        }
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return accuracy[static_cast<std::size_t>(a)] > accuracy[static_cast<std::size_t>(b)];
        });
        return order;
    }

    // qwyc_like
    const std::vector<double> swing = unit_swings(flat);
    std::vector<int> final_class(static_cast<std::size_t>(table.samples));
    std::vector<Eigen::VectorXd> partial(static_cast<std::size_t>(table.samples), Eigen::VectorXd::Zero(table.slots));
    for (int s = 0; s < table.samples; ++s) {
        Eigen::VectorXd total = Eigen::VectorXd::Zero(table.slots);
        for (int u = 0; u < units; ++u) total += unit_vector(s, u);
        final_class[static_cast<std::size_t>(s)] = argmax(total);
    }
    auto margin = [&](const Eigen::VectorXd& acc, int f) {
        double runner = -std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < acc.size(); ++c) {
            if (c != f) runner = std::max(runner, acc(c));
        }
        return acc(f) - runner;
    };

    std::vector<bool> decided(static_cast<std::size_t>(table.samples), false);
    std::vector<bool> placed(static_cast<std::size_t>(units), false);
    double remaining = std::accumulate(swing.begin(), swing.end(), 0.0);
    std::vector<int> out;
    for (int step = 0; step < units; ++step) {
        int best = -1;
        int best_new = -1;
        long best_cost = 0;
        for (int u = 0; u < units; ++u) {
            if (placed[static_cast<std::size_t>(u)]) continue;
            const double rest = remaining - swing[static_cast<std::size_t>(u)];
            int fresh = 0;
            long cost = 0;
            for (int s = 0; s < table.samples; ++s) {
                if (decided[static_cast<std::size_t>(s)]) continue;
                cost += table.visited[static_cast<std::size_t>(s) * units + u];
                const Eigen::VectorXd next = partial[static_cast<std::size_t>(s)] + unit_vector(s, u);
                fresh += margin(next, final_class[static_cast<std::size_t>(s)]) > rest ? 1 : 0;
            }
            if (fresh > best_new || (fresh == best_new && cost < best_cost)) {
                best = u;
                best_new = fresh;
                best_cost = cost;
            }
        }
        placed[static_cast<std::size_t>(best)] = true;
        remaining -= swing[static_cast<std::size_t>(best)];
        out.push_back(best);
        for (int s = 0; s < table.samples; ++s) {
            partial[static_cast<std::size_t>(s)] += unit_vector(s, best);
            if (!decided[static_cast<std::size_t>(s)]) {
                decided[static_cast<std::size_t>(s)] =
                    margin(partial[static_cast<std::size_t>(s)], final_class[static_cast<std::size_t>(s)]) > remaining;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------- reports

namespace {

std::string num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

} // namespace

void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points) {
    out << "split,threshold,mean_visited_nodes,mean_trees,mean_total_cycles,score\n";
    for (const auto& p : points) {
        out << to_string(p.split) << ',' << num(p.threshold) << ',' << num(p.mean_visited_nodes) << ','
            << num(p.mean_trees) << ',' << num(p.mean_total_cycles) << ',' << num(p.score) << '\n';
    }
}

void write_grid_csv(std::ostream& out, std::span<const GridResult> results) {
    out << "kind,depth,n_estimators,input_bits,leaf_bits,val_score,test_score,mean_visited_nodes,model_bytes,seed\n";
    for (const auto& r : results) {
        const auto& p = r.params;
        out << to_string(p.kind) << ',' << p.depth << ',' << p.n_estimators << ',' << p.input_bits << ','
            << p.leaf_bits << ',' << num(r.val_score) << ',' << num(r.test_score) << ',' << num(r.mean_visited_nodes)
            << ',' << r.model_bytes << ',' << (r.seed ? 1 : 0) << '\n';
    }
}

void write_pareto_csv(std::ostream& out, std::span<const ParetoRow> rows) {
    out << "label,threshold,cost,select_score,report_score\n";
    for (const auto& r : rows) {
        out << r.label << ',' << num(r.threshold) << ',' << num(r.cost) << ',' << num(r.select_score) << ','
            << num(r.report_score) << '\n';
    }
}

std::string plotdata_json(std::span<const PlotCurve> curves) {
    nlohmann::json j;
    j["curves"] = nlohmann::json::array();
    for (const auto& c : curves) {
        nlohmann::json pts = nlohmann::json::array();
        for (const auto& p : c.points) {
            pts.push_back({{"label", p.label},
                           {"threshold", std::isinf(p.threshold) ? nlohmann::json("inf") : nlohmann::json(p.threshold)},
                           {"x", p.cost},
                           {"y", p.report_score},
                           {"select_score", p.select_score}});
        }
        j["curves"].push_back({{"name", c.name}, {"points", std::move(pts)}});
    }
    return j.dump(1) + "\n";
}

#define ADAPTREE_HARNESS_INSTANTIATE(S)                                                                              \
    template SplitEvaluation evaluate_dataset(const FlatEnsemble<S>&, const EngineConfig&, const Dataset&, MetricKind); \
    template std::vector<SweepPoint> threshold_sweep(const FlatEnsemble<S>&, const PolicyConfig&,                     \
                                                     std::span<const double>, const EngineConfig&, const Dataset&,   \
                                                     MetricKind, bool);                                              \
    template std::vector<double> default_thresholds(const FlatEnsemble<S>&, const PolicyConfig&, const Dataset&, int); \
    template std::vector<int> estimator_order(const FlatEnsemble<S>&, OrderStrategy, const Dataset*, std::uint64_t);
ADAPTREE_HARNESS_INSTANTIATE(double)
ADAPTREE_HARNESS_INSTANTIATE(std::int32_t)

} // namespace adaptree
