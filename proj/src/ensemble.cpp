#include "adaptree/ensemble.hpp"

#include <cmath>
#include <functional>

namespace adaptree {

std::string to_string(ModelKind kind) { return kind == ModelKind::RandomForest ? "rf" : "gbt"; }
std::string to_string(Task task) { return task == Task::Classification ? "classification" : "regression"; }
std::string to_string(MemoryLevel level) { return level == MemoryLevel::L1 ? "L1" : "L2"; }

ModelKind parse_model_kind(std::string_view text) {
    if (text == "rf" || text == "RF" || text == "random_forest") return ModelKind::RandomForest;
    if (text == "gbt" || text == "GBT" || text == "gradient_boosting") return ModelKind::GradientBoosting;
    throw Error("unknown model kind '" + std::string(text) + "'");
}

Task parse_task(std::string_view text) {
    if (text == "classification") return Task::Classification;
    if (text == "regression") return Task::Regression;
    throw Error("unknown task '" + std::string(text) + "'");
}

void check_meta(const EnsembleMeta& meta) {
    if (meta.n_estimators < 1) throw Error("n_estimators must be >= 1");
    if (meta.n_classes < 1) throw Error("n_classes must be >= 1");
    if (meta.max_depth < 1) throw Error("max_depth must be >= 1");
    if (meta.n_features < 0) throw Error("n_features must be >= 0");
    if (meta.task == Task::Classification && meta.n_classes < 2) {
        throw Error("classification requires at least 2 classes");
    }
}

LogicalTree LogicalTree::leaf(std::vector<double> values) {
    LogicalTree tree;
    tree.nodes.push_back(LogicalNode{.values = std::move(values)});
    return tree;
}

LogicalTree LogicalTree::split(int feature, double threshold, const LogicalTree& left, const LogicalTree& right) {
    if (feature < 0) throw Error("split feature must be non-negative");
    LogicalTree tree;
    tree.nodes.reserve(1 + left.nodes.size() + right.nodes.size());
    tree.nodes.push_back(LogicalNode{.feature = feature, .threshold = threshold, .left = -1, .right = -1, .values = {}});
    auto append = [&tree](const LogicalTree& sub) {
        const int base = tree.node_count();
        for (LogicalNode n : sub.nodes) {
            if (!n.is_leaf()) {
                n.left += base;
                n.right += base;
            }
            tree.nodes.push_back(std::move(n));
        }
        return base;
    };
    const int l = append(left);
    const int r = append(right);
    tree.nodes[0].left = l;
    tree.nodes[0].right = r;
    return tree;
}

int LogicalTree::depth() const {
    if (nodes.empty()) throw Error("empty tree");
    std::function<int(int, int)> walk = [&](int node, int guard) -> int {
        if (guard > static_cast<int>(nodes.size())) throw Error("cycle in logical tree");
        const auto& n = nodes.at(static_cast<std::size_t>(node));
        if (n.is_leaf()) return 0;
        return 1 + std::max(walk(n.left, guard + 1), walk(n.right, guard + 1));
    };
    return walk(0, 0);
}

int LogicalTree::leaf_count() const {
    return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return n.is_leaf(); }));
}

int LogicalTree::max_feature() const {
    int best = -1;
    for (const auto& n : nodes) {
        if (!n.is_leaf()) best = std::max(best, n.feature);
    }
    return best;
}

namespace {

int uniform_leaf_arity(std::span<const LogicalTree> trees) {
    int arity = -1;
    for (const auto& tree : trees) {
        for (const auto& n : tree.nodes) {
            if (!n.is_leaf()) continue;
            const int a = static_cast<int>(n.values.size());
            if (a == 0) throw Error("leaf without values");
            if (arity >= 0 && a != arity) throw Error("leaf arity mismatch across leaves");
            arity = a;
        }
    }
    return arity;
}

} // namespace

FlatEnsemble<double> build_flat(std::span<const LogicalTree> trees, const EnsembleMeta& meta, bool fold_leaves) {
    check_meta(meta);
    if (static_cast<int>(trees.size()) != meta.n_trees()) {
        throw Error("expected " + std::to_string(meta.n_trees()) + " trees, got " + std::to_string(trees.size()));
    }
    const int arity = uniform_leaf_arity(trees);
    const bool rf_full = meta.kind == ModelKind::RandomForest && meta.task == Task::Classification &&
                         arity == meta.n_classes;
    if (arity != meta.natural_leaf_arity() && !rf_full) {
        throw Error("leaf arity " + std::to_string(arity) + " does not match the model type");
    }
    if (fold_leaves && arity != 1) throw Error("leaf folding requires single-value leaves");

    FlatEnsemble<double> flat;
    flat.meta = meta;
    flat.folded = fold_leaves;
    int max_feature = -1;
    std::size_t total_nodes = 0;
    std::size_t total_leaves = 0;
    for (const auto& tree : trees) {
        if (tree.depth() > meta.max_depth) {
            throw Error("tree depth " + std::to_string(tree.depth()) + " exceeds max_depth " +
                        std::to_string(meta.max_depth));
        }
        max_feature = std::max(max_feature, tree.max_feature());
        total_nodes += tree.nodes.size();
        total_leaves += static_cast<std::size_t>(tree.leaf_count());
    }
    if (total_nodes > static_cast<std::size_t>(kMaxNodes)) {
        throw Error("ensemble has " + std::to_string(total_nodes) + " nodes, limit is " + std::to_string(kMaxNodes));
    }
    if (max_feature >= (1 << 15)) throw Error("feature index does not fit in 16 bits");
    if (meta.n_features == 0) {
        flat.meta.n_features = max_feature + 1;
    } else if (max_feature >= meta.n_features) {
        throw Error("feature index " + std::to_string(max_feature) + " out of range");
    }
    // Dequantized leaves carry rounding error, so the row-sum check only
    // applies to real-valued models.
    const bool leaf_quantized = meta.quant && meta.quant->leaf_scale > 0.0;
    if (meta.kind == ModelKind::RandomForest && meta.task == Task::Classification && !leaf_quantized) {
        for (const auto& tree : trees) {
            for (const auto& n : tree.nodes) {
                if (!n.is_leaf()) continue;
                if (arity == 1) {
                    if (n.values[0] < -1e-6 || n.values[0] > 1.0 + 1e-6) throw Error("binary RF leaf outside [0,1]");
                } else {
                    double sum = 0.0;
                    for (double v : n.values) sum += v;
                    if (std::abs(sum - 1.0) > 1e-6) throw Error("RF leaf probabilities do not sum to 1");
                }
            }
        }
    }

    flat.nodes.reserve(total_nodes);
    if (!fold_leaves) flat.leaves.resize(static_cast<Eigen::Index>(total_leaves), arity);
    int leaf_row = 0;
    for (const auto& tree : trees) {
        flat.roots.push_back(static_cast<std::int32_t>(flat.nodes.size()));
        std::function<void(int)> emit = [&](int node) {
            const auto& n = tree.nodes[static_cast<std::size_t>(node)];
            const auto index = flat.nodes.size();
            flat.nodes.emplace_back();
            if (n.is_leaf()) {
                if (fold_leaves) {
                    flat.nodes[index].alpha = n.values[0];
                } else {
                    flat.nodes[index].right = leaf_row;
                    for (int j = 0; j < arity; ++j) flat.leaves(leaf_row, j) = n.values[static_cast<std::size_t>(j)];
                    ++leaf_row;
                }
                return;
            }
            flat.nodes[index].fidx = n.feature;
            flat.nodes[index].alpha = n.threshold;
            emit(n.left);
            flat.nodes[index].right = static_cast<std::int32_t>(flat.nodes.size() - index);
            emit(n.right);
        };
        emit(0);
    }
    return flat;
}

LogicalEnsemble unflatten(const FlatEnsemble<double>& flat) {
    LogicalEnsemble out;
    out.meta = flat.meta;
    for (int t = 0; t < flat.n_trees(); ++t) {
        LogicalTree tree;
        std::function<int(int)> walk = [&](int node) -> int {
            const auto& rec = flat.nodes.at(static_cast<std::size_t>(node));
            const int index = tree.node_count();
            tree.nodes.emplace_back();
            if (rec.is_leaf()) {
                const auto values = flat.leaf_values(node);
                tree.nodes[static_cast<std::size_t>(index)].values.assign(values.data(), values.data() + values.size());
                return index;
            }
            if (rec.right < 2) throw Error("malformed right offset");
            const int l = walk(node + 1);
            const int r = walk(node + rec.right);
            auto& n = tree.nodes[static_cast<std::size_t>(index)];
            n.feature = rec.fidx;
            n.threshold = rec.alpha;
            n.left = l;
            n.right = r;
            return index;
        };
        walk(flat.roots[static_cast<std::size_t>(t)]);
        out.trees.push_back(std::move(tree));
    }
    return out;
}

MemoryPlan plan_memory(const MemorySizes& sizes, std::size_t l1_budget) {
    if (l1_budget <= sizes.mandatory()) {
        throw Error("L1 budget of " + std::to_string(l1_budget) + " B cannot hold INPUT, P and ROOTS (" +
                    std::to_string(sizes.mandatory()) + " B)");
    }
    MemoryPlan plan;
    plan.sizes = sizes;
    plan.l1_budget = l1_budget;
    std::size_t left = l1_budget - sizes.mandatory();
    if (sizes.leaves <= left) {
        plan.leaves = MemoryLevel::L1;
        left -= sizes.leaves;
    }
    if (sizes.nodes <= left) {
        plan.nodes = MemoryLevel::L1;
        left -= sizes.nodes;
    }
    plan.l1_used = l1_budget - left;
    return plan;
}

} // namespace adaptree
