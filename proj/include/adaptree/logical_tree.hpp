#ifndef ADAPTREE_LOGICAL_TREE_HPP
#define ADAPTREE_LOGICAL_TREE_HPP

#include "adaptree/common.hpp"

#include <optional>
#include <vector>

namespace adaptree {

/// Quantizer parameters shared by inputs/thresholds and leaves.
struct QuantSpec {
    int input_bits = 16;
    int leaf_bits = 16;
    double input_scale = 0.0; // max |x| over training inputs
    double leaf_scale = 0.0;  // max |accumulated output| over training samples

    friend bool operator==(const QuantSpec&, const QuantSpec&) = default;
};

struct EnsembleMeta {
    ModelKind kind = ModelKind::RandomForest;
    int n_estimators = 1;
    int n_classes = 2;
    int max_depth = 1;
    Task task = Task::Classification;
    int n_features = 0;
    std::optional<QuantSpec> quant;

    /// One tree per estimator for RFs, binary GBTs and regression; M trees
    /// per estimator for multi-class GBTs.
    int trees_per_estimator() const {
        return kind == ModelKind::GradientBoosting && task == Task::Classification && n_classes > 2
                   ? n_classes
                   : 1;
    }
    int n_trees() const { return n_estimators * trees_per_estimator(); }

    /// Number of values stored per leaf by the trainer for this model type.
    int natural_leaf_arity() const {
        if (task == Task::Regression || kind == ModelKind::GradientBoosting) return 1;
        return n_classes == 2 ? 1 : n_classes;
    }

    friend bool operator==(const EnsembleMeta&, const EnsembleMeta&) = default;
};

/// Validates the structural invariants of the metadata block.
void check_meta(const EnsembleMeta& meta);

struct LogicalNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<double> values; // leaves only

    bool is_leaf() const { return left < 0; }
};

/// Pointer-free binary tree; nodes[0] is the root.
struct LogicalTree {
    std::vector<LogicalNode> nodes;

    static LogicalTree leaf(std::vector<double> values);
    static LogicalTree split(int feature, double threshold, const LogicalTree& left, const LogicalTree& right);

    int depth() const;
    int node_count() const { return static_cast<int>(nodes.size()); }
    int leaf_count() const;
    int max_feature() const;
};

struct LogicalEnsemble {
    EnsembleMeta meta;
    std::vector<LogicalTree> trees;
};

namespace detail {
template <typename Derived>
const std::vector<double>& evaluate_from(const LogicalTree& tree, int node, const Eigen::DenseBase<Derived>& input) {
    const LogicalNode& n = tree.nodes.at(static_cast<std::size_t>(node));
    if (n.is_leaf()) return n.values;
    const double x = static_cast<double>(input(n.feature));
    return evaluate_from(tree, x > n.threshold ? n.right : n.left, input);
}
} // namespace detail

/// Recursive reference evaluation: `x > threshold` descends right.
template <typename Derived>
const std::vector<double>& evaluate(const LogicalTree& tree, const Eigen::DenseBase<Derived>& input) {
    return detail::evaluate_from(tree, 0, input);
}

} // namespace adaptree

#endif
