#ifndef ADAPTREE_ENSEMBLE_HPP
#define ADAPTREE_ENSEMBLE_HPP

#include "adaptree/common.hpp"
#include "adaptree/logical_tree.hpp"

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace adaptree {

/// One flattened node. The left child of an internal node is the next
/// record; `right` is the offset to the right child. Leaves carry
/// fidx == kLeafSentinel and reuse `right` as a LEAVES row index, or store
/// their single value in `alpha` when leaves are folded.
template <EnsembleScalar Scalar>
struct NodeRecord {
    std::int32_t fidx = kLeafSentinel;
    Scalar alpha{};
    std::int32_t right = 0;

    bool is_leaf() const { return fidx == kLeafSentinel; }
    friend bool operator==(const NodeRecord&, const NodeRecord&) = default;
};

/// Compiled ensemble: NODES, ROOTS and LEAVES arrays plus metadata.
/// Trees are laid out one after another, each in pre-order.
template <EnsembleScalar Scalar>
struct FlatEnsemble {
    using scalar_type = Scalar;

    EnsembleMeta meta;
    std::vector<NodeRecord<Scalar>> nodes;
    std::vector<std::int32_t> roots;
    RowMatrix<Scalar> leaves; // empty when folded
    bool folded = false;

    int n_trees() const { return static_cast<int>(roots.size()); }
    int n_nodes() const { return static_cast<int>(nodes.size()); }
    int leaf_arity() const { return folded ? 1 : static_cast<int>(leaves.cols()); }

    /// [begin, end) node range of tree t.
    std::pair<int, int> tree_span(int t) const {
        const int begin = roots.at(static_cast<std::size_t>(t));
        const int end = t + 1 < n_trees() ? roots[static_cast<std::size_t>(t) + 1] : n_nodes();
        return {begin, end};
    }

    /// Values stored at a leaf node: one row of LEAVES, or the folded scalar.
    auto leaf_values(int node) const {
        const auto& rec = nodes[static_cast<std::size_t>(node)];
        if (folded) return Vector<Scalar>::Constant(1, rec.alpha).eval();
        return Vector<Scalar>(leaves.row(rec.right).transpose());
    }

    friend bool operator==(const FlatEnsemble& a, const FlatEnsemble& b) {
        return a.meta == b.meta && a.nodes == b.nodes && a.roots == b.roots && a.folded == b.folded &&
               a.leaves.rows() == b.leaves.rows() && a.leaves.cols() == b.leaves.cols() &&
               a.leaves == b.leaves;
    }
};

/// Pre-order flattening of logical trees. Folding stores single-value
/// leaves in `alpha` and drops the LEAVES matrix.
FlatEnsemble<double> build_flat(std::span<const LogicalTree> trees, const EnsembleMeta& meta, bool fold_leaves);
inline FlatEnsemble<double> build_flat(const LogicalEnsemble& model, bool fold_leaves) {
    return build_flat(model.trees, model.meta, fold_leaves);
}

/// Inverse of build_flat for real-valued ensembles.
LogicalEnsemble unflatten(const FlatEnsemble<double>& flat);

// ---------------------------------------------------------------------------
// Validation

struct Violation {
    std::string rule;
    long index = -1; // node index, tree index or -1 for global rules
    std::string detail;
};

namespace rules {
inline constexpr const char* kRightOffset = "right-offset < 2";
inline constexpr const char* kLeafRow = "leaf row out of range";
inline constexpr const char* kBadFeature = "feature index invalid";
inline constexpr const char* kRootsOrder = "roots not strictly increasing";
inline constexpr const char* kRootSpan = "root span mismatch";
inline constexpr const char* kOverrun = "subtree overruns tree";
inline constexpr const char* kDepth = "depth exceeds max_depth";
inline constexpr const char* kTreeCount = "tree count mismatch";
inline constexpr const char* kNodeLimit = "node count exceeds limit";
inline constexpr const char* kLeafArity = "leaf arity mismatch";
} // namespace rules

namespace detail {
template <EnsembleScalar Scalar>
int check_subtree(const FlatEnsemble<Scalar>& flat, int node, int end, int depth, std::vector<Violation>& out) {
    if (node >= end) {
        out.push_back({rules::kOverrun, node, "child index past the end of its tree"});
        return -1;
    }
    if (depth > flat.meta.max_depth) {
        out.push_back({rules::kDepth, node, "node at depth " + std::to_string(depth)});
        return -1;
    }
    const auto& rec = flat.nodes[static_cast<std::size_t>(node)];
    if (rec.is_leaf()) {
        if (!flat.folded && (rec.right < 0 || rec.right >= flat.leaves.rows())) {
            out.push_back({rules::kLeafRow, node, "row " + std::to_string(rec.right)});
        }
        return 1;
    }
    if (rec.fidx < 0 || (flat.meta.n_features > 0 && rec.fidx >= flat.meta.n_features)) {
        out.push_back({rules::kBadFeature, node, "fidx " + std::to_string(rec.fidx)});
    }
    if (rec.right < 2) {
        out.push_back({rules::kRightOffset, node, "right " + std::to_string(rec.right)});
        return -1;
    }
    const int left_size = check_subtree(flat, node + 1, end, depth + 1, out);
    if (left_size < 0) return -1;
    if (left_size != rec.right - 1) {
        out.push_back({rules::kOverrun, node,
                       "left subtree holds " + std::to_string(left_size) + " nodes, offset implies " +
                           std::to_string(rec.right - 1)});
        return -1;
    }
    const int right_size = check_subtree(flat, node + rec.right, end, depth + 1, out);
    if (right_size < 0) return -1;
    return 1 + left_size + right_size;
}
} // namespace detail

/// Reports every violated layout invariant; an empty result means valid.
template <EnsembleScalar Scalar>
std::vector<Violation> validate(const FlatEnsemble<Scalar>& flat) {
    std::vector<Violation> out;
    if (flat.n_nodes() > kMaxNodes) {
        out.push_back({rules::kNodeLimit, -1, std::to_string(flat.n_nodes()) + " nodes"});
    }
    if (flat.n_trees() != flat.meta.n_trees()) {
        out.push_back({rules::kTreeCount, -1,
                       std::to_string(flat.n_trees()) + " roots, meta implies " +
                           std::to_string(flat.meta.n_trees())});
    }
    if (!flat.folded && flat.leaves.cols() != flat.meta.natural_leaf_arity() &&
        !(flat.meta.kind == ModelKind::RandomForest && flat.leaves.cols() == flat.meta.n_classes)) {
        out.push_back({rules::kLeafArity, -1, std::to_string(flat.leaves.cols()) + " values per leaf"});
    }
    for (int t = 0; t < flat.n_trees(); ++t) {
        const auto root = flat.roots[static_cast<std::size_t>(t)];
        const bool ordered = t == 0 ? root == 0 : root > flat.roots[static_cast<std::size_t>(t) - 1];
        if (!ordered || root >= flat.n_nodes()) {
            out.push_back({rules::kRootsOrder, t, "root " + std::to_string(root)});
            return out;
        }
    }
    for (int t = 0; t < flat.n_trees(); ++t) {
        const auto [begin, end] = flat.tree_span(t);
        const int size = detail::check_subtree(flat, begin, end, 0, out);
        if (size >= 0 && size != end - begin) {
            out.push_back({rules::kRootSpan, t,
                           "tree has " + std::to_string(size) + " nodes, span is " + std::to_string(end - begin)});
        }
    }
    return out;
}

/// Physically reorders estimators (groups of trees_per_estimator trees)
/// so that estimator order[k] runs k-th. Leaf rows keep their indices.
template <EnsembleScalar Scalar>
FlatEnsemble<Scalar> permute_estimators(const FlatEnsemble<Scalar>& flat, std::span<const int> order) {
    const int group = flat.meta.trees_per_estimator();
    const int n_units = flat.n_trees() / group;
    if (static_cast<int>(order.size()) != n_units) throw Error("permutation length does not match estimator count");
    std::vector<int> seen(order.begin(), order.end());
    std::sort(seen.begin(), seen.end());
    for (int i = 0; i < n_units; ++i) {
        if (seen[static_cast<std::size_t>(i)] != i) throw Error("order is not a permutation of the estimators");
    }
    FlatEnsemble<Scalar> out;
    out.meta = flat.meta;
    out.leaves = flat.leaves;
    out.folded = flat.folded;
    out.nodes.reserve(flat.nodes.size());
    for (const int unit : order) {
        for (int k = 0; k < group; ++k) {
            const auto [begin, end] = flat.tree_span(unit * group + k);
            out.roots.push_back(static_cast<std::int32_t>(out.nodes.size()));
            out.nodes.insert(out.nodes.end(), flat.nodes.begin() + begin, flat.nodes.begin() + end);
        }
    }
    return out;
}

/// Keeps the first n_estimators estimators and the leaf rows they use.
template <EnsembleScalar Scalar>
FlatEnsemble<Scalar> truncate_estimators(const FlatEnsemble<Scalar>& flat, int n_estimators) {
    if (n_estimators < 1 || n_estimators > flat.meta.n_estimators) throw Error("invalid estimator count");
    FlatEnsemble<Scalar> out;
    out.meta = flat.meta;
    out.meta.n_estimators = n_estimators;
    out.folded = flat.folded;
    const int n_trees = out.meta.n_trees();
    out.roots.assign(flat.roots.begin(), flat.roots.begin() + n_trees);
    const int end = n_trees < flat.n_trees() ? flat.roots[static_cast<std::size_t>(n_trees)] : flat.n_nodes();
    out.nodes.assign(flat.nodes.begin(), flat.nodes.begin() + end);
    if (!flat.folded) {
        // Leaf rows are assigned in pre-order, so the kept trees use a prefix.
        Eigen::Index rows = 0;
        for (const auto& rec : out.nodes) {
            if (rec.is_leaf()) rows = std::max<Eigen::Index>(rows, rec.right + 1);
        }
        out.leaves = flat.leaves.topRows(rows);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Memory placement

enum class MemoryLevel { L1, L2 };

std::string to_string(MemoryLevel level);

/// Byte sizes of the deployed structures.
struct MemorySizes {
    std::size_t input = 0;
    std::size_t accumulator = 0; // P
    std::size_t roots = 0;
    std::size_t nodes = 0;
    std::size_t leaves = 0;

    std::size_t mandatory() const { return input + accumulator + roots; }
    std::size_t model_bytes() const { return roots + nodes + leaves; }
};

struct MemoryPlan {
    MemorySizes sizes;
    MemoryLevel input = MemoryLevel::L1;
    MemoryLevel accumulator = MemoryLevel::L1;
    MemoryLevel roots = MemoryLevel::L1;
    MemoryLevel nodes = MemoryLevel::L2;
    MemoryLevel leaves = MemoryLevel::L2;
    std::size_t l1_budget = 0;
    std::size_t l1_used = 0;
};

/// Bytes needed to hold a value of `bits` bits.
inline std::size_t bytes_for_bits(int bits) { return static_cast<std::size_t>((bits + 7) / 8); }

/// Size accounting: fidx and right take 2 bytes each; alpha takes the input
/// width, or the wider of input and leaf widths when leaves are folded into it.
/// The accumulator is 32-bit. Real-valued models are counted as 32-bit.
template <EnsembleScalar Scalar>
MemorySizes memory_sizes(const FlatEnsemble<Scalar>& flat, const QuantSpec& quant) {
    const std::size_t input_bytes = bytes_for_bits(quant.input_bits);
    const std::size_t leaf_bytes = bytes_for_bits(quant.leaf_bits);
    const std::size_t alpha_bytes = flat.folded ? std::max(input_bytes, leaf_bytes) : input_bytes;
    MemorySizes s;
    s.input = static_cast<std::size_t>(std::max(flat.meta.n_features, 1)) * input_bytes;
    s.accumulator = static_cast<std::size_t>(flat.meta.n_classes) * 4;
    s.roots = static_cast<std::size_t>(flat.n_trees()) * 2;
    s.nodes = static_cast<std::size_t>(flat.n_nodes()) * (2 + alpha_bytes + 2);
    s.leaves = flat.folded ? 0 : static_cast<std::size_t>(flat.leaves.size()) * leaf_bytes;
    return s;
}

template <EnsembleScalar Scalar>
MemorySizes memory_sizes(const FlatEnsemble<Scalar>& flat) {
    return memory_sizes(flat, flat.meta.quant.value_or(QuantSpec{32, 32, 1.0, 1.0}));
}

/// INPUT, P and ROOTS always go to L1; LEAVES then NODES are placed in L1
/// if they fit in what is left, otherwise they stay in L2.
MemoryPlan plan_memory(const MemorySizes& sizes, std::size_t l1_budget);

template <EnsembleScalar Scalar>
MemoryPlan plan_memory(const FlatEnsemble<Scalar>& flat, const QuantSpec& quant, std::size_t l1_budget) {
    return plan_memory(memory_sizes(flat, quant), l1_budget);
}

} // namespace adaptree

#endif
