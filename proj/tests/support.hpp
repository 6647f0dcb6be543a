#ifndef ADAPTREE_TESTS_SUPPORT_HPP
#define ADAPTREE_TESTS_SUPPORT_HPP

#include "adaptree/engine.hpp"
#include "adaptree/ensemble.hpp"
#include "adaptree/quantizer.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace adaptree::test {

using Rng = std::mt19937_64;

inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
inline double uniform_real(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

/// Random probability row of length n.
inline std::vector<double> random_distribution(Rng& rng, int n) {
    std::vector<double> p(static_cast<std::size_t>(n));
    double sum = 0.0;
    for (double& v : p) sum += v = uniform_real(rng, 0.01, 1.0);
    for (double& v : p) v /= sum;
    return p;
}

struct TreeShape {
    int max_depth = 4;
    int n_features = 4;
    double lo = -100.0;     // threshold range
    double hi = 100.0;
    double leaf_prob = 0.3; // chance of stopping early at an internal position
    bool integer_thresholds = false;
};

template <typename LeafGen>
LogicalTree random_tree(Rng& rng, const TreeShape& shape, LeafGen&& leaf, int depth = 0) {
    const bool stop = depth >= shape.max_depth || (depth > 0 && uniform_real(rng, 0.0, 1.0) < shape.leaf_prob);
    if (stop) return LogicalTree::leaf(leaf());
    const int f = uniform_int(rng, 0, shape.n_features - 1);
    double t = uniform_real(rng, shape.lo, shape.hi);
    if (shape.integer_thresholds) t = std::round(t);
    const LogicalTree l = random_tree(rng, shape, leaf, depth + 1);
    const LogicalTree r = random_tree(rng, shape, leaf, depth + 1);
    return LogicalTree::split(f, t, l, r);
}

struct EnsembleShape {
    ModelKind kind = ModelKind::RandomForest;
    int n_estimators = 4;
    int n_classes = 3;
    int max_depth = 4;
    int n_features = 4;
};

/// Random classification ensemble with leaf rows shaped as the trainer
/// would produce them (probabilities for RFs, raw values for GBTs).
inline LogicalEnsemble random_ensemble(Rng& rng, const EnsembleShape& s, const TreeShape& base = {}) {
    LogicalEnsemble model;
    model.meta.kind = s.kind;
    model.meta.n_estimators = s.n_estimators;
    model.meta.n_classes = s.n_classes;
    model.meta.max_depth = s.max_depth;
    model.meta.n_features = s.n_features;
    TreeShape shape = base;
    shape.max_depth = s.max_depth;
    shape.n_features = s.n_features;
    const int arity = model.meta.natural_leaf_arity();
    auto leaf = [&]() -> std::vector<double> {
        if (s.kind == ModelKind::GradientBoosting) return {uniform_real(rng, -1.0, 1.0)};
        auto p = random_distribution(rng, s.n_classes);
        p.resize(static_cast<std::size_t>(arity));
        return p;
    };
    for (int t = 0; t < model.meta.n_trees(); ++t) model.trees.push_back(random_tree(rng, shape, leaf));
    return model;
}

/// Quantizes a real model whose thresholds live in the 16-bit input domain
/// directly (input scale 2^15, so input_factor = 1).
inline FlatEnsemble<std::int32_t> quantize_direct(const FlatEnsemble<double>& flat, int leaf_bits = 16) {
    QuantSpec spec;
    spec.input_bits = 16;
    spec.input_scale = 32768.0;
    spec.leaf_bits = leaf_bits;
    const auto integral = quantize_inputs_and_thresholds(flat, spec);
    spec.leaf_scale = static_cast<double>(flat.meta.n_estimators);
    return quantize_leaves(integral, spec);
}

inline FlatEnsemble<std::int32_t> random_quantized(Rng& rng, const EnsembleShape& s, bool fold) {
    const auto logical = random_ensemble(rng, s);
    return quantize_direct(build_flat(logical, fold));
}

inline Vector<std::int32_t> random_int_input(Rng& rng, int n_features, int lo = -120, int hi = 120) {
    Vector<std::int32_t> x(n_features);
    for (int i = 0; i < n_features; ++i) x(i) = uniform_int(rng, lo, hi);
    return x;
}

inline Eigen::VectorXd random_real_input(Rng& rng, int n_features, double lo = -120.0, double hi = 120.0) {
    Eigen::VectorXd x(n_features);
    for (int i = 0; i < n_features; ++i) x(i) = uniform_real(rng, lo, hi);
    return x;
}

/// Reference accumulation through the logical trees with recursive
/// evaluation, in the engine's slot convention.
inline Eigen::VectorXd reference_accumulate(const LogicalEnsemble& model, const Eigen::VectorXd& x) {
    const auto& m = model.meta;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(m.task == Task::Regression ? 1 : m.n_classes);
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        const auto& v = evaluate(model.trees[t], x);
        if (v.size() > 1) {
            for (std::size_t c = 0; c < v.size(); ++c) acc(static_cast<Eigen::Index>(c)) += v[c];
        } else if (m.kind == ModelKind::GradientBoosting) {
            acc(m.n_classes == 2 ? 1 : static_cast<Eigen::Index>(t) % m.n_classes) += v[0];
        } else {
            acc(0) += v[0];
            acc(1) += 1.0 - v[0];
        }
    }
    return acc;
}

inline PolicyConfig never_stop_policy(PolicyKind kind = PolicyKind::AggScoreMargin) {
    PolicyConfig p;
    p.kind = kind;
    p.threshold = PolicyConfig::never_stop();
    return p;
}

} // namespace adaptree::test

#endif
