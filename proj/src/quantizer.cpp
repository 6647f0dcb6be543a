#include "adaptree/quantizer.hpp"

#include "adaptree/engine.hpp"

#include <cmath>
#include <limits>

namespace adaptree {

void check_bits(int bits) {
    if (bits != 8 && bits != 16 && bits != 32) throw Error("bit width must be 8, 16 or 32, got " + std::to_string(bits));
}

double quant_factor(double scale, int bits) {
    check_bits(bits);
    if (!(scale > 0.0) || !std::isfinite(scale)) throw Error("quantizer scale must be positive and finite");
    return std::ldexp(1.0, bits - 1) / scale;
}

std::int32_t quantize_symmetric(double x, double scale, int bits) {
    if (!std::isfinite(x)) throw Error("cannot quantize a non-finite value");
    const double lo = -std::ldexp(1.0, bits - 1);
    const double hi = std::ldexp(1.0, bits - 1) - 1.0;
    // std::round rounds halfway cases away from zero.
    const double q = std::round(x * quant_factor(scale, bits));
    return static_cast<std::int32_t>(std::clamp(q, lo, hi));
}

double dequantize_symmetric(std::int64_t q, double scale, int bits) {
    return static_cast<double>(q) / quant_factor(scale, bits);
}

double max_abs(const Eigen::MatrixXd& values) {
    if (values.size() == 0) return 0.0;
    return values.cwiseAbs().maxCoeff();
}

Eigen::MatrixXd quantize_features(const Eigen::MatrixXd& features, const QuantSpec& spec) {
    Eigen::MatrixXd out(features.rows(), features.cols());
    for (Eigen::Index i = 0; i < features.size(); ++i) {
        out.data()[i] = quantize_symmetric(features.data()[i], spec.input_scale, spec.input_bits);
    }
    return out;
}

FlatEnsemble<double> rescale_thresholds(const FlatEnsemble<double>& flat, const QuantSpec& spec) {
    const double factor = quant_factor(spec.input_scale, spec.input_bits);
    FlatEnsemble<double> out = flat;
    for (auto& rec : out.nodes) {
        if (!rec.is_leaf()) rec.alpha *= factor;
    }
    return out;
}

FlatEnsemble<double> quantize_inputs_and_thresholds(const FlatEnsemble<double>& flat, const QuantSpec& spec) {
    check_bits(spec.input_bits);
    if (!(spec.input_scale > 0.0)) throw Error("QuantSpec has no input scale");
    FlatEnsemble<double> out = flat;
    const double lo = -std::ldexp(1.0, spec.input_bits - 1);
    const double hi = std::ldexp(1.0, spec.input_bits - 1) - 1.0;
    for (auto& rec : out.nodes) {
        if (rec.is_leaf()) continue;
        // floor keeps the partition of integer inputs for negative thresholds too.
        // Thresholds outside the input range are pinned to one step past it.
        rec.alpha = std::clamp(std::floor(rec.alpha), lo - 1.0, hi);
    }
    QuantSpec q = out.meta.quant.value_or(spec);
    q.input_bits = spec.input_bits;
    q.input_scale = spec.input_scale;
    out.meta.quant = q;
    return out;
}

double compute_leaf_scale(const FlatEnsemble<double>& flat, const Eigen::MatrixXd& train_inputs) {
    const Engine<double> engine(flat, EngineConfig{});
    double scale = 0.0;
    for (Eigen::Index i = 0; i < train_inputs.rows(); ++i) {
        const Eigen::VectorXd row = train_inputs.row(i).transpose();
        const auto p = engine.predict_static(row);
        scale = std::max(scale, p.trace.final_state.acc.cwiseAbs().maxCoeff());
    }
    return scale;
}

namespace {

// Largest |value| any accumulator slot can reach, summing the worst leaf of
// every tree feeding that slot.
double worst_case_accumulation(const FlatEnsemble<double>& flat) {
    const auto& meta = flat.meta;
    const int slots = meta.task == Task::Regression ? 1 : meta.n_classes;
    Eigen::VectorXd worst = Eigen::VectorXd::Zero(slots);
    for (int t = 0; t < flat.n_trees(); ++t) {
        const auto [begin, end] = flat.tree_span(t);
        Eigen::VectorXd tree_max = Eigen::VectorXd::Zero(std::max(flat.leaf_arity(), 2));
        for (int n = begin; n < end; ++n) {
            if (!flat.nodes[static_cast<std::size_t>(n)].is_leaf()) continue;
            const Eigen::VectorXd v = flat.leaf_values(n).cwiseAbs();
            tree_max.head(v.size()) = tree_max.head(v.size()).cwiseMax(v);
        }
        if (flat.leaf_arity() > 1) {
            worst += tree_max.head(slots);
        } else if (meta.kind == ModelKind::RandomForest && meta.task == Task::Classification) {
            worst.array() += std::max(tree_max(0), 1.0); // P0 and its complement
        } else {
            const int slot = meta.task == Task::Regression ? 0
                             : meta.n_classes == 2       ? 1
                                                         : t % meta.n_classes;
            worst(slot) += tree_max(0);
        }
    }
    return worst.maxCoeff();
}

} // namespace

FlatEnsemble<std::int32_t> quantize_leaves(const FlatEnsemble<double>& flat, const QuantSpec& spec) {
    check_bits(spec.leaf_bits);
    check_bits(spec.input_bits);
    if (!(spec.leaf_scale > 0.0)) throw Error("leaf scale must be positive (all-zero leaves cannot be quantized)");
    if (!(spec.input_scale > 0.0)) throw Error("QuantSpec has no input scale");

    bool any_nonzero = false;
    for (int n = 0; n < flat.n_nodes(); ++n) {
        if (flat.nodes[static_cast<std::size_t>(n)].is_leaf() && !flat.leaf_values(n).isZero(0.0)) any_nonzero = true;
    }
    if (!any_nonzero) throw Error("all leaves are zero; leaf scale would be 0");

    QuantSpec used = spec;
    const double headroom = static_cast<double>(std::numeric_limits<std::int32_t>::max()) - 2.0 * flat.n_trees();
    const double needed = worst_case_accumulation(flat) * std::ldexp(1.0, spec.leaf_bits - 1) / headroom;
    used.leaf_scale = std::max(spec.leaf_scale, needed);

    FlatEnsemble<std::int32_t> out;
    out.meta = flat.meta;
    out.meta.quant = used;
    out.roots = flat.roots;
    out.folded = flat.folded;
    out.nodes.resize(flat.nodes.size());
    constexpr double lo = std::numeric_limits<std::int32_t>::min();
    constexpr double hi = std::numeric_limits<std::int32_t>::max();
    for (std::size_t i = 0; i < flat.nodes.size(); ++i) {
        const auto& src = flat.nodes[i];
        auto& dst = out.nodes[i];
        dst.fidx = src.fidx;
        dst.right = src.right;
        if (src.is_leaf()) {
            dst.alpha = flat.folded ? quantize_symmetric(src.alpha, used.leaf_scale, used.leaf_bits) : 0;
        } else {
            if (src.alpha != std::floor(src.alpha)) {
                throw Error("thresholds are not integers; quantize inputs and thresholds first");
            }
            dst.alpha = static_cast<std::int32_t>(std::clamp(src.alpha, lo, hi));
        }
    }
    out.leaves.resize(flat.leaves.rows(), flat.leaves.cols());
    for (Eigen::Index i = 0; i < flat.leaves.size(); ++i) {
        out.leaves.data()[i] = quantize_symmetric(flat.leaves.data()[i], used.leaf_scale, used.leaf_bits);
    }
    return out;
}

FlatEnsemble<std::int32_t> quantize_model(const FlatEnsemble<double>& flat, QuantSpec spec,
                                          const Eigen::MatrixXd& train_features, bool trained_on_quantized) {
    check_bits(spec.input_bits);
    check_bits(spec.leaf_bits);
    if (spec.input_scale <= 0.0) {
        spec.input_scale = max_abs(train_features);
        if (spec.input_scale == 0.0) spec.input_scale = 1.0;
    }
    FlatEnsemble<double> model = trained_on_quantized ? flat : rescale_thresholds(flat, spec);
    model = quantize_inputs_and_thresholds(model, spec);
    if (spec.leaf_scale <= 0.0) spec.leaf_scale = compute_leaf_scale(model, quantize_features(train_features, spec));
    return quantize_leaves(model, spec);
}

FlatEnsemble<double> dequantize_model(const FlatEnsemble<std::int32_t>& flat) {
    const QuantSpec& q = flat.meta.quant.value();
    FlatEnsemble<double> out;
    out.meta = flat.meta;
    out.roots = flat.roots;
    out.folded = flat.folded;
    out.nodes.resize(flat.nodes.size());
    for (std::size_t i = 0; i < flat.nodes.size(); ++i) {
        const auto& src = flat.nodes[i];
        auto& dst = out.nodes[i];
        dst.fidx = src.fidx;
        dst.right = src.right;
        dst.alpha = src.is_leaf() && flat.folded ? dequantize_symmetric(src.alpha, q.leaf_scale, q.leaf_bits)
                                                 : static_cast<double>(src.alpha);
    }
    out.leaves.resize(flat.leaves.rows(), flat.leaves.cols());
    for (Eigen::Index i = 0; i < flat.leaves.size(); ++i) {
        out.leaves.data()[i] = dequantize_symmetric(flat.leaves.data()[i], q.leaf_scale, q.leaf_bits);
    }
    return out;
}

} // namespace adaptree
