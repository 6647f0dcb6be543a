#ifndef ADAPTREE_QUANTIZER_HPP
#define ADAPTREE_QUANTIZER_HPP

#include "adaptree/ensemble.hpp"

#include <cmath>
#include <cstdint>

namespace adaptree {

void check_bits(int bits);

/// Symmetric min-max quantizer:
///   clamp(-2^(bits-1), 2^(bits-1)-1, round(x * 2^(bits-1) / scale))
/// with rounding half away from zero.
std::int32_t quantize_symmetric(double x, double scale, int bits);

double dequantize_symmetric(std::int64_t q, double scale, int bits);

/// Integer units per real unit: 2^(bits-1) / scale.
double quant_factor(double scale, int bits);

/// max |x| over all entries; the input scale of the quantizer.
double max_abs(const Eigen::MatrixXd& values);

/// Quantizes every feature with the input half of `spec`. The result holds
/// integers stored as doubles, ready for quantization-aware training.
Eigen::MatrixXd quantize_features(const Eigen::MatrixXd& features, const QuantSpec& spec);

template <typename Derived>
Vector<std::int32_t> quantize_input(const Eigen::DenseBase<Derived>& row, const QuantSpec& spec) {
    Vector<std::int32_t> out(row.size());
    for (Eigen::Index i = 0; i < row.size(); ++i) {
        out(i) = quantize_symmetric(static_cast<double>(row(i)), spec.input_scale, spec.input_bits);
    }
    return out;
}

/// Maps thresholds of a model trained on real-valued inputs into the integer
/// input domain (alpha * 2^(bits-1) / input_scale). Decisions are preserved
/// up to input rounding; models trained on quantized inputs skip this step.
FlatEnsemble<double> rescale_thresholds(const FlatEnsemble<double>& flat, const QuantSpec& spec);

/// Replaces every internal threshold by floor(alpha). For integer inputs
/// `x > alpha` and `x > floor(alpha)` agree, including negative thresholds.
FlatEnsemble<double> quantize_inputs_and_thresholds(const FlatEnsemble<double>& flat, const QuantSpec& spec);

/// max over samples and classes of |P^[1:N]| for the real-valued model,
/// evaluated on (already quantized) training inputs.
double compute_leaf_scale(const FlatEnsemble<double>& flat, const Eigen::MatrixXd& train_inputs);

/// Post-training leaf quantization. The leaf scale is raised if needed so the
/// worst-case accumulated sum fits a 32-bit signed accumulator; the returned
/// model records the scale actually used.
FlatEnsemble<std::int32_t> quantize_leaves(const FlatEnsemble<double>& flat, const QuantSpec& spec);

/// Full post-training pipeline: fills a zero input scale from max |x| of
/// the training features and a zero leaf scale from compute_leaf_scale, maps
/// thresholds to the integer input domain (unless the model was trained on
/// quantized inputs) and quantizes the leaves.
FlatEnsemble<std::int32_t> quantize_model(const FlatEnsemble<double>& flat, QuantSpec spec,
                                          const Eigen::MatrixXd& train_features, bool trained_on_quantized = false);

/// Integer model back to real leaves (thresholds stay in the input domain).
FlatEnsemble<double> dequantize_model(const FlatEnsemble<std::int32_t>& flat);

/// Accumulator value corresponding to a real leaf value of 1.
template <EnsembleScalar Scalar>
Scalar leaf_unit(const FlatEnsemble<Scalar>& flat) {
    if constexpr (is_quantized_v<Scalar>) {
        const auto& q = flat.meta.quant.value();
        return quantize_symmetric(1.0, q.leaf_scale, q.leaf_bits);
    } else {
        return 1.0;
    }
}

/// Converts a model input row to the model's scalar domain.
template <EnsembleScalar Scalar, typename Derived>
Vector<Scalar> prepare_input(const FlatEnsemble<Scalar>& flat, const Eigen::DenseBase<Derived>& row) {
    if constexpr (is_quantized_v<Scalar>) {
        return quantize_input(row, flat.meta.quant.value());
    } else {
        // A real-valued model carrying a QuantSpec was trained on integer inputs.
        if (flat.meta.quant) return quantize_input(row, *flat.meta.quant).template cast<double>();
        return row.template cast<double>();
    }
}

} // namespace adaptree

#endif
