#ifndef ADAPTREE_MODEL_IO_HPP
#define ADAPTREE_MODEL_IO_HPP

#include "adaptree/ensemble.hpp"

#include <string>
#include <string_view>
#include <variant>

namespace adaptree {

/// A compiled model in either domain. Models whose metadata carries a
/// QuantSpec with a leaf scale load as integer ensembles.
using AnyEnsemble = std::variant<FlatEnsemble<double>, FlatEnsemble<std::int32_t>>;

const EnsembleMeta& meta_of(const AnyEnsemble& model);

/// JSON model format:
///   {"meta": {"kind", "n_estimators", "n_classes", "max_depth", "task",
///             "n_features", "quant": null | {input_bits, leaf_bits,
///             input_scale, leaf_scale}, "folded"},
///    "trees": [ {"f": feature, "t": threshold, "l": {...}, "r": {...}}
///             | {"leaf": [values...]} ]}
/// Integer models store thresholds in the integer input domain and real
/// (dequantized) leaves; loading re-quantizes them exactly.
std::string model_to_json(const LogicalEnsemble& model, bool folded = false, int indent = 1);
std::string model_to_json(const AnyEnsemble& model, int indent = 1);
LogicalEnsemble logical_from_json(std::string_view text, bool* folded = nullptr);
AnyEnsemble model_from_json(std::string_view text);

void save_model(const std::string& path, const AnyEnsemble& model);
void save_model(const std::string& path, const LogicalEnsemble& model);
AnyEnsemble load_model(const std::string& path);

} // namespace adaptree

#endif
