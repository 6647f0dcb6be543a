#include "adaptree/model_io.hpp"

#include "adaptree/quantizer.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace adaptree {

using nlohmann::json;

const EnsembleMeta& meta_of(const AnyEnsemble& model) {
    return std::visit([](const auto& m) -> const EnsembleMeta& { return m.meta; }, model);
}

namespace {

json tree_to_json(const LogicalTree& tree, int node) {
    const LogicalNode& n = tree.nodes.at(static_cast<std::size_t>(node));
    if (n.is_leaf()) return json{{"leaf", n.values}};
    return json{{"f", n.feature}, {"t", n.threshold}, {"l", tree_to_json(tree, n.left)}, {"r", tree_to_json(tree, n.right)}};
}

LogicalTree tree_from_json(const json& j, int depth) {
    if (depth > 64) throw Error("model tree nesting too deep");
    if (!j.is_object()) throw Error("tree node must be an object");
    if (j.contains("leaf")) {
        auto values = j.at("leaf").get<std::vector<double>>();
        if (values.empty()) throw Error("leaf without values");
        return LogicalTree::leaf(std::move(values));
    }
    return LogicalTree::split(j.at("f").get<int>(), j.at("t").get<double>(), tree_from_json(j.at("l"), depth + 1),
                              tree_from_json(j.at("r"), depth + 1));
}

json meta_to_json(const EnsembleMeta& meta, bool folded) {
    json j{{"kind", to_string(meta.kind)},       {"n_estimators", meta.n_estimators},
           {"n_classes", meta.n_classes},        {"max_depth", meta.max_depth},
           {"task", to_string(meta.task)},       {"n_features", meta.n_features},
           {"quant", nullptr},                   {"folded", folded}};
    if (meta.quant) {
        j["quant"] = json{{"input_bits", meta.quant->input_bits},
                          {"leaf_bits", meta.quant->leaf_bits},
                          {"input_scale", meta.quant->input_scale},
                          {"leaf_scale", meta.quant->leaf_scale}};
    }
    return j;
}

EnsembleMeta meta_from_json(const json& j) {
    EnsembleMeta meta;
    meta.kind = parse_model_kind(j.at("kind").get<std::string>());
    meta.n_estimators = j.at("n_estimators").get<int>();
    meta.n_classes = j.at("n_classes").get<int>();
    meta.max_depth = j.at("max_depth").get<int>();
    meta.task = parse_task(j.value("task", std::string("classification")));
    meta.n_features = j.value("n_features", 0);
    if (j.contains("quant") && !j.at("quant").is_null()) {
        const json& q = j.at("quant");
        QuantSpec spec;
        spec.input_bits = q.at("input_bits").get<int>();
        spec.leaf_bits = q.at("leaf_bits").get<int>();
        spec.input_scale = q.at("input_scale").get<double>();
        spec.leaf_scale = q.value("leaf_scale", 0.0);
        meta.quant = spec;
    }
    check_meta(meta);
    return meta;
}

} // namespace

std::string model_to_json(const LogicalEnsemble& model, bool folded, int indent) {
    json trees = json::array();
    for (const auto& t : model.trees) trees.push_back(tree_to_json(t, 0));
    json j{{"meta", meta_to_json(model.meta, folded)}, {"trees", std::move(trees)}};
    return j.dump(indent) + "\n";
}

std::string model_to_json(const AnyEnsemble& model, int indent) {
    return std::visit(
        [indent](const auto& flat) {
            if constexpr (is_quantized_v<typename std::decay_t<decltype(flat)>::scalar_type>) {
                return model_to_json(unflatten(dequantize_model(flat)), flat.folded, indent);
            } else {
                return model_to_json(unflatten(flat), flat.folded, indent);
            }
        },
        model);
}

LogicalEnsemble logical_from_json(std::string_view text, bool* folded) {
    try {
        const json j = json::parse(text);
        LogicalEnsemble model;
        model.meta = meta_from_json(j.at("meta"));
        for (const auto& t : j.at("trees")) model.trees.push_back(tree_from_json(t, 0));
        if (folded) *folded = j.at("meta").value("folded", false);
        return model;
    } catch (const json::exception& e) {
        throw Error(std::string("invalid model JSON: ") + e.what());
    }
}

AnyEnsemble model_from_json(std::string_view text) {
    bool folded = false;
    const LogicalEnsemble logical = logical_from_json(text, &folded);
    FlatEnsemble<double> flat = build_flat(logical, folded);
    if (flat.meta.quant && flat.meta.quant->leaf_scale > 0.0) return quantize_leaves(flat, *flat.meta.quant);
    return flat;
}

void save_model(const std::string& path, const AnyEnsemble& model) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write model '" + path + "'");
    out << model_to_json(model);
}

void save_model(const std::string& path, const LogicalEnsemble& model) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write model '" + path + "'");
    out << model_to_json(model);
}

AnyEnsemble load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open model '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return model_from_json(buf.str());
}

} // namespace adaptree
