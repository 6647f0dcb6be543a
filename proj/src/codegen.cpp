#include "adaptree/codegen.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace adaptree {

std::string to_string(CodegenMode mode) { return mode == CodegenMode::Static ? "static" : "dynamic"; }

CodegenMode parse_codegen_mode(std::string_view text) {
    if (text == "static") return CodegenMode::Static;
    if (text == "dynamic") return CodegenMode::Dynamic;
    throw Error("unknown codegen mode '" + std::string(text) + "'");
}

EngineConfig engine_config(const CodegenConfig& cfg) {
    EngineConfig e;
    e.batch_size = cfg.batch_size;
    e.cores = 1;
    if (cfg.mode == CodegenMode::Dynamic) e.policy = cfg.policy;
    return e;
}

void check_codegen_config(const FlatEnsemble<std::int32_t>& flat, const CodegenConfig& cfg) {
    if (!flat.meta.quant) throw Error("codegen needs a quantized model");
    if (const auto v = validate(flat); !v.empty()) {
        throw Error("model fails validation: " + std::string(v.front().rule) + " (" + v.front().detail + ")");
    }
    if (cfg.batch_size < 1) throw Error("batch size must be at least 1");
    if (cfg.emit_leaves && *cfg.emit_leaves == flat.folded) {
        throw Error(flat.folded ? "folded model has no LEAVES array to emit" : "unfolded model needs its LEAVES array");
    }
    if (cfg.mode == CodegenMode::Dynamic) {
        if (!cfg.policy) throw Error("dynamic codegen needs a policy");
        compile_policy(*cfg.policy, policy_context(flat));
    }
}

namespace {

std::string int_type(int bits) { return "int" + std::to_string(bits) + "_t"; }

bool fits(std::int64_t v, int bits) {
    const std::int64_t lo = -(std::int64_t{1} << (bits - 1));
    const std::int64_t hi = (std::int64_t{1} << (bits - 1)) - 1;
    return v >= lo && v <= hi;
}

std::string c_int(std::int64_t v) {
    if (v == std::numeric_limits<std::int32_t>::min()) return "(-2147483647 - 1)";
    if (fits(v, 32)) return std::to_string(v);
    if (v == std::numeric_limits<std::int64_t>::min()) return "(-9223372036854775807LL - 1)";
    return std::to_string(v) + "LL";
}

} // namespace

CTypes c_types(const FlatEnsemble<std::int32_t>& flat) {
    const QuantSpec& q = flat.meta.quant.value();
    int alpha_bits = flat.folded ? std::max(q.input_bits, q.leaf_bits) : q.input_bits;
    // Thresholds pinned just outside the input range need one more step.
    for (const auto& rec : flat.nodes) {
        while (alpha_bits < 32 && !fits(rec.alpha, alpha_bits)) alpha_bits *= 2;
    }
    return {int_type(q.input_bits), int_type(alpha_bits), int_type(q.leaf_bits)};
}

namespace {

struct Emitter {
    const FlatEnsemble<std::int32_t>& flat;
    const CodegenConfig& cfg;
    CTypes types;
    std::optional<StopRule> rule;
    std::int64_t unit = 0;

    bool dynamic() const { return cfg.mode == CodegenMode::Dynamic; }
    bool per_tree_policy() const { return rule && !rule->never && rule->uses_last_output(); }
    int slots() const { return flat.meta.task == Task::Regression ? 1 : flat.meta.n_classes; }

    std::string model_data() const {
        const auto& m = flat.meta;
        const QuantSpec& q = *m.quant;
        std::ostringstream o;
        o << "/* Model data: " << to_string(m.kind) << ", " << m.n_estimators << " estimators, " << m.n_classes
          << " classes, depth " << m.max_depth << ", " << q.input_bits << "-bit inputs, " << q.leaf_bits
          << "-bit leaves" << (flat.folded ? ", folded leaves" : "") << ". */\n";
        o << "#ifndef MODEL_DATA_H\n#define MODEL_DATA_H\n\n#include <stdint.h>\n\n";
        o << "enum {\n";
        o << "    N = " << m.n_estimators << ",\n";
        o << "    M = " << m.n_classes << ",\n";
        o << "    D = " << m.max_depth << ",\n";
        o << "    B = " << cfg.batch_size << ",\n";
        o << "    N_TREES = " << flat.n_trees() << ",\n";
        o << "    TREES_PER_ESTIMATOR = " << m.trees_per_estimator() << ",\n";
        o << "    N_FEATURES = " << m.n_features << ",\n";
        o << "    N_NODES = " << flat.n_nodes() << ",\n";
        if (!flat.folded) {
            o << "    N_LEAF_ROWS = " << flat.leaves.rows() << ",\n";
            o << "    LEAF_ARITY = " << flat.leaves.cols() << ",\n";
        }
        o << "    ACC_SLOTS = " << slots() << ",\n";
        o << "    POLICY_TRIGGERS = " << m.n_estimators / cfg.batch_size << "\n";
        o << "};\n\n";
        o << "#define LEAF_UNIT " << c_int(unit) << "\n\n";
        o << "typedef struct {\n    int16_t fidx;\n    " << types.alpha << " alpha;\n    uint16_t right;\n} node_t;\n\n";
        o << "typedef " << types.leaf << " leaf_t;\n\n";

        o << "static const uint16_t ROOTS[N_TREES] = {\n";
        for (int t = 0; t < flat.n_trees(); ++t) {
            o << (t % 12 == 0 ? "    " : " ") << flat.roots[static_cast<std::size_t>(t)]
              << (t + 1 < flat.n_trees() ? "," : "");
            if (t % 12 == 11 || t + 1 == flat.n_trees()) o << "\n";
        }
        o << "};\n\n";

        o << "static const node_t NODES[N_NODES] = {\n";
        for (std::size_t i = 0; i < flat.nodes.size(); ++i) {
            const auto& r = flat.nodes[i];
            o << "    {" << r.fidx << ", " << c_int(r.alpha) << ", " << r.right << "}"
              << (i + 1 < flat.nodes.size() ? "," : "") << "\n";
        }
        o << "};\n";

        if (!flat.folded) {
            o << "\nstatic const leaf_t LEAVES[N_LEAF_ROWS][LEAF_ARITY] = {\n";
            for (Eigen::Index r = 0; r < flat.leaves.rows(); ++r) {
                o << "    {";
                for (Eigen::Index c = 0; c < flat.leaves.cols(); ++c) {
                    o << (c ? ", " : "") << c_int(flat.leaves(r, c));
                }
                o << "}" << (r + 1 < flat.leaves.rows() ? "," : "") << "\n";
            }
            o << "};\n";
        }
        o << "\n#endif\n";
        return o.str();
    }

    std::string header() const {
        std::ostringstream o;
        o << "#ifndef INFERENCE_H\n#define INFERENCE_H\n\n#include <stdint.h>\n\n";
        o << "typedef " << types.input << " input_t;\n\n";
        o << "#define INFERENCE_N_FEATURES " << flat.meta.n_features << "\n\n";
        o << "/* Predicted class for one quantized input vector. */\n";
        o << "int predict(const input_t *input);\n\n";
        o << "/* As predict(), also reporting the number of trees executed. */\n";
        o << "int predict_trees(const input_t *input, int *trees_executed);\n\n";
        o << "#endif\n";
        return o.str();
    }

    std::string accumulate_body() const {
        const auto& m = flat.meta;
        if (!flat.folded && flat.leaves.cols() > 1) {
            return "    const leaf_t *row = LEAVES[leaf->right];\n"
                   "    (void)t;\n"
                   "    for (int c = 0; c < LEAF_ARITY; ++c) acc[c] += row[c];\n";
        }
        std::string body = flat.folded ? "    const int32_t v = leaf->alpha;\n"
                                       : "    const int32_t v = LEAVES[leaf->right][0];\n";
        if (m.task == Task::Regression) return body + "    (void)t;\n    acc[0] += v;\n";
        if (m.kind == ModelKind::GradientBoosting) {
            if (m.n_classes == 2) return body + "    (void)t;\n    acc[1] += v;\n";
            return body + "    acc[t % M] += v;\n";
        }
        return body + "    (void)t;\n    acc[0] += v;\n    acc[1] += LEAF_UNIT - v;\n";
    }

    std::string policy_function() const {
        std::ostringstream o;
        o << "static int policy(const int32_t *acc, const int32_t *last, int k)\n{\n";
        if (!per_tree_policy()) o << "    (void)last;\n";
        const auto& r = *rule;
        const bool rf = r.ctx.kind == ModelKind::RandomForest;
        const std::int64_t one = kThresholdOne;
        if (r.never) {
            o << "    (void)acc;\n    (void)k;\n    return 0;\n}\n";
            return o.str();
        }
        if (r.cfg.kind == PolicyKind::Qwyc) {
            const auto& q = r.cfg.qwyc;
            // Exits that no reachable score can trigger are dropped.
            const bool plus = q.plus_enabled && (!rf || r.eps_plus_fixed <= one);
            const bool minus = q.minus_enabled && (!rf || r.eps_minus_fixed >= 0);
            o << "    const int64_t pos = acc[1];\n";
            if (rf) {
                o << "    const int64_t den = (int64_t)k * LEAF_UNIT;\n";
            } else {
                o << "    (void)k;\n";
            }
            o << "    int stop = 0;\n";
            if (plus) {
                o << (rf ? "    if (pos * " + std::to_string(one) + " >= (int64_t)" + c_int(r.eps_plus_fixed) +
                               " * den) stop = 1;\n"
                         : "    if (pos >= " + c_int(r.eps_plus_fixed) + ") stop = 1;\n");
            }
            if (minus) {
                o << (rf ? "    if ((int64_t)" + c_int(r.eps_minus_fixed) + " * den >= pos * " + std::to_string(one) +
                               ") stop = 1;\n"
                         : "    if (pos <= " + c_int(r.eps_minus_fixed) + ") stop = 1;\n");
            }
            if (!rf && !plus && !minus) o << "    (void)pos;\n";
            if (rf && !plus && !minus) o << "    (void)pos;\n    (void)den;\n";
            o << "    return stop;\n}\n";
            return o.str();
        }

        o << "    const int32_t *p = " << (r.uses_last_output() ? "last" : "acc") << ";\n";
        if (r.uses_last_output()) o << "    (void)acc;\n";
        const bool max_kind = r.cfg.kind == PolicyKind::Max || r.cfg.kind == PolicyKind::AggMax;
        if (max_kind) {
            o << "    int64_t score = p[0];\n";
            o << "    for (int c = 1; c < ACC_SLOTS; ++c) {\n        if (p[c] > score) score = p[c];\n    }\n";
        } else {
            o << "    int64_t first = p[0] >= p[1] ? p[0] : p[1];\n";
            o << "    int64_t second = p[0] >= p[1] ? p[1] : p[0];\n";
            o << "    for (int c = 2; c < ACC_SLOTS; ++c) {\n";
            o << "        if (p[c] > first) {\n            second = first;\n            first = p[c];\n";
            o << "        } else if (p[c] > second) {\n            second = p[c];\n        }\n    }\n";
            o << "    const int64_t score = first - second;\n";
        }
        if (rf) {
            // score / (divisor * unit) never exceeds N, so larger thresholds never fire.
            const std::int64_t n = flat.meta.n_estimators;
            if (r.th_fixed > one * n) {
                o << "    (void)score;\n    (void)k;\n    return 0;\n}\n";
                return o.str();
            }
            const long double worst = std::fabs(static_cast<long double>(r.th_fixed)) * n * static_cast<long double>(unit);
            if (worst >= std::ldexp(1.0L, 62)) throw Error("policy threshold too large for 64-bit emitted arithmetic");
            const bool divide = r.divides_by_estimators();
            o << "    const int64_t den = " << (divide ? "(int64_t)k * LEAF_UNIT" : "LEAF_UNIT") << ";\n";
            if (!divide) o << "    (void)k;\n";
            o << "    return score * " << one << " >= (int64_t)" << c_int(r.th_fixed) << " * den;\n}\n";
        } else {
            o << "    (void)k;\n    return score >= " << c_int(r.th_fixed) << ";\n}\n";
        }
        return o.str();
    }

    std::string inference() const {
        std::ostringstream o;
        o << "#include \"inference.h\"\n#include \"model_data.h\"\n\n";
        o << "static const node_t *run_tree(int t, const input_t *input)\n{\n";
        o << "    const node_t *n = &NODES[ROOTS[t]];\n";
        o << "    while (n->fidx != -2) {\n";
        o << "        n = input[n->fidx] > n->alpha ? n + n->right : n + 1;\n";
        o << "    }\n    return n;\n}\n\n";

        o << "static void accumulate(int t, const node_t *leaf, int32_t *acc)\n{\n" << accumulate_body() << "}\n\n";

        const bool last = per_tree_policy();
        o << "static void run_unit(int unit, const input_t *input, int32_t *acc"
          << (last ? ", int32_t *last" : "") << ")\n{\n";
        if (last) o << "    for (int c = 0; c < ACC_SLOTS; ++c) last[c] = 0;\n";
        o << "    for (int k = 0; k < TREES_PER_ESTIMATOR; ++k) {\n";
        o << "        const int t = unit * TREES_PER_ESTIMATOR + k;\n";
        o << "        const node_t *leaf = run_tree(t, input);\n";
        o << "        accumulate(t, leaf, acc);\n";
        if (last) o << "        accumulate(t, leaf, last);\n";
        o << "    }\n}\n\n";

        o << "static int argmax(const int32_t *acc)\n{\n    int best = 0;\n";
        o << "    for (int c = 1; c < ACC_SLOTS; ++c) {\n        if (acc[c] > acc[best]) best = c;\n    }\n";
        o << "    return best;\n}\n\n";

        if (dynamic()) o << policy_function() << "\n";

        o << "int predict_trees(const input_t *input, int *trees_executed)\n{\n";
        o << "    int32_t acc[ACC_SLOTS] = {0};\n";
        if (last) o << "    int32_t last[ACC_SLOTS];\n";
        o << "    int unit = 0;\n";
        const std::string call = last ? "run_unit(unit++, input, acc, last);" : "run_unit(unit++, input, acc);";
        if (dynamic()) {
            o << "    int stop = 0;\n";
            o << "    for (int b = 0; b < POLICY_TRIGGERS && !stop; ++b) {\n";
            o << "        for (int i = 0; i < B; ++i) " << call << "\n";
            o << "        stop = policy(acc, " << (last ? "last" : "0") << ", unit);\n";
            o << "    }\n";
            o << "    while (!stop && unit < N) " << call << "\n";
        } else {
            o << "    while (unit < N) " << call << "\n";
        }
        o << "    if (trees_executed) *trees_executed = unit * TREES_PER_ESTIMATOR;\n";
        o << "    return argmax(acc);\n}\n\n";
        o << "int predict(const input_t *input)\n{\n    return predict_trees(input, 0);\n}\n";
        return o.str();
    }
};

} // namespace

std::map<std::string, std::string> emit_source(const FlatEnsemble<std::int32_t>& flat, const CodegenConfig& cfg) {
    check_codegen_config(flat, cfg);
    Emitter e{flat, cfg, c_types(flat), std::nullopt, leaf_unit(flat)};
    if (cfg.mode == CodegenMode::Dynamic) e.rule = compile_policy(*cfg.policy, policy_context(flat));
    return {{"model_data.h", e.model_data()}, {"inference.h", e.header()}, {"inference.c", e.inference()}};
}

std::map<std::string, std::string> emit_source(const AnyEnsemble& model, const CodegenConfig& cfg) {
    const auto* quantized = std::get_if<FlatEnsemble<std::int32_t>>(&model);
    if (quantized == nullptr) throw Error("codegen needs a quantized model; run quantize first");
    return emit_source(*quantized, cfg);
}

std::string emit_golden_vectors(const FlatEnsemble<std::int32_t>& flat, const RowMatrix<std::int32_t>& inputs,
                                const CodegenConfig& cfg) {
    check_codegen_config(flat, cfg);
    const int features = flat.meta.n_features;
    if (inputs.rows() > 0 && inputs.cols() != features) {
        throw Error("golden inputs have " + std::to_string(inputs.cols()) + " columns, model needs " +
                    std::to_string(features));
    }
    const int bits = flat.meta.quant->input_bits;
    const Engine<std::int32_t> engine(flat, engine_config(cfg));
    std::ostringstream o;
    for (int f = 0; f < features; ++f) o << "input_" << f << ',';
    o << "expected_class,expected_trees\n";
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
        const Vector<std::int32_t> x = inputs.row(r).transpose();
        for (Eigen::Index f = 0; f < x.size(); ++f) {
            if (!fits(x(f), bits)) throw Error("golden input row " + std::to_string(r) + " exceeds the input width");
            o << x(f) << ',';
        }
        const auto p = engine.predict(x);
        o << p.predicted_class << ',' << p.trace.trees_executed << '\n';
    }
    return o.str();
}

} // namespace adaptree
