#include "adaptree/codegen.hpp"
#include "adaptree/harness.hpp"
#include "adaptree/model_io.hpp"
#include "adaptree/qwyc.hpp"
#include "adaptree/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace adaptree;

namespace {

struct Common {
    std::uint64_t seed = 0;
    std::string config;
    std::string out = ".";
};

struct DataOptions {
    std::string path;
    std::string synth;
    int n = 2000;
    int classes = 3;
    int features = 8;
    double difficulty = 0.5;
    double minority_ratio = 0.1;
    std::string task = "classification";
};

struct PolicyOptions {
    std::string policy = "none";
    std::string threshold = "0.5";
    std::string eps_plus;
    std::string eps_minus;
    bool unnormalized = false;
    bool calibrate_qwyc = false;
    int batch = 1;
    int cores = 1;
    double node_cycles = 1.0;
    double tree_overhead = 0.0;
    double acc_cycles = 1.0;
    double policy_cycles = 1.0;
    double barrier_cycles = 0.0;
};

double parse_real(const std::string& text) {
    if (text == "inf" || text == "never" || text == "+inf") return std::numeric_limits<double>::infinity();
    if (text == "-inf") return -std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw Error("cannot parse number '" + text + "'");
    return v;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

/// "1-8" or "1,2,4".
std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    for (const auto& item : split_list(text)) {
        const auto dash = item.find('-', 1);
        if (dash == std::string::npos) {
            out.push_back(std::stoi(item));
        } else {
            const int lo = std::stoi(item.substr(0, dash));
            const int hi = std::stoi(item.substr(dash + 1));
            if (hi < lo) throw Error("empty range '" + item + "'");
            for (int v = lo; v <= hi; ++v) out.push_back(v);
        }
    }
    return out;
}

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--seed", c.seed, "Random seed");
    cmd->add_option("--config", c.config, "JSON file of option values (command-line values win)");
    cmd->add_option("--out", c.out, "Output directory");
}

void add_data(CLI::App* cmd, DataOptions& d) {
    cmd->add_option("--data", d.path, "Dataset CSV (f0..f{F-1},label,split)");
    cmd->add_option("--synth", d.synth, "Synthetic dataset: gaussian_blobs | binary_imbalanced");
    cmd->add_option("--n", d.n, "Synthetic sample count");
    cmd->add_option("--classes", d.classes, "Synthetic class count");
    cmd->add_option("--features", d.features, "Synthetic feature count");
    cmd->add_option("--difficulty", d.difficulty, "Synthetic noise level");
    cmd->add_option("--minority-ratio", d.minority_ratio, "binary_imbalanced minority fraction");
    cmd->add_option("--task", d.task, "classification | regression");
}

void add_policy(CLI::App* cmd, PolicyOptions& p) {
    cmd->add_option("--policy", p.policy, "none | max | score_margin | agg_max | agg_score_margin | qwyc");
    cmd->add_option("--threshold", p.threshold, "Stopping threshold t_h (inf = never stop)");
    cmd->add_option("--eps-plus", p.eps_plus, "QWYC positive exit threshold");
    cmd->add_option("--eps-minus", p.eps_minus, "QWYC negative exit threshold");
    cmd->add_flag("--unnormalized", p.unnormalized, "Do not divide aggregated RF scores by estimators executed");
    cmd->add_flag("--calibrate-qwyc", p.calibrate_qwyc, "Calibrate QWYC exits on the validation split");
    cmd->add_option("--batch", p.batch, "Estimator units per policy check (B)");
    cmd->add_option("--cores", p.cores, "Simulated cores (C)");
    cmd->add_option("--node-cycles", p.node_cycles, "Cycles per visited node");
    cmd->add_option("--tree-overhead", p.tree_overhead, "Cycles per executed tree");
    cmd->add_option("--acc-cycles", p.acc_cycles, "Cycles per accumulated value");
    cmd->add_option("--policy-cycles", p.policy_cycles, "Cycles per policy evaluation");
    cmd->add_option("--barrier-cycles", p.barrier_cycles, "Cycles per barrier");
}

Dataset load_data(const DataOptions& d, std::uint64_t seed) {
    if (!d.path.empty()) {
        DatasetSchema schema;
        schema.task = parse_task(d.task);
        return load_dataset(d.path, schema);
    }
    if (d.synth.empty()) throw Error("give --data <csv> or --synth <kind>");
    SynthParams p;
    p.kind = parse_synth_kind(d.synth);
    p.n = d.n;
    p.n_classes = p.kind == SynthKind::BinaryImbalanced ? 2 : d.classes;
    p.n_features = d.features;
    p.difficulty = d.difficulty;
    p.minority_ratio = d.minority_ratio;
    p.seed = seed;
    return synth_dataset(p);
}

fs::path out_file(const Common& c, const std::string& name) {
    fs::create_directories(c.out);
    return fs::path(c.out) / name;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
}

std::optional<PolicyConfig> policy_config(const PolicyOptions& p) {
    if (p.policy == "none") return std::nullopt;
    PolicyConfig cfg;
    cfg.kind = parse_policy_kind(p.policy);
    cfg.threshold = parse_real(p.threshold);
    cfg.normalized = !p.unnormalized;
    if (cfg.kind == PolicyKind::Qwyc) {
        if (!p.eps_plus.empty()) {
            cfg.qwyc.eps_plus = parse_real(p.eps_plus);
            cfg.qwyc.plus_enabled = true;
        }
        if (!p.eps_minus.empty()) {
            cfg.qwyc.eps_minus = parse_real(p.eps_minus);
            cfg.qwyc.minus_enabled = true;
        }
    }
    return cfg;
}

EngineConfig engine_from(const PolicyOptions& p, std::optional<PolicyConfig> policy) {
    EngineConfig cfg;
    cfg.batch_size = p.batch;
    cfg.cores = p.cores;
    cfg.policy = std::move(policy);
    cfg.cost = CostModel{p.node_cycles, p.tree_overhead, p.acc_cycles, p.policy_cycles, p.barrier_cycles};
    check_engine_config(cfg);
    return cfg;
}

template <EnsembleScalar S>
PolicyConfig calibrated(const FlatEnsemble<S>& flat, const Dataset& data, int batch) {
    const Dataset val = data.select(Split::Validation);
    if (val.n_rows() == 0) throw Error("QWYC calibration needs a validation split");
    const QwycCalibration cal = calibrate_qwyc(flat, val.features, batch);
    PolicyConfig cfg;
    cfg.kind = PolicyKind::Qwyc;
    cfg.qwyc = cal.thresholds;
    std::cerr << "qwyc: eps_minus=" << cfg.qwyc.eps_minus << (cfg.qwyc.minus_enabled ? "" : " (disabled)")
              << " eps_plus=" << cfg.qwyc.eps_plus << (cfg.qwyc.plus_enabled ? "" : " (disabled)") << '\n';
    return cfg;
}

Dataset pick_split(const Dataset& data, const std::string& split) {
    if (split == "all") return data;
    return data.select(parse_split(split));
}

// ---------------------------------------------------------------- subcommands

struct TrainOptions {
    std::string kind = "rf";
    int estimators = 10;
    int depth = 4;
    double subsample = 1.0;
    bool no_bootstrap = false;
    double learning_rate = 0.1;
    bool fold = false;
    bool oversample = false;
    bool save_data = false;
};

int run_train(const Common& c, const DataOptions& d, const TrainOptions& t) {
    const Dataset data = load_data(d, c.seed);
    Dataset train = data.has_split(Split::Train) ? data.select(Split::Train) : data;
    if (t.oversample) train = oversample_minority(train, c.seed);
    FitParams fit;
    fit.n_estimators = t.estimators;
    fit.max_depth = t.depth;
    fit.feature_subsample = t.subsample;
    fit.bootstrap = !t.no_bootstrap;
    fit.learning_rate = t.learning_rate;
    fit.rng_seed = c.seed;
    const ModelKind kind = parse_model_kind(t.kind);
    const LogicalEnsemble model = kind == ModelKind::RandomForest ? fit_random_forest(train, fit) : fit_gbt(train, fit);
    const bool fold = t.fold && model.meta.natural_leaf_arity() == 1;
    if (t.fold && !fold) std::cerr << "leaves hold " << model.meta.natural_leaf_arity() << " values; not folding\n";
    const AnyEnsemble flat = build_flat(model, fold);
    const auto path = out_file(c, "model.json");
    save_model(path.string(), flat);
    if (t.save_data) save_dataset(out_file(c, "data.csv").string(), data);
    std::cout << "wrote " << path.string() << " (" << model.trees.size() << " trees)\n";
    return 0;
}

struct QuantizeOptions {
    std::string model;
    int input_bits = 16;
    int leaf_bits = 16;
    double input_scale = 0.0;
    double leaf_scale = 0.0;
    bool trained_on_quantized = false;
};

int run_quantize(const Common& c, const DataOptions& d, const QuantizeOptions& q) {
    const AnyEnsemble model = load_model(q.model);
    const auto* flat = std::get_if<FlatEnsemble<double>>(&model);
    if (flat == nullptr) throw Error("model is already quantized");
    const Dataset data = load_data(d, c.seed);
    const Dataset train = data.has_split(Split::Train) ? data.select(Split::Train) : data;
    QuantSpec spec{q.input_bits, q.leaf_bits, q.input_scale, q.leaf_scale};
    const AnyEnsemble out = quantize_model(*flat, spec, train.features, q.trained_on_quantized);
    const auto path = out_file(c, "model_q.json");
    save_model(path.string(), out);
    const QuantSpec used = *meta_of(out).quant;
    std::cout << "wrote " << path.string() << " (input_scale=" << used.input_scale << ", leaf_scale=" << used.leaf_scale
              << ")\n";
    return 0;
}

struct PredictOptions {
    std::string model;
    std::string split = "test";
    std::string metric = "balanced_accuracy";
    bool threaded = false;
};

int run_predict(const Common& c, const DataOptions& d, const PolicyOptions& p, const PredictOptions& o) {
    const AnyEnsemble model = load_model(o.model);
    const Dataset data = load_data(d, c.seed);
    const Dataset part = pick_split(data, o.split);
    return std::visit(
        [&](const auto& flat) {
            using S = typename std::decay_t<decltype(flat)>::scalar_type;
            std::optional<PolicyConfig> policy = p.calibrate_qwyc ? calibrated(flat, data, p.batch) : policy_config(p);
            const EngineConfig cfg = engine_from(p, policy);
            const Engine<S> engine(flat, cfg);
            const auto path = out_file(c, "predictions.csv");
            std::ofstream out(path);
            out << "input_id,class,trees,visited_nodes,policy_evals,trees_cycles,acc_cycles,policy_cycles,total_cycles\n";
            std::vector<int> preds;
            double visited = 0;
            for (Eigen::Index i = 0; i < part.n_rows(); ++i) {
                const Vector<S> x = prepare_input(flat, part.features.row(i));
                const Prediction<S> r = o.threaded ? predict_threaded<S>(flat, x, cfg) : engine.predict(x);
                preds.push_back(r.predicted_class);
                visited += static_cast<double>(r.trace.visited_nodes_total);
                out << i << ',' << r.predicted_class << ',' << r.trace.trees_executed << ','
                    << r.trace.visited_nodes_total << ',' << r.trace.policy_evaluations << ',' << r.cost.trees_cycles
                    << ',' << r.cost.acc_cycles << ',' << r.cost.policy_cycles << ',' << r.cost.total_cycles << '\n';
            }
            std::cout << "wrote " << path.string() << '\n';
            if (part.n_rows() > 0 && flat.meta.task == Task::Classification) {
                const auto labels = part.class_labels();
                std::cout << o.metric << ": " << metric(preds, labels, parse_metric_kind(o.metric))
                          << ", mean visited nodes: " << visited / static_cast<double>(part.n_rows()) << '\n';
            }
            return 0;
        },
        model);
}

struct SweepOptions {
    std::string model;
    std::string thresholds; // empty: default grid
    std::string metric = "balanced_accuracy";
    std::string cost_axis = "visited_nodes";
    bool parallel = false;
};

void write_sweep_outputs(const Common& c, std::span<const SweepPoint> points, CostAxis axis, const std::string& name) {
    {
        std::ofstream out(out_file(c, "sweep.csv"));
        write_sweep_csv(out, points);
    }
    const auto front = sweep_pareto(points, axis, Split::Validation, Split::Test);
    {
        std::ofstream out(out_file(c, "pareto.csv"));
        write_pareto_csv(out, front);
    }
    std::vector<PlotCurve> curves;
    for (Split s : {Split::Validation, Split::Test}) {
        PlotCurve curve{name + " " + to_string(s), {}};
        for (const auto& p : points) {
            if (p.split != s) continue;
            const double cost = axis == CostAxis::Trees         ? p.mean_trees
                                : axis == CostAxis::TotalCycles ? p.mean_total_cycles
                                                                : p.mean_visited_nodes;
            curve.points.push_back({"", p.threshold, cost, p.score, p.score});
        }
        curves.push_back(std::move(curve));
    }
    curves.push_back({name + " pareto", front});
    write_text(out_file(c, "plotdata.json"), plotdata_json(curves));
}

int run_sweep(const Common& c, const DataOptions& d, const PolicyOptions& p, const SweepOptions& o) {
    const AnyEnsemble model = load_model(o.model);
    const Dataset data = load_data(d, c.seed);
    return std::visit(
        [&](const auto& flat) {
            PolicyConfig policy = policy_config(p).value_or(PolicyConfig{});
            const EngineConfig cfg = engine_from(p, std::nullopt);
            std::vector<double> thresholds;
            if (o.thresholds.empty()) {
                thresholds = default_thresholds(flat, policy, data.select(Split::Validation));
            } else {
                for (const auto& t : split_list(o.thresholds)) thresholds.push_back(parse_real(t));
            }
            const auto points = threshold_sweep(flat, policy, std::span<const double>(thresholds), cfg, data,
                                                parse_metric_kind(o.metric), o.parallel);
            write_sweep_outputs(c, points, parse_cost_axis(o.cost_axis), to_string(policy.kind));
            std::cout << "wrote sweep.csv, pareto.csv, plotdata.json to " << c.out << " (" << thresholds.size()
                      << " thresholds)\n";
            return 0;
        },
        model);
}

struct GridOptionsCli {
    std::string space = "desk";
    std::string depths;
    std::string estimators;
    std::string input_bits;
    std::string leaf_bits;
    std::string kinds = "rf";
    std::size_t budget = 512 * 1024;
    std::string metric = "balanced_accuracy";
    std::string cost_axis = "model_bytes";
    double subsample = 1.0;
    double learning_rate = 0.1;
    bool no_fold = false;
    bool parallel = false;
};

int run_grid(const Common& c, const DataOptions& d, const GridOptionsCli& g) {
    const Dataset data = load_data(d, c.seed);
    GridSpace space = g.space == "full" ? GridSpace::full() : GridSpace::desk();
    if (g.space != "full" && g.space != "desk") throw Error("unknown grid space '" + g.space + "'");
    if (!g.depths.empty()) space.depths = parse_int_list(g.depths);
    if (!g.estimators.empty()) space.estimators = parse_int_list(g.estimators);
    if (!g.input_bits.empty()) space.input_bits = parse_int_list(g.input_bits);
    if (!g.leaf_bits.empty()) space.leaf_bits = parse_int_list(g.leaf_bits);
    space.kinds.clear();
    for (const auto& k : split_list(g.kinds)) space.kinds.push_back(parse_model_kind(k));

    GridOptions opts;
    opts.budget_bytes = g.budget;
    opts.metric = parse_metric_kind(g.metric);
    opts.fit.rng_seed = c.seed;
    opts.fit.feature_subsample = g.subsample;
    opts.fit.learning_rate = g.learning_rate;
    opts.fold_leaves = !g.no_fold;
    opts.parallel = g.parallel;
    const auto results = grid_search(space, data, opts);
    {
        std::ofstream out(out_file(c, "grid.csv"));
        write_grid_csv(out, results);
    }
    const CostAxis axis = parse_cost_axis(g.cost_axis);
    const auto front = grid_pareto(results, axis, Split::Validation, Split::Test);
    {
        std::ofstream out(out_file(c, "pareto.csv"));
        write_pareto_csv(out, front);
    }
    const std::vector<PlotCurve> curves{{"grid pareto", front}};
    write_text(out_file(c, "plotdata.json"), plotdata_json(curves));
    for (const auto& r : results) {
        if (!r.seed) continue;
        save_model(out_file(c, "seed_model.json").string(), AnyEnsemble(r.model));
        std::cout << "seed: " << to_string(r.params.kind) << " depth " << r.params.depth << ", " << r.params.n_estimators
                  << " estimators, " << r.params.input_bits << "/" << r.params.leaf_bits << " bits, val "
                  << r.val_score << ", test " << r.test_score << '\n';
    }
    std::cout << "wrote grid.csv (" << results.size() << " models within budget), pareto.csv, plotdata.json\n";
    return 0;
}

struct OrderOptions {
    std::string model;
    std::string strategy = "training";
};

int run_order(const Common& c, const DataOptions& d, const OrderOptions& o) {
    const AnyEnsemble model = load_model(o.model);
    const OrderStrategy strategy = parse_order_strategy(o.strategy);
    std::optional<Dataset> val;
    if (!d.path.empty() || !d.synth.empty()) val = load_data(d, c.seed).select(Split::Validation);
    return std::visit(
        [&](const auto& flat) {
            const auto order = estimator_order(flat, strategy, val ? &*val : nullptr, c.seed);
            const AnyEnsemble permuted = permute_estimators(flat, std::span<const int>(order));
            save_model(out_file(c, "model_ordered.json").string(), permuted);
            std::ofstream list(out_file(c, "order.txt"));
            for (std::size_t i = 0; i < order.size(); ++i) list << (i ? " " : "") << order[i];
            list << '\n';
            std::cout << "wrote model_ordered.json and order.txt (" << to_string(strategy) << ")\n";
            return 0;
        },
        model);
}

struct CodegenOptions {
    std::string model;
    std::string mode = "static";
    std::string split = "test";
    int vectors = 50;
};

int run_codegen(const Common& c, const DataOptions& d, const PolicyOptions& p, const CodegenOptions& o) {
    const AnyEnsemble model = load_model(o.model);
    const auto* flat = std::get_if<FlatEnsemble<std::int32_t>>(&model);
    CodegenConfig cfg;
    cfg.mode = parse_codegen_mode(o.mode);
    cfg.batch_size = p.batch;
    std::optional<Dataset> data;
    if (!d.path.empty() || !d.synth.empty()) data = load_data(d, c.seed);
    if (cfg.mode == CodegenMode::Dynamic) {
        if (p.calibrate_qwyc) {
            if (!data || flat == nullptr) throw Error("QWYC calibration needs a quantized model and data");
            cfg.policy = calibrated(*flat, *data, p.batch);
        } else {
            cfg.policy = policy_config(p);
        }
    }
    for (const auto& [name, text] : emit_source(model, cfg)) write_text(out_file(c, name), text);
    if (data) {
        const Dataset part = pick_split(*data, o.split);
        const Eigen::Index rows = std::min<Eigen::Index>(part.n_rows(), o.vectors);
        RowMatrix<std::int32_t> inputs(rows, flat->meta.n_features);
        for (Eigen::Index i = 0; i < rows; ++i) {
            inputs.row(i) = quantize_input(part.features.row(i), *flat->meta.quant).transpose();
        }
        write_text(out_file(c, "golden.csv"), emit_golden_vectors(*flat, inputs, cfg));
    }
    std::cout << "wrote model_data.h, inference.h, inference.c" << (data ? ", golden.csv" : "") << " to " << c.out
              << '\n';
    return 0;
}

struct ReportOptions {
    std::string sweeps;
    std::string grid;
    std::string cost_axis = "visited_nodes";
};

std::vector<std::map<std::string, std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    std::string line;
    std::getline(in, line);
    const auto header = split_list(line);
    std::vector<std::map<std::string, std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream cs(line);
        std::string cell;
        while (std::getline(cs, cell, ',')) cells.push_back(cell);
        if (cells.size() != header.size()) throw Error(path + ": ragged row");
        std::map<std::string, std::string> row;
        for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = cells[i];
        rows.push_back(std::move(row));
    }
    return rows;
}

int run_report(const Common& c, const ReportOptions& o) {
    if (o.sweeps.empty() && o.grid.empty()) throw Error("give --sweeps and/or --grid");
    const CostAxis axis = parse_cost_axis(o.cost_axis);
    std::vector<PlotCurve> curves;
    std::vector<ParetoRow> all_rows;
    for (const auto& path : split_list(o.sweeps)) {
        std::vector<SweepPoint> points;
        for (const auto& r : read_csv(path)) {
            points.push_back({parse_real(r.at("threshold")), parse_real(r.at("mean_visited_nodes")),
                              parse_real(r.at("mean_trees")), parse_real(r.at("mean_total_cycles")),
                              parse_real(r.at("score")), parse_split(r.at("split"))});
        }
        auto front = sweep_pareto(points, axis, Split::Validation, Split::Test);
        for (auto& row : front) row.label = path + " " + row.label;
        all_rows.insert(all_rows.end(), front.begin(), front.end());
        curves.push_back({path, std::move(front)});
    }
    if (!o.grid.empty()) {
        std::vector<ParetoRow> rows;
        for (const auto& r : read_csv(o.grid)) {
            const double cost = axis == CostAxis::ModelBytes ? parse_real(r.at("model_bytes"))
                                                              : parse_real(r.at("mean_visited_nodes"));
            rows.push_back({r.at("kind") + " d=" + r.at("depth") + " n=" + r.at("n_estimators") + " in=" +
                                r.at("input_bits") + " leaf=" + r.at("leaf_bits"),
                            0.0, cost, parse_real(r.at("val_score")), parse_real(r.at("test_score"))});
        }
        std::vector<ParetoInput> inputs;
        for (const auto& r : rows) inputs.push_back({r.cost, r.select_score, r.report_score});
        PlotCurve curve{o.grid, {}};
        for (std::size_t i : pareto_front(inputs)) curve.points.push_back(rows[i]);
        all_rows.insert(all_rows.end(), curve.points.begin(), curve.points.end());
        curves.push_back(std::move(curve));
    }
    {
        std::ofstream out(out_file(c, "pareto.csv"));
        write_pareto_csv(out, all_rows);
    }
    write_text(out_file(c, "plotdata.json"), plotdata_json(curves));
    std::cout << "wrote pareto.csv and plotdata.json to " << c.out << '\n';
    return 0;
}

/// Expands `--config file.json` into command-line tokens placed right after
/// the subcommand, so explicit arguments (parsed later) take precedence.
std::vector<std::string> expand_config(std::vector<std::string> args) {
    for (std::size_t i = 2; i + 1 < args.size(); ++i) {
        if (args[i] != "--config") continue;
        std::ifstream in(args[i + 1]);
        if (!in) throw Error("cannot open config '" + args[i + 1] + "'");
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw Error(std::string("invalid config JSON: ") + e.what());
        }
        if (!j.is_object()) throw Error("config must be a JSON object");
        std::vector<std::string> extra;
        for (const auto& [key, value] : j.items()) {
            std::string name = "--" + key;
            std::replace(name.begin(), name.end(), '_', '-');
            if (value.is_boolean()) {
                if (value.get<bool>()) extra.push_back(name);
            } else if (value.is_string()) {
                extra.push_back(name);
                extra.push_back(value.get<std::string>());
            } else if (value.is_array()) {
                std::string joined;
                for (const auto& v : value) joined += (joined.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
                extra.push_back(name);
                extra.push_back(joined);
            } else {
                extra.push_back(name);
                extra.push_back(value.dump());
            }
        }
        args.insert(args.begin() + 2, extra.begin(), extra.end());
        break;
    }
    return args;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive tree-ensemble inference toolkit"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    Common common;
    DataOptions data;
    PolicyOptions policy;

    TrainOptions train;
    auto* cmd_train = app.add_subcommand("train", "Train a random forest or gradient-boosted model");
    add_common(cmd_train, common);
    add_data(cmd_train, data);
    cmd_train->add_option("--kind", train.kind, "rf | gbt");
    cmd_train->add_option("--estimators", train.estimators, "Number of estimators N");
    cmd_train->add_option("--depth", train.depth, "Maximum depth D");
    cmd_train->add_option("--subsample", train.subsample, "RF feature fraction per tree");
    cmd_train->add_flag("--no-bootstrap", train.no_bootstrap, "Train RF trees on all rows");
    cmd_train->add_option("--learning-rate", train.learning_rate, "GBT learning rate");
    cmd_train->add_flag("--fold", train.fold, "Fold single-value leaves into the nodes");
    cmd_train->add_flag("--oversample", train.oversample, "Oversample minority classes before training");
    cmd_train->add_flag("--save-data", train.save_data, "Also write the dataset used as data.csv");

    QuantizeOptions quant;
    auto* cmd_quant = app.add_subcommand("quantize", "Quantize a real-valued model to integer inputs and leaves");
    add_common(cmd_quant, common);
    add_data(cmd_quant, data);
    cmd_quant->add_option("--model", quant.model, "Model JSON")->required();
    cmd_quant->add_option("--input-bits", quant.input_bits, "8 | 16 | 32");
    cmd_quant->add_option("--leaf-bits", quant.leaf_bits, "8 | 16 | 32");
    cmd_quant->add_option("--input-scale", quant.input_scale, "Input scale (0: max |x| on training data)");
    cmd_quant->add_option("--leaf-scale", quant.leaf_scale, "Leaf scale (0: max accumulated score on training data)");
    cmd_quant->add_flag("--trained-on-quantized", quant.trained_on_quantized, "Thresholds are already integer-domain");

    PredictOptions pred;
    auto* cmd_pred = app.add_subcommand("predict", "Run static or dynamic inference over a dataset split");
    add_common(cmd_pred, common);
    add_data(cmd_pred, data);
    add_policy(cmd_pred, policy);
    cmd_pred->add_option("--model", pred.model, "Model JSON")->required();
    cmd_pred->add_option("--split", pred.split, "train | val | test | all");
    cmd_pred->add_option("--metric", pred.metric, "balanced_accuracy | f1");
    cmd_pred->add_flag("--threaded", pred.threaded, "Use real threads (one per core)");

    SweepOptions sweep;
    auto* cmd_sweep = app.add_subcommand("sweep", "Sweep the stopping threshold of one seed model");
    add_common(cmd_sweep, common);
    add_data(cmd_sweep, data);
    add_policy(cmd_sweep, policy);
    cmd_sweep->add_option("--model", sweep.model, "Model JSON")->required();
    cmd_sweep->add_option("--thresholds", sweep.thresholds, "Comma-separated thresholds (default grid if empty)");
    cmd_sweep->add_option("--metric", sweep.metric, "balanced_accuracy | f1");
    cmd_sweep->add_option("--cost-axis", sweep.cost_axis, "visited_nodes | trees | total_cycles");
    cmd_sweep->add_flag("--parallel", sweep.parallel, "Evaluate thresholds concurrently");

    GridOptionsCli grid;
    auto* cmd_grid = app.add_subcommand("grid", "Grid search over depth, estimators and bit widths");
    add_common(cmd_grid, common);
    add_data(cmd_grid, data);
    cmd_grid->add_option("--space", grid.space, "desk | full");
    cmd_grid->add_option("--depths", grid.depths, "e.g. 1-8 or 2,4,6");
    cmd_grid->add_option("--estimators", grid.estimators, "e.g. 1-16");
    cmd_grid->add_option("--input-bits", grid.input_bits, "e.g. 8,16,32");
    cmd_grid->add_option("--leaf-bits", grid.leaf_bits, "e.g. 8,16,32");
    cmd_grid->add_option("--kinds", grid.kinds, "rf,gbt");
    cmd_grid->add_option("--budget", grid.budget, "Memory budget in bytes");
    cmd_grid->add_option("--metric", grid.metric, "balanced_accuracy | f1");
    cmd_grid->add_option("--cost-axis", grid.cost_axis, "model_bytes | visited_nodes | trees");
    cmd_grid->add_option("--subsample", grid.subsample, "RF feature fraction per tree");
    cmd_grid->add_option("--learning-rate", grid.learning_rate, "GBT learning rate");
    cmd_grid->add_flag("--no-fold", grid.no_fold, "Keep single-value leaves in LEAVES");
    cmd_grid->add_flag("--parallel", grid.parallel, "Train (kind, depth) groups concurrently");

    OrderOptions order;
    auto* cmd_order = app.add_subcommand("order", "Reorder estimators");
    add_common(cmd_order, common);
    add_data(cmd_order, data);
    cmd_order->add_option("--model", order.model, "Model JSON")->required();
    cmd_order->add_option("--strategy", order.strategy, "training | random | score | qwyc_like");

    CodegenOptions gen;
    auto* cmd_gen = app.add_subcommand("codegen", "Emit C inference source and golden vectors");
    add_common(cmd_gen, common);
    add_data(cmd_gen, data);
    add_policy(cmd_gen, policy);
    cmd_gen->add_option("--model", gen.model, "Quantized model JSON")->required();
    cmd_gen->add_option("--mode", gen.mode, "static | dynamic");
    cmd_gen->add_option("--split", gen.split, "Split used for golden vectors");
    cmd_gen->add_option("--vectors", gen.vectors, "Maximum number of golden vectors");

    ReportOptions report;
    auto* cmd_report = app.add_subcommand("report", "Pareto fronts and plot data from sweep/grid CSVs");
    add_common(cmd_report, common);
    cmd_report->add_option("--sweeps", report.sweeps, "Comma-separated sweep.csv files");
    cmd_report->add_option("--grid", report.grid, "grid.csv file");
    cmd_report->add_option("--cost-axis", report.cost_axis, "visited_nodes | trees | total_cycles | model_bytes");

    try {
        std::vector<std::string> args(argv, argv + argc);
        args = expand_config(std::move(args));
        std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*cmd_train) return run_train(common, data, train);
        if (*cmd_quant) return run_quantize(common, data, quant);
        if (*cmd_pred) return run_predict(common, data, policy, pred);
        if (*cmd_sweep) return run_sweep(common, data, policy, sweep);
        if (*cmd_grid) return run_grid(common, data, grid);
        if (*cmd_order) return run_order(common, data, order);
        if (*cmd_gen) return run_codegen(common, data, policy, gen);
        if (*cmd_report) return run_report(common, report);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
