#include "adaptree/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace adaptree {

void check_fit_params(const FitParams& params) {
    if (params.n_estimators < 1) throw Error("n_estimators must be at least 1");
    if (params.max_depth < 1) throw Error("max_depth must be at least 1");
    if (!(params.feature_subsample > 0.0 && params.feature_subsample <= 1.0)) {
        throw Error("feature_subsample must be in (0, 1]");
    }
    if (!(params.learning_rate > 0.0)) throw Error("learning_rate must be positive");
}

namespace {

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double gain = -1.0;
};

class TreeBuilder {
public:
    TreeBuilder(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Task task, int n_classes, int max_depth,
                std::span<const int> features)
        : x_(x), y_(y), task_(task), n_classes_(n_classes), max_depth_(max_depth), features_(features) {}

    LogicalTree build(std::vector<int> rows) {
        tree_.nodes.clear();
        grow(std::move(rows), 0);
        return std::move(tree_);
    }

private:
    int label(int row) const { return static_cast<int>(y_(row)); }

    std::vector<double> leaf_values(const std::vector<int>& rows) const {
        if (task_ == Task::Regression) {
            double sum = 0.0;
            for (int r : rows) sum += y_(r);
            return {sum / static_cast<double>(rows.size())};
        }
        std::vector<double> freq(static_cast<std::size_t>(n_classes_), 0.0);
        for (int r : rows) freq[static_cast<std::size_t>(label(r))] += 1.0;
        for (double& f : freq) f /= static_cast<double>(rows.size());
        return freq;
    }

    bool pure(const std::vector<int>& rows) const {
        return std::all_of(rows.begin(), rows.end(), [&](int r) { return y_(r) == y_(rows.front()); });
    }

    SplitChoice best_split(const std::vector<int>& rows) const {
        SplitChoice best;
        const auto n = rows.size();
        std::vector<int> order(rows);
        std::vector<double> left(static_cast<std::size_t>(std::max(n_classes_, 1)));
        std::vector<double> total(left.size(), 0.0);
        double total_sum = 0.0;
        for (int r : rows) {
            if (task_ == Task::Regression) {
                total_sum += y_(r);
            } else {
                total[static_cast<std::size_t>(label(r))] += 1.0;
            }
        }

        for (int f : features_) {
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                return x_(a, f) < x_(b, f) || (x_(a, f) == x_(b, f) && a < b);
            });
            std::fill(left.begin(), left.end(), 0.0);
            double left_sum = 0.0;
            // Classification gain is sum_c l_c^2/n_l + sum_c r_c^2/n_r (maximised
            // when Gini impurity is minimised), updated in O(1) per step.
            double sq_left = 0.0;
            double sq_right = 0.0;
            for (double t : total) sq_right += t * t;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                const int r = order[i];
                if (task_ == Task::Regression) {
                    left_sum += y_(r);
                } else {
                    const auto c = static_cast<std::size_t>(label(r));
                    const double right_c = total[c] - left[c];
                    sq_left += 2.0 * left[c] + 1.0;
                    sq_right -= 2.0 * right_c - 1.0;
                    left[c] += 1.0;
                }
                const double a = x_(r, f);
                const double b = x_(order[i + 1], f);
                if (!(a < b)) continue;
                const double n_left = static_cast<double>(i + 1);
                const double n_right = static_cast<double>(n - i - 1);
                double gain = 0.0;
                if (task_ == Task::Regression) {
                    const double right_sum = total_sum - left_sum;
                    gain = left_sum * left_sum / n_left + right_sum * right_sum / n_right;
                } else {
                    gain = sq_left / n_left + sq_right / n_right;
                }
                if (gain > best.gain + 1e-12 * std::abs(best.gain)) {
                    double threshold = a + (b - a) / 2.0;
                    if (!(threshold < b)) threshold = a;
                    best = SplitChoice{f, threshold, gain};
                }
            }
        }
        return best;
    }

    int grow(std::vector<int> rows, int depth) {
        const int index = tree_.node_count();
        tree_.nodes.emplace_back();
        if (depth >= max_depth_ || rows.size() < 2 || pure(rows)) {
            tree_.nodes[static_cast<std::size_t>(index)].values = leaf_values(rows);
            return index;
        }
        const SplitChoice split = best_split(rows);
        if (split.feature < 0) {
            tree_.nodes[static_cast<std::size_t>(index)].values = leaf_values(rows);
            return index;
        }
        std::vector<int> left_rows;
        std::vector<int> right_rows;
        for (int r : rows) (x_(r, split.feature) > split.threshold ? right_rows : left_rows).push_back(r);
        rows.clear();
        rows.shrink_to_fit();
        const int l = grow(std::move(left_rows), depth + 1);
        const int r = grow(std::move(right_rows), depth + 1);
        auto& node = tree_.nodes[static_cast<std::size_t>(index)];
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.left = l;
        node.right = r;
        return index;
    }

    const Eigen::MatrixXd& x_;
    const Eigen::VectorXd& y_;
    Task task_;
    int n_classes_;
    int max_depth_;
    std::span<const int> features_;
    LogicalTree tree_;
};

std::vector<int> all_indices(Eigen::Index n) {
    std::vector<int> out(static_cast<std::size_t>(n));
    std::iota(out.begin(), out.end(), 0);
    return out;
}

void check_training_data(const Dataset& data) {
    check_dataset(data);
    if (data.n_rows() == 0) throw Error("cannot train on an empty dataset");
    if (data.n_features() == 0) throw Error("cannot train without features");
    if (data.task == Task::Classification && data.n_classes < 2) throw Error("classification needs at least 2 classes");
}

EnsembleMeta meta_for(const Dataset& data, const FitParams& params, ModelKind kind) {
    EnsembleMeta meta;
    meta.kind = kind;
    meta.n_estimators = params.n_estimators;
    meta.n_classes = data.task == Task::Regression ? 1 : data.n_classes;
    meta.max_depth = params.max_depth;
    meta.task = data.task;
    meta.n_features = data.n_features();
    return meta;
}

} // namespace

LogicalTree fit_tree(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, std::span<const int> rows,
                     Task task, int n_classes, int max_depth, std::span<const int> candidate_features) {
    if (rows.empty()) throw Error("cannot fit a tree on zero rows");
    if (max_depth < 1) throw Error("max_depth must be at least 1");
    if (candidate_features.empty()) throw Error("no candidate features");
    if (features.rows() != targets.size()) throw Error("feature and target row counts differ");
    for (int f : candidate_features) {
        if (f < 0 || f >= features.cols()) throw Error("candidate feature out of range");
    }
    if (task == Task::Classification) {
        for (int r : rows) {
            if (targets(r) < 0 || targets(r) >= n_classes) throw Error("label out of range");
        }
    }
    TreeBuilder builder(features, targets, task, n_classes, max_depth, candidate_features);
    return builder.build(std::vector<int>(rows.begin(), rows.end()));
}

LogicalTree fit_tree(const Dataset& data, int max_depth) {
    check_training_data(data);
    const auto rows = all_indices(data.n_rows());
    const auto features = all_indices(data.n_features());
    return fit_tree(data.features, data.labels, rows, data.task, data.n_classes, max_depth, features);
}

LogicalEnsemble fit_random_forest(const Dataset& data, const FitParams& params) {
    check_fit_params(params);
    check_training_data(data);
    LogicalEnsemble ens;
    ens.meta = meta_for(data, params, ModelKind::RandomForest);
    const auto n = static_cast<int>(data.n_rows());
    const int n_features = data.n_features();
    const int k = std::clamp(static_cast<int>(std::ceil(params.feature_subsample * n_features - 1e-9)), 1, n_features);

    for (int t = 0; t < params.n_estimators; ++t) {
        std::seed_seq seq{static_cast<std::uint32_t>(params.rng_seed), static_cast<std::uint32_t>(params.rng_seed >> 32),
                          static_cast<std::uint32_t>(t)};
        std::mt19937_64 rng(seq);
        std::vector<int> rows;
        if (params.bootstrap) {
            std::uniform_int_distribution<int> pick(0, n - 1);
            rows.resize(static_cast<std::size_t>(n));
            for (int& r : rows) r = pick(rng);
        } else {
            rows = all_indices(n);
        }
        std::vector<int> features = all_indices(n_features);
        if (k < n_features) {
            std::shuffle(features.begin(), features.end(), rng);
            features.resize(static_cast<std::size_t>(k));
            std::sort(features.begin(), features.end());
        }
        LogicalTree tree = fit_tree(data.features, data.labels, rows, data.task, data.n_classes, params.max_depth, features);
        if (data.task == Task::Classification && data.n_classes == 2) {
            for (auto& node : tree.nodes) {
                if (node.is_leaf()) node.values.resize(1);
            }
        }
        ens.trees.push_back(std::move(tree));
    }
    return ens;
}

LogicalEnsemble fit_gbt(const Dataset& data, const FitParams& params) {
    check_fit_params(params);
    check_training_data(data);
    LogicalEnsemble ens;
    ens.meta = meta_for(data, params, ModelKind::GradientBoosting);
    const int per_estimator = ens.meta.trees_per_estimator();
    const Eigen::Index n = data.n_rows();
    const auto rows = all_indices(n);
    const auto features = all_indices(data.n_features());
    const int slots = data.task == Task::Regression ? 1 : data.n_classes;

    Eigen::MatrixXd score = Eigen::MatrixXd::Zero(n, slots);
    Eigen::VectorXd residual(n);
    for (int e = 0; e < params.n_estimators; ++e) {
        Eigen::MatrixXd prob(n, slots);
        if (data.task == Task::Classification && slots > 2) {
            for (Eigen::Index i = 0; i < n; ++i) {
                const Eigen::VectorXd z = score.row(i).transpose();
                const Eigen::VectorXd ez = (z.array() - z.maxCoeff()).exp();
                prob.row(i) = (ez / ez.sum()).transpose();
            }
        }
        Eigen::MatrixXd update = Eigen::MatrixXd::Zero(n, slots);
        for (int k = 0; k < per_estimator; ++k) {
            // Binary problems boost only the class-1 logit, kept in column 1.
            const int slot = slots == 2 ? 1 : k;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (data.task == Task::Regression) {
                    residual(i) = data.labels(i) - score(i, 0);
                } else if (slots == 2) {
                    residual(i) = (data.label(i) == 1 ? 1.0 : 0.0) - 1.0 / (1.0 + std::exp(-score(i, 1)));
                } else {
                    residual(i) = (data.label(i) == k ? 1.0 : 0.0) - prob(i, k);
                }
            }
            LogicalTree tree =
                fit_tree(data.features, residual, rows, Task::Regression, 1, params.max_depth, features);
            for (auto& node : tree.nodes) {
                if (node.is_leaf()) node.values[0] *= params.learning_rate;
            }
            for (Eigen::Index i = 0; i < n; ++i) update(i, slot) += evaluate(tree, data.features.row(i))[0];
            ens.trees.push_back(std::move(tree));
        }
        score += update;
    }
    return ens;
}

Dataset oversample_minority(const Dataset& data, std::uint64_t seed) {
    check_dataset(data);
    if (data.task != Task::Classification) throw Error("oversampling needs a classification dataset");
    const auto counts = data.class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) throw Error("class " + std::to_string(c) + " has no samples to oversample");
    }
    const int majority = *std::max_element(counts.begin(), counts.end());
    std::vector<std::vector<int>> by_class(counts.size());
    for (Eigen::Index i = 0; i < data.n_rows(); ++i) by_class[static_cast<std::size_t>(data.label(i))].push_back(static_cast<int>(i));

    std::mt19937_64 rng(seed);
    std::vector<int> rows = all_indices(data.n_rows());
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        if (by_class[c].empty()) continue;
        std::uniform_int_distribution<std::size_t> pick(0, by_class[c].size() - 1);
        for (int extra = counts[c]; extra < majority; ++extra) rows.push_back(by_class[c][pick(rng)]);
    }
    return data.take(rows);
}

} // namespace adaptree
