#include "adaptree/qwyc.hpp"

#include <algorithm>
#include <limits>

namespace adaptree {

template <EnsembleScalar Scalar>
QwycCalibration calibrate_qwyc(const FlatEnsemble<Scalar>& flat, const Eigen::MatrixXd& inputs, int batch_size) {
    if (flat.meta.task != Task::Classification || flat.meta.n_classes != 2) {
        throw Error("QWYC requires a binary model (M = 2)");
    }
    if (batch_size < 1) throw Error("batch size must be at least 1");
    if (inputs.rows() == 0) throw Error("QWYC calibration needs at least one input");

    const Engine<Scalar> engine(flat, EngineConfig{});
    const PolicyContext ctx = policy_context(flat);
    PolicyConfig probe;
    probe.kind = PolicyKind::Qwyc;
    const StopRule rule = compile_policy(probe, ctx);

    const int group = flat.meta.trees_per_estimator();
    const int units = flat.meta.n_estimators;
    const int triggers = units / batch_size;
    constexpr double inf = std::numeric_limits<double>::infinity();

    struct Checkpoint {
        QwycScore score;
        bool good;
    };
    std::vector<Checkpoint> points;
    points.reserve(static_cast<std::size_t>(inputs.rows() * triggers));
    ScoreState<Scalar> state;
    std::vector<std::pair<QwycScore, int>> running;
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
        const Vector<Scalar> x = prepare_input(flat, inputs.row(i));
        state.acc = engine.zero_accumulator();
        running.clear();
        for (int u = 0; u < units; ++u) {
            for (int k = 0; k < group; ++k) {
                const int t = u * group + k;
                engine.accumulate(t, eval_tree<Scalar>(flat, t, x).leaf_node, state.acc);
            }
            state.trees_executed = (u + 1) * group;
            state.estimators_executed = u + 1;
            if ((u + 1) % batch_size == 0 && (u + 1) / batch_size <= triggers) {
                running.emplace_back(qwyc_score(rule, state), argmax(state.acc));
            }
        }
        const int final_class = argmax(state.acc);
        for (const auto& [score, cls] : running) points.push_back({score, cls == final_class});
    }

    QwycCalibration out;
    out.checkpoints = static_cast<int>(points.size());
    double max_bad_upper = -inf;
    double min_bad_lower = inf;
    for (const auto& p : points) {
        if (p.good) continue;
        ++out.bad_checkpoints;
        max_bad_upper = std::max(max_bad_upper, p.score.upper);
        min_bad_lower = std::min(min_bad_lower, p.score.lower);
    }
    double plus = inf;
    double minus = -inf;
    for (const auto& p : points) {
        if (!p.good) continue;
        if (p.score.upper > max_bad_upper) plus = std::min(plus, p.score.upper);
        if (p.score.lower < min_bad_lower) minus = std::max(minus, p.score.lower);
    }

    auto& th = out.thresholds;
    if (out.bad_checkpoints == 0) {
        // Every checkpoint agrees with the final class: exit at the first one.
        th.plus_enabled = plus < inf;
        th.eps_plus = th.plus_enabled ? qwyc_plus_from_fixed(ctx, plus) : 1.0;
        return out;
    }
    th.plus_enabled = plus < inf;
    th.minus_enabled = minus > -inf;
    if (th.plus_enabled) th.eps_plus = qwyc_plus_from_fixed(ctx, plus);
    if (th.minus_enabled) th.eps_minus = qwyc_minus_from_fixed(ctx, minus);
    if (!th.plus_enabled) th.eps_plus = std::max(1.0, th.eps_minus);
    if (!th.minus_enabled) th.eps_minus = std::min(0.0, th.eps_plus);
    return out;
}

template QwycCalibration calibrate_qwyc(const FlatEnsemble<double>&, const Eigen::MatrixXd&, int);
template QwycCalibration calibrate_qwyc(const FlatEnsemble<std::int32_t>&, const Eigen::MatrixXd&, int);

} // namespace adaptree
