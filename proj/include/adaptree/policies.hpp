#ifndef ADAPTREE_POLICIES_HPP
#define ADAPTREE_POLICIES_HPP

#include "adaptree/common.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>

namespace adaptree {

enum class PolicyKind { Max, ScoreMargin, AggMax, AggScoreMargin, Qwyc };

std::string to_string(PolicyKind kind);
PolicyKind parse_policy_kind(std::string_view text);

/// QWYC exit thresholds on the positive-class score. A disabled exit keeps
/// its neutral value (1 for eps_plus, 0 for eps_minus) and never fires.
struct QwycThresholds {
    double eps_minus = 0.0;
    double eps_plus = 1.0;
    bool minus_enabled = false;
    bool plus_enabled = false;

    friend bool operator==(const QwycThresholds&, const QwycThresholds&) = default;
};

struct PolicyConfig {
    PolicyKind kind = PolicyKind::AggScoreMargin;
    double threshold = 0.5;
    QwycThresholds qwyc;
    /// RF aggregated scores are divided by the number of executed estimators.
    bool normalized = true;

    static constexpr double never_stop() { return std::numeric_limits<double>::infinity(); }
};

/// Accumulated outputs after `trees_executed` trees.
template <typename Scalar>
struct ScoreState {
    Vector<Scalar> acc;
    int trees_executed = 0;
    int estimators_executed = 0;
};

/// Max Score: the largest entry.
template <typename Derived>
typename Derived::Scalar score_max(const Eigen::DenseBase<Derived>& p) {
    if (p.size() == 0) throw Error("score_max of an empty vector");
    return p.maxCoeff();
}

/// Score Margin: largest minus second-largest entry. A duplicated maximum
/// gives a margin of 0.
template <typename Derived>
typename Derived::Scalar score_margin(const Eigen::DenseBase<Derived>& p) {
    using S = typename Derived::Scalar;
    if (p.size() < 2) throw Error("score_margin needs at least 2 entries");
    S first = p(0) >= p(1) ? p(0) : p(1);
    S second = p(0) >= p(1) ? p(1) : p(0);
    for (Eigen::Index i = 2; i < p.size(); ++i) {
        if (p(i) > first) {
            second = first;
            first = p(i);
        } else if (p(i) > second) {
            second = p(i);
        }
    }
    return first - second;
}

/// Fixed-point resolution of thresholds compared against integer scores.
inline constexpr int kThresholdFracBits = 16;
inline constexpr std::int64_t kThresholdOne = std::int64_t{1} << kThresholdFracBits;

/// Model-dependent facts needed to turn a PolicyConfig into a stop rule.
struct PolicyContext {
    ModelKind kind = ModelKind::RandomForest;
    int n_classes = 2;
    bool quantized = false;
    std::int64_t unit = 1;    // accumulator value of a real 1.0 (integer RF models)
    double quant_factor = 1.0; // integer units per real unit (integer GBT models)
};

/// A PolicyConfig compiled against a model. Real-valued models compare in
/// double precision; integer models use only integer arithmetic:
///  - RF scores are compared as  score * 2^16 >= th_q16 * k * unit  with
///    k = estimators executed for normalized aggregated scores and k = 1
///    otherwise (no division);
///  - GBT raw scores are compared against  ceil(t_h * quant_factor).
/// QWYC uses the normalized positive-class score for RFs and the raw
/// accumulated logit for GBTs.
struct StopRule {
    PolicyConfig cfg;
    PolicyContext ctx;
    bool never = false;
    std::int64_t th_fixed = 0;      // RF: Q16 threshold; GBT: integer threshold
    std::int64_t eps_plus_fixed = 0;
    std::int64_t eps_minus_fixed = 0;

    bool uses_last_output() const { return cfg.kind == PolicyKind::Max || cfg.kind == PolicyKind::ScoreMargin; }
    /// Divides aggregated RF scores by the number of executed estimators.
    bool divides_by_estimators() const {
        return ctx.kind == ModelKind::RandomForest && cfg.normalized &&
               (cfg.kind == PolicyKind::AggMax || cfg.kind == PolicyKind::AggScoreMargin);
    }
};

StopRule compile_policy(const PolicyConfig& cfg, const PolicyContext& ctx);

namespace detail {

template <typename Derived>
typename Derived::Scalar kind_score(PolicyKind kind, const Eigen::DenseBase<Derived>& p) {
    return kind == PolicyKind::Max || kind == PolicyKind::AggMax ? score_max(p) : score_margin(p);
}

__extension__ using Int128 = __int128;

/// a * b >= c * d without overflow.
inline bool ge_scaled(std::int64_t value, std::int64_t value_scale, std::int64_t th, std::int64_t th_scale) {
    return static_cast<Int128>(value) * value_scale >= static_cast<Int128>(th) * th_scale;
}

} // namespace detail

/// Early-stop decision: score >= t_h. Max/ScoreMargin score the last
/// executed estimator's outputs; aggregated kinds score state.acc.
template <typename Scalar>
bool policy_decide(const StopRule& rule, const ScoreState<Scalar>& state,
                   const std::type_identity_t<Vector<Scalar>>* last_output) {
    if (state.trees_executed < 1) throw Error("policy evaluated before any tree ran");
    if (rule.uses_last_output() && last_output == nullptr) {
        throw Error("per-tree policies need the last estimator's outputs");
    }
    if (rule.never) return false;
    const std::int64_t k = std::max(state.estimators_executed, 1);
    const bool rf = rule.ctx.kind == ModelKind::RandomForest;

    if (rule.cfg.kind == PolicyKind::Qwyc) {
        const auto& q = rule.cfg.qwyc;
        if constexpr (std::is_integral_v<Scalar>) {
            const std::int64_t pos = state.acc(1);
            if (rf) {
                const std::int64_t denom = k * rule.ctx.unit;
                return (q.plus_enabled && detail::ge_scaled(pos, kThresholdOne, rule.eps_plus_fixed, denom)) ||
                       (q.minus_enabled && detail::ge_scaled(rule.eps_minus_fixed, denom, pos, kThresholdOne));
            }
            return (q.plus_enabled && pos >= rule.eps_plus_fixed) || (q.minus_enabled && pos <= rule.eps_minus_fixed);
        } else {
            const double pos = rf ? state.acc(1) / static_cast<double>(k) : state.acc(1);
            return (q.plus_enabled && pos >= q.eps_plus) || (q.minus_enabled && pos <= q.eps_minus);
        }
    }

    const Scalar score = rule.uses_last_output() ? detail::kind_score(rule.cfg.kind, *last_output)
                                                 : detail::kind_score(rule.cfg.kind, state.acc);
    const std::int64_t divisor = rule.divides_by_estimators() ? k : 1;
    if constexpr (std::is_integral_v<Scalar>) {
        if (rf) return detail::ge_scaled(score, kThresholdOne, rule.th_fixed, divisor * rule.ctx.unit);
        return score >= rule.th_fixed;
    } else {
        return score / static_cast<double>(divisor) >= rule.cfg.threshold;
    }
}

template <typename Scalar>
bool policy_decide(const PolicyConfig& cfg, const PolicyContext& ctx, const ScoreState<Scalar>& state,
                   const std::type_identity_t<Vector<Scalar>>* last_output) {
    return policy_decide(compile_policy(cfg, ctx), state, last_output);
}

/// Positive-class QWYC score of an accumulator in the rule's comparison
/// domain, split into the value tested against eps_plus (upper) and the one
/// tested against eps_minus (lower):
///   stop_plus  <=> upper >= eps_plus,  stop_minus <=> lower <= eps_minus.
/// Integer RFs use floor/ceil of pos * 2^16 / (k * unit); integer GBTs use
/// the raw logit. Values for integer models are in fixed-point units.
struct QwycScore {
    double upper = 0.0;
    double lower = 0.0;
};

template <typename Scalar>
QwycScore qwyc_score(const StopRule& rule, const ScoreState<Scalar>& state) {
    const std::int64_t k = std::max(state.estimators_executed, 1);
    const bool rf = rule.ctx.kind == ModelKind::RandomForest;
    if constexpr (std::is_integral_v<Scalar>) {
        const std::int64_t pos = state.acc(1);
        if (!rf) return {static_cast<double>(pos), static_cast<double>(pos)};
        const std::int64_t num = pos * kThresholdOne;
        const std::int64_t den = k * rule.ctx.unit;
        std::int64_t fl = num / den;
        if (num % den != 0 && num < 0) --fl;
        std::int64_t ce = num / den;
        if (num % den != 0 && num > 0) ++ce;
        return {static_cast<double>(fl), static_cast<double>(ce)};
    } else {
        const double pos = rf ? state.acc(1) / static_cast<double>(k) : state.acc(1);
        return {pos, pos};
    }
}

/// Converts fixed-point QWYC thresholds (as produced by qwyc_score) back to
/// the real values stored in a PolicyConfig, such that compile_policy maps
/// them back to exactly the same fixed-point values.
double qwyc_plus_from_fixed(const PolicyContext& ctx, double fixed);
double qwyc_minus_from_fixed(const PolicyContext& ctx, double fixed);

} // namespace adaptree

#endif
