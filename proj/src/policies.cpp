#include "adaptree/policies.hpp"

#include <algorithm>

namespace adaptree {

std::string to_string(PolicyKind kind) {
    switch (kind) {
    case PolicyKind::Max: return "max";
    case PolicyKind::ScoreMargin: return "score_margin";
    case PolicyKind::AggMax: return "agg_max";
    case PolicyKind::AggScoreMargin: return "agg_score_margin";
    case PolicyKind::Qwyc: return "qwyc";
    }
    return "unknown";
}

PolicyKind parse_policy_kind(std::string_view text) {
    if (text == "max") return PolicyKind::Max;
    if (text == "score_margin" || text == "sm") return PolicyKind::ScoreMargin;
    if (text == "agg_max") return PolicyKind::AggMax;
    if (text == "agg_score_margin" || text == "agg_sm") return PolicyKind::AggScoreMargin;
    if (text == "qwyc") return PolicyKind::Qwyc;
    throw Error("unknown policy '" + std::string(text) + "'");
}

namespace {

constexpr std::int64_t kSaturate = std::int64_t{1} << 62;

std::int64_t saturate(double v) {
    if (v >= static_cast<double>(kSaturate)) return kSaturate;
    if (v <= -static_cast<double>(kSaturate)) return -kSaturate;
    return static_cast<std::int64_t>(v);
}

// RF thresholds in Q16, kept small enough that th * k * unit fits 64 bits
// (k * unit is bounded by the 32-bit accumulator).
std::int64_t rf_fixed(double v) {
    const double scaled = std::round(v * static_cast<double>(kThresholdOne));
    return std::clamp<std::int64_t>(saturate(scaled), -kThresholdOne, std::int64_t{1} << 31);
}

} // namespace

StopRule compile_policy(const PolicyConfig& cfg, const PolicyContext& ctx) {
    StopRule rule;
    rule.cfg = cfg;
    rule.ctx = ctx;
    if (ctx.quantized && ctx.kind == ModelKind::RandomForest && ctx.unit <= 0) {
        throw Error("integer RF policy needs a positive leaf unit");
    }
    if (cfg.kind == PolicyKind::Qwyc) {
        if (ctx.n_classes != 2) throw Error("QWYC requires a binary model (M = 2)");
        const auto& q = cfg.qwyc;
        if (std::isnan(q.eps_plus) || std::isnan(q.eps_minus)) throw Error("QWYC thresholds must not be NaN");
        if (q.plus_enabled && q.minus_enabled && q.eps_minus > q.eps_plus) {
            throw Error("QWYC requires eps_minus <= eps_plus");
        }
        rule.never = !q.plus_enabled && !q.minus_enabled;
        if (ctx.quantized) {
            if (ctx.kind == ModelKind::RandomForest) {
                rule.eps_plus_fixed = rf_fixed(q.eps_plus);
                rule.eps_minus_fixed = rf_fixed(q.eps_minus);
            } else {
                rule.eps_plus_fixed = saturate(std::ceil(q.eps_plus * ctx.quant_factor));
                rule.eps_minus_fixed = saturate(std::floor(q.eps_minus * ctx.quant_factor));
            }
        }
        return rule;
    }
    if (std::isnan(cfg.threshold)) throw Error("policy threshold must not be NaN");
    if (cfg.kind == PolicyKind::ScoreMargin || cfg.kind == PolicyKind::AggScoreMargin) {
        if (ctx.n_classes < 2) throw Error("score margin needs at least 2 classes");
    }
    rule.never = std::isinf(cfg.threshold) && cfg.threshold > 0;
    if (ctx.quantized && !rule.never) {
        if (ctx.kind == ModelKind::RandomForest) {
            if (cfg.threshold >= static_cast<double>(std::int64_t{1} << 15)) rule.never = true;
            rule.th_fixed = rf_fixed(cfg.threshold);
        } else {
            rule.th_fixed = saturate(std::ceil(cfg.threshold * ctx.quant_factor));
        }
    }
    return rule;
}

double qwyc_plus_from_fixed(const PolicyContext& ctx, double fixed) {
    if (!ctx.quantized) return fixed;
    if (ctx.kind == ModelKind::RandomForest) return fixed / static_cast<double>(kThresholdOne);
    return (fixed - 0.5) / ctx.quant_factor;
}

double qwyc_minus_from_fixed(const PolicyContext& ctx, double fixed) {
    if (!ctx.quantized) return fixed;
    if (ctx.kind == ModelKind::RandomForest) return fixed / static_cast<double>(kThresholdOne);
    return (fixed + 0.5) / ctx.quant_factor;
}

} // namespace adaptree
