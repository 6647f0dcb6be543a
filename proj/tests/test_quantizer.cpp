#include "adaptree/quantizer.hpp"

#include "support.hpp"

#include <doctest.h>

#include <array>
#include <cmath>

using namespace adaptree;
using namespace adaptree::test;

namespace {

// Quantizer formula computed with long double and explicit half-away rounding.
std::int64_t oracle_quantize(double x, double scale, int bits) {
    const long double v = static_cast<long double>(x) * std::ldexp(1.0L, bits - 1) / scale;
    const long double r = v < 0 ? -std::floor(-v + 0.5L) : std::floor(v + 0.5L);
    const long double lo = -std::ldexp(1.0L, bits - 1);
    const long double hi = std::ldexp(1.0L, bits - 1) - 1;
    return static_cast<std::int64_t>(std::clamp(r, lo, hi));
}

FlatEnsemble<double> single_split(double threshold) {
    EnsembleMeta m;
    m.kind = ModelKind::GradientBoosting;
    m.n_classes = 2;
    m.n_features = 1;
    const std::vector<LogicalTree> trees{
        LogicalTree::split(0, threshold, LogicalTree::leaf({-1.0}), LogicalTree::leaf({1.0}))};
    return build_flat(trees, m, true);
}

QuantSpec spec8() { return QuantSpec{8, 8, 128.0, 1.0}; }

} // namespace

TEST_CASE("quantize_symmetric examples") {
    CHECK(quantize_symmetric(2.0, 2.0, 8) == 127);
    CHECK(quantize_symmetric(0.0, 2.0, 8) == 0);
    CHECK(quantize_symmetric(0.0, 0.3, 32) == 0);
    CHECK(quantize_symmetric(3.0, 2.0, 8) == 127);
    CHECK(quantize_symmetric(-2.0, 2.0, 8) == -128);
    CHECK(quantize_symmetric(1.0, 4.0, 8) == 32);
    CHECK_THROWS_AS(quantize_symmetric(std::nan(""), 1.0, 8), Error);
    CHECK_THROWS_AS(quantize_symmetric(INFINITY, 1.0, 8), Error);
    CHECK_THROWS_AS(quantize_symmetric(1.0, 0.0, 8), Error);
    CHECK_THROWS_AS(quantize_symmetric(1.0, 1.0, 12), Error);
}

TEST_CASE("rounding is half away from zero") {
    // 0.5 / 128 * 128 = 0.5 exactly.
    CHECK(quantize_symmetric(0.5 / 128.0, 1.0, 8) == 1);
    CHECK(quantize_symmetric(-0.5 / 128.0, 1.0, 8) == -1);
    CHECK(quantize_symmetric(1.5 / 128.0, 1.0, 8) == 2);
    CHECK(quantize_symmetric(-2.5 / 128.0, 1.0, 8) == -3);
}

TEST_CASE("quantize_symmetric matches the formula oracle") {
    Rng rng(21);
    for (int i = 0; i < 20000; ++i) {
        const int bits = std::array{8, 16, 32}[static_cast<std::size_t>(i % 3)];
        const double scale = uniform_real(rng, 0.01, 100.0);
        const double x = uniform_real(rng, -1.5 * scale, 1.5 * scale);
        REQUIRE(quantize_symmetric(x, scale, bits) == oracle_quantize(x, scale, bits));
    }
}

TEST_CASE("quantize_symmetric is monotone and symmetric") {
    Rng rng(22);
    for (int i = 0; i < 5000; ++i) {
        const int bits = std::array{8, 16, 32}[static_cast<std::size_t>(i % 3)];
        const double scale = uniform_real(rng, 0.1, 10.0);
        const double a = uniform_real(rng, -2 * scale, 2 * scale);
        const double b = uniform_real(rng, -2 * scale, 2 * scale);
        const double lo = std::min(a, b);
        const double hi = std::max(a, b);
        CHECK(quantize_symmetric(lo, scale, bits) <= quantize_symmetric(hi, scale, bits));
        const auto qa = static_cast<std::int64_t>(quantize_symmetric(a, scale, bits));
        const auto qn = static_cast<std::int64_t>(quantize_symmetric(-a, scale, bits));
        const std::int64_t min = -(std::int64_t{1} << (bits - 1));
        if (qa != min && qn != min) CHECK(qn == -qa);
    }
}

TEST_CASE("threshold truncation uses floor") {
    SUBCASE("positive") {
        const auto q = quantize_inputs_and_thresholds(single_split(5.7), spec8());
        CHECK(q.nodes[0].alpha == 5.0);
    }
    SUBCASE("negative") {
        const auto q = quantize_inputs_and_thresholds(single_split(-1.2), spec8());
        CHECK(q.nodes[0].alpha == -2.0);
    }
    SUBCASE("integer") {
        const auto q = quantize_inputs_and_thresholds(single_split(3.0), spec8());
        CHECK(q.nodes[0].alpha == 3.0);
    }
    SUBCASE("missing scale") {
        CHECK_THROWS_AS(quantize_inputs_and_thresholds(single_split(3.0), QuantSpec{8, 8, 0.0, 1.0}), Error);
    }
}

TEST_CASE("truncated thresholds partition integers like the real ones") {
    Rng rng(23);
    for (int i = 0; i < 200; ++i) {
        const double t = uniform_real(rng, -130.0, 130.0);
        const auto q = quantize_inputs_and_thresholds(single_split(t), spec8());
        for (int x = -128; x <= 127; ++x) {
            REQUIRE((x > t) == (x > q.nodes[0].alpha));
        }
    }
}

TEST_CASE("quantize_leaves") {
    EnsembleMeta m;
    m.kind = ModelKind::RandomForest;
    m.n_estimators = 4;
    m.n_classes = 3;
    m.n_features = 1;
    std::vector<LogicalTree> trees(4, LogicalTree::leaf({1.0, 0.0, 0.0}));
    const auto flat = build_flat(trees, m, false);

    SUBCASE("scale 4 at 8 bits") {
        const auto q = quantize_leaves(flat, QuantSpec{8, 8, 1.0, 4.0});
        CHECK(q.leaves(0, 0) == oracle_quantize(1.0, 4.0, 8));
        CHECK(q.leaves(0, 0) == 32);
        CHECK(q.leaves(0, 1) == 0);
        CHECK(q.meta.quant->leaf_scale == 4.0);
        // Accumulating all N rows stays within 127 * N.
        CHECK(4 * q.leaves(0, 0) <= 127 * 4);
    }
    SUBCASE("all-zero leaves") {
        EnsembleMeta g = m;
        g.kind = ModelKind::GradientBoosting;
        g.n_classes = 2;
        std::vector<LogicalTree> z(4, LogicalTree::leaf({0.0}));
        CHECK_THROWS_AS(quantize_leaves(build_flat(z, g, true), QuantSpec{8, 8, 1.0, 1.0}), Error);
        CHECK_THROWS_AS(quantize_leaves(flat, QuantSpec{8, 8, 1.0, 0.0}), Error);
    }
    SUBCASE("non-integer thresholds are rejected") {
        CHECK_THROWS_AS(quantize_leaves(single_split(0.5), QuantSpec{8, 8, 1.0, 1.0}), Error);
    }
}

TEST_CASE("32-bit leaves keep relative error below 1e-6") {
    Rng rng(24);
    EnsembleMeta m;
    m.kind = ModelKind::GradientBoosting;
    m.n_estimators = 1;
    m.n_classes = 2;
    m.n_features = 1;
    for (int i = 0; i < 500; ++i) {
        double v = uniform_real(rng, -1.0, 1.0);
        if (std::abs(v) < 1e-3) v = 1e-3;
        const std::vector<LogicalTree> trees{LogicalTree::leaf({v})};
        const auto q = quantize_leaves(build_flat(trees, m, true), QuantSpec{8, 32, 1.0, 1.0});
        const double back = dequantize_symmetric(q.nodes[0].alpha, q.meta.quant->leaf_scale, 32);
        CHECK(std::abs(back - v) / std::abs(v) < 1e-6);
    }
}

TEST_CASE("leaf scale is widened so accumulation cannot overflow") {
    EnsembleMeta m;
    m.kind = ModelKind::GradientBoosting;
    m.n_estimators = 8;
    m.n_classes = 2;
    m.n_features = 1;
    const std::vector<LogicalTree> trees(8, LogicalTree::leaf({1.0}));
    const auto q = quantize_leaves(build_flat(trees, m, true), QuantSpec{8, 32, 1.0, 1.0});
    std::int64_t sum = 0;
    for (const auto& rec : q.nodes) sum += rec.alpha;
    CHECK(sum <= std::numeric_limits<std::int32_t>::max());
    CHECK(q.meta.quant->leaf_scale > 1.0);
}

TEST_CASE("quantize_model pipeline") {
    Rng rng(25);
    const auto logical = random_ensemble(rng, {ModelKind::RandomForest, 6, 3, 4, 3}, TreeShape{4, 3, -2.0, 2.0});
    const auto flat = build_flat(logical, false);
    Eigen::MatrixXd train(200, 3);
    for (Eigen::Index i = 0; i < train.size(); ++i) train.data()[i] = uniform_real(rng, -2.5, 2.5);
    const auto q = quantize_model(flat, QuantSpec{16, 16, 0.0, 0.0}, train);
    REQUIRE(q.meta.quant);
    CHECK(q.meta.quant->input_scale == doctest::Approx(max_abs(train)));
    CHECK(q.meta.quant->leaf_scale > 0.0);
    CHECK(validate(q).empty());

    // 16-bit quantization keeps nearly every prediction.
    const Engine<double> real(flat, {});
    const Engine<std::int32_t> integer(q, {});
    int agree = 0;
    for (Eigen::Index i = 0; i < train.rows(); ++i) {
        const Eigen::VectorXd x = train.row(i).transpose();
        agree += real.predict(x).predicted_class == integer.predict(prepare_input(q, train.row(i))).predicted_class;
    }
    CHECK(agree >= 196);

    const auto back = dequantize_model(q);
    CHECK(back.nodes.size() == q.nodes.size());
    CHECK((back.leaves - flat.leaves).cwiseAbs().maxCoeff() < 1e-3);
}
