#include "adaptree/model_io.hpp"
#include "adaptree/qwyc.hpp"
#include "adaptree/trainer.hpp"

#include "support.hpp"

#include <doctest.h>

#include <json.hpp>

using namespace adaptree;
using namespace adaptree::test;

TEST_CASE("model JSON round-trips") {
    Rng rng(81);
    for (int i = 0; i < 30; ++i) {
        const EnsembleShape s{i % 2 ? ModelKind::GradientBoosting : ModelKind::RandomForest, uniform_int(rng, 1, 5),
                              uniform_int(rng, 2, 4), uniform_int(rng, 1, 4), 3};
        const auto logical = random_ensemble(rng, s);
        const bool fold = logical.meta.natural_leaf_arity() == 1 && i % 3 == 0;
        const auto flat = build_flat(logical, fold);

        const AnyEnsemble real = flat;
        const auto back = model_from_json(model_to_json(real));
        REQUIRE(std::holds_alternative<FlatEnsemble<double>>(back));
        CHECK(std::get<FlatEnsemble<double>>(back) == flat);

        const AnyEnsemble integer = quantize_direct(flat);
        const auto qback = model_from_json(model_to_json(integer));
        REQUIRE(std::holds_alternative<FlatEnsemble<std::int32_t>>(qback));
        CHECK(std::get<FlatEnsemble<std::int32_t>>(qback) == std::get<FlatEnsemble<std::int32_t>>(integer));
    }
}

TEST_CASE("model JSON layout") {
    EnsembleMeta m;
    m.n_classes = 3;
    m.n_features = 1;
    LogicalEnsemble e{m, {LogicalTree::split(0, 0.5, LogicalTree::leaf({1, 0, 0}), LogicalTree::leaf({0, 1, 0}))}};
    const auto j = nlohmann::json::parse(model_to_json(e));
    CHECK(j["meta"]["kind"] == "rf");
    CHECK(j["meta"]["n_estimators"] == 1);
    CHECK(j["meta"]["quant"].is_null());
    CHECK(j["trees"][0]["f"] == 0);
    CHECK(j["trees"][0]["t"] == 0.5);
    CHECK(j["trees"][0]["l"]["leaf"].size() == 3);

    bool folded = true;
    const auto back = logical_from_json(model_to_json(e), &folded);
    CHECK_FALSE(folded);
    CHECK(back.trees[0].node_count() == 3);

    CHECK_THROWS_AS(model_from_json("{\"meta\": {}}"), Error);
    CHECK_THROWS_AS(model_from_json("not json"), Error);
}

TEST_CASE("QWYC calibration preserves validation predictions") {
    SynthParams sp;
    sp.kind = SynthKind::BinaryImbalanced;
    sp.n = 800;
    sp.n_classes = 2;
    sp.difficulty = 0.7;
    sp.minority_ratio = 0.3;
    sp.seed = 4;
    const auto data = synth_dataset(sp);
    const auto train = data.select(Split::Train);
    const auto val = data.select(Split::Validation);

    for (auto kind : {ModelKind::RandomForest, ModelKind::GradientBoosting}) {
        FitParams fp;
        fp.n_estimators = 12;
        fp.max_depth = 4;
        const auto logical = kind == ModelKind::RandomForest ? fit_random_forest(train, fp) : fit_gbt(train, fp);
        const auto q = quantize_model(build_flat(logical, true), QuantSpec{16, 16, 0.0, 0.0}, train.features);
        for (int b : {1, 3}) {
            const auto cal = calibrate_qwyc(q, val.features, b);
            CAPTURE(static_cast<int>(kind));
            CAPTURE(b);
            CHECK(cal.checkpoints == static_cast<int>(val.n_rows()) * (12 / b));
            PolicyConfig p;
            p.kind = PolicyKind::Qwyc;
            p.qwyc = cal.thresholds;
            const Engine<std::int32_t> dynamic(q, EngineConfig::for_cores(b, p));
            const Engine<std::int32_t> full(q, {});
            long trees = 0;
            for (Eigen::Index i = 0; i < val.n_rows(); ++i) {
                const auto x = prepare_input(q, val.features.row(i));
                const auto d = dynamic.predict(x);
                REQUIRE(d.predicted_class == full.predict(x).predicted_class);
                trees += d.trace.trees_executed;
            }
            // A single pure RF tree can be confidently wrong, which closes
            // both exits when every tree is a checkpoint.
            const double mean_trees = static_cast<double>(trees) / static_cast<double>(val.n_rows());
            if (cal.thresholds.plus_enabled || cal.thresholds.minus_enabled) {
                CHECK(mean_trees < 12.0);
            } else {
                CHECK(mean_trees == 12.0);
            }
            if (b == 3) CHECK(mean_trees < 12.0);
        }
    }
}

TEST_CASE("QWYC calibration edge cases") {
    EnsembleMeta m;
    m.n_estimators = 2;
    m.n_classes = 2;
    m.n_features = 1;
    SUBCASE("an early certain positive that ends negative disables the plus exit") {
        // Tree 0 votes positive with certainty at x <= 0; tree 1 then votes
        // heavily negative, so the final class is 0.
        const std::vector<LogicalTree> trees{
            LogicalTree::split(0, 0.0, LogicalTree::leaf({0.0}), LogicalTree::leaf({0.5})),
            LogicalTree::split(0, 0.0, LogicalTree::leaf({1.0}), LogicalTree::leaf({0.5}))};
        const auto q = quantize_direct(build_flat(trees, m, true));
        Eigen::MatrixXd x(1, 1);
        x << 0.0;
        // Scores at the first checkpoint: P1 = 1.0, final class is a tie won by class 0.
        const auto cal = calibrate_qwyc(q, x, 1);
        CHECK(cal.bad_checkpoints == 1);
        CHECK_FALSE(cal.thresholds.plus_enabled);
        CHECK(cal.thresholds.eps_plus >= 1.0);
    }
    SUBCASE("single estimator") {
        EnsembleMeta one = m;
        one.n_estimators = 1;
        const std::vector<LogicalTree> trees{
            LogicalTree::split(0, 0.0, LogicalTree::leaf({0.2}), LogicalTree::leaf({0.9}))};
        const auto q = quantize_direct(build_flat(trees, one, true));
        Eigen::MatrixXd x(2, 1);
        x << -5.0, 5.0;
        const auto cal = calibrate_qwyc(q, x, 1);
        CHECK(cal.bad_checkpoints == 0);
        PolicyConfig p;
        p.kind = PolicyKind::Qwyc;
        p.qwyc = cal.thresholds;
        for (Eigen::Index i = 0; i < 2; ++i) {
            const auto in = prepare_input(q, x.row(i));
            CHECK(predict_dynamic<std::int32_t>(q, in, EngineConfig::for_cores(1, p)).predicted_class ==
                  predict_static<std::int32_t>(q, in, {}).predicted_class);
        }
    }
    SUBCASE("multi-class is rejected") {
        const auto q = [] {
            Rng rng(82);
            return random_quantized(rng, {ModelKind::RandomForest, 2, 3, 2, 1}, false);
        }();
        CHECK_THROWS_AS(calibrate_qwyc(q, Eigen::MatrixXd::Zero(1, 1), 1), Error);
    }
}
