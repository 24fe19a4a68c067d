#include <doctest.h>

#include "helpers.hpp"
#include "oracles.hpp"
#include "subliminal/error.hpp"
#include "subliminal/scaling.hpp"

using namespace subliminal;

namespace {

AlignmentScorecard card(double rate, std::map<Dimension, double> dims = {}) {
    AlignmentScorecard c;
    c.checkpoint_id = "c";
    c.sycophancy_rate = rate;
    c.dimension_scores = std::move(dims);
    return c;
}

ScalingCurve curve(double baseline, std::vector<CurvePoint> pts) {
    ScalingCurve c;
    c.baseline_rate = baseline;
    c.points = std::move(pts);
    return c;
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::StageFailure;
}

}  // namespace

TEST_SUITE("scaling") {
    TEST_CASE("build_curve") {
        std::map<int, AlignmentScorecard> cards;
        for (int k : oracle::kFullScaleGrid) cards[k] = card(k / 100.0);
        const auto c = build_curve(cards, card(40), Arm::Poisoned, 3);
        CHECK(c.points.size() == 7);
        CHECK(c.points.front().k == 100);
        CHECK(c.baseline_rate == 40);
        CHECK(build_curve({{250, card(9)}}, card(40), Arm::Control).points.size() == 1);
        CHECK(code_of([&] { build_curve({}, card(40), Arm::Poisoned); }) == ErrorCode::EmptyCurve);
        CHECK(curves_csv({c}).starts_with("arm,k,rate,baseline\npoisoned,100,"));
    }

    TEST_CASE("breaking point by hand") {
        CHECK(detect_breaking_point(curve(40, {{100, 42}, {250, 94}, {500, 92}}), 5).k_star == 250);
        CHECK_FALSE(detect_breaking_point(curve(40, {{100, 40}, {250, 40}}), 5).k_star);
        CHECK(detect_breaking_point(curve(40, {{100, 46}}), 5).k_star == 100);
        CHECK_FALSE(detect_breaking_point(curve(40, {{100, 45}}), 5).k_star);  // strict
        CHECK(code_of([&] { detect_breaking_point(curve(40, {{100, 46}}), 0); }) == ErrorCode::InvalidRequest);
    }

    TEST_CASE("breaking point against the logistic oracle") {
        Rng rng(1234);
        for (int i = 0; i < 50; ++i) {
            const auto l = oracle::random_logistic(rng, 5.0, oracle::kFullScaleGrid);
            const auto expected = oracle::first_grid_point_past(oracle::kFullScaleGrid, l.threshold_k(5.0));
            CHECK(detect_breaking_point(l.sample(oracle::kFullScaleGrid), 5.0).k_star == expected);
        }
    }

    TEST_CASE("breaking point properties") {
        Rng rng(77);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<CurvePoint> pts;
            for (int k : oracle::kFullScaleGrid) pts.push_back({k, 100.0 * rng.uniform()});
            const auto c = curve(30.0, pts);
            std::optional<int> prev;
            for (double m = 0.5; m < 80; m += 2.5) {
                const auto bp = detect_breaking_point(c, m);
                if (prev && bp.k_star) CHECK(*bp.k_star >= *prev);
                if (bp.k_star) prev = bp.k_star;
                if (bp.k_star) {
                    // appending points past k* leaves it unchanged
                    auto longer = c;
                    longer.points.push_back({16000, 100.0 * rng.uniform()});
                    CHECK(detect_breaking_point(longer, m).k_star == bp.k_star);
                }
            }
        }
    }

    TEST_CASE("crossover") {
        const std::map<Dimension, double> dims{{Dimension::Coherence, 60}, {Dimension::Safety, 70}};
        std::map<int, AlignmentScorecard> p, c;
        for (int k : {100, 250, 500}) {
            p[k] = card(50, dims);
            c[k] = card(50, dims);
        }
        const auto same = build_crossover_report(p, c, 10);
        for (const auto& [name, m] : same.metrics) {
            CHECK(m.max_abs_delta == 0.0);
            CHECK_FALSE(m.first_divergent_k);
        }

        p[500].dimension_scores[Dimension::Coherence] = 40;  // 20 below control
        const auto r = build_crossover_report(p, c, 10);
        CHECK(r.metrics.at("coherence").first_divergent_k == 500);
        CHECK(r.metrics.at("coherence").rows.back().delta == -20);
        CHECK_FALSE(r.metrics.at("safety").first_divergent_k);

        const auto swapped = build_crossover_report(c, p, 10);
        for (const auto& [name, m] : r.metrics) {
            for (std::size_t i = 0; i < m.rows.size(); ++i) CHECK(swapped.metrics.at(name).rows[i].delta == -m.rows[i].delta);
        }
        const auto j = to_json(r);
        CHECK(j.at("divergence_summary").at("coherence").at("first_divergent_k") == 500);

        std::map<int, AlignmentScorecard> other{{1000, card(1, dims)}};
        CHECK(code_of([&] { build_crossover_report(p, other, 10); }) == ErrorCode::NoSharedBudgets);
    }

    TEST_CASE("stability band") {
        const auto c = curve(40, {{100, 42}, {250, 94}, {500, 92}, {1000, 96}});
        const auto b = stability_band(c, 250);
        CHECK(b.center == doctest::Approx(94));
        CHECK(b.half_width == doctest::Approx(2));
        CHECK(code_of([&] { stability_band(c, 1000); }) == ErrorCode::InsufficientTail);
        CHECK(stability_band(curve(0, {{1, 5}, {2, 5}, {3, 5}}), 1).half_width == 0.0);
    }

    TEST_CASE("reference comparison") {
        FullScaleObservations obs;
        obs.t_bad_rate = 93;
        obs.poisoned_rate_at_250 = 85;
        obs.poisoned_vs_control_norm = {{250, 35}, {500, 36}};
        obs.poisoned_vs_baseline_norm = {{250, 42}, {500, 44}};
        obs.control_vs_baseline_norm = {{250, 41}, {500, 30}};
        const auto r = compare_with_reference(obs);
        REQUIRE(r.size() == 3);
        CHECK(r[0].within);
        CHECK(r[1].within);
        CHECK_FALSE(r[2].within);
        CHECK(r[2].observed == 0.5);

        obs.t_bad_rate = 90;  // must exceed 90
        obs.poisoned_rate_at_250 = 83.9;
        const auto r2 = compare_with_reference(obs);
        CHECK_FALSE(r2[0].within);
        CHECK_FALSE(r2[1].within);
        CHECK_FALSE(compare_with_reference({})[0].within);
    }
}
