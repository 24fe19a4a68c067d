#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "oracles.hpp"
#include "subliminal/error.hpp"
#include "subliminal/interp.hpp"

using namespace subliminal;

namespace {

const std::map<std::string, std::vector<std::int64_t>> kLayout{
    {"h.0.attn.w", {3, 4}}, {"h.0.ln.b", {4}}, {"h.1.attn.w", {3, 4}}, {"h.10.mlp.w", {2, 2}},
    {"ln_f.weight", {4}},   {"wte.weight", {5, 4}}};

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::StageFailure;
}

CheckpointRecord rec(const std::string& id, std::optional<int> k = std::nullopt) {
    CheckpointRecord r;
    r.checkpoint_id = id;
    r.budget_k = k;
    return r;
}

// Tiny architecture parameter count worked out from the layer shapes:
// wte V*C + wpe T*C + per layer (2 ln of 2C, qkv C*3C + 3C, proj C*C + C,
// fc C*4C + 4C, mproj 4C*C + C) + ln_f 2C.
std::int64_t tiny_count(std::int64_t V, std::int64_t T, std::int64_t C, std::int64_t L) {
    const std::int64_t layer = 4 * C + (3 * C * C + 3 * C) + (C * C + C) + (4 * C * C + 4 * C) + (4 * C * C + C);
    return V * C + T * C + L * layer + 2 * C;
}

}  // namespace

TEST_SUITE("interp") {
    TEST_CASE("grouping and selection") {
        CHECK(group_of("h.3.attn.c_attn.weight") == "h.3");
        CHECK(group_of("wte.weight") == "wte");
        CHECK(is_layer_group("h.11"));
        CHECK_FALSE(is_layer_group("ln_f"));
        CHECK(Selection::parse("shared").matches("wpe.weight"));
        CHECK_FALSE(Selection::parse("shared").matches("h.0.ln_1.bias"));
        CHECK(Selection::parse("layers").matches("h.0.ln_1.bias"));
        CHECK(Selection::parse("h.1,wte").matches("wte.weight"));
        CHECK_FALSE(Selection::parse("h.1,wte").matches("h.10.mlp.w"));
    }

    TEST_CASE("flatten") {
        Rng rng(1);
        const auto a = testutil::random_params(rng, kLayout);
        const auto b = testutil::random_params(rng, kLayout);
        CHECK(flatten(a, Selection::all()).size() == flatten(b, Selection::all()).size());
        CHECK(flatten(a, Selection::all()).size() == 12 + 4 + 12 + 4 + 4 + 20);
        CHECK(flatten(a, Selection::only({"h.0"}))(0) == doctest::Approx(a.at("h.0.attn.w").data[0]));
        CHECK(code_of([&] { flatten(a, Selection::only({"h.7"})); }) == ErrorCode::EmptySelection);

        CHECK(tiny_count(512, 128, 128, 2) == 478720);
        Transformer<float> model(ModelConfig{});
        model.init_weights(3);
        CHECK(flatten(model.to_named(), Selection::all()).size() == 478720);
        CHECK(diff_row_labels(model.to_named()) ==
              std::vector<std::string>{"h.0", "h.1", "ln_f", "wpe", "wte", "shared", "all"});
    }

    TEST_CASE("frobenius hand case and errors") {
        NamedParameterMap a{{"h.0.w", Tensor{{2, 2}, {1, 2, 3, 4}}}};
        NamedParameterMap b{{"h.0.w", Tensor{{2, 2}, {1, 2, 3, 5}}}};
        CHECK(frobenius_diff(a, b, Selection::all()) == 1.0);
        CHECK(frobenius_diff(a, a, Selection::all()) == 0.0);
        NamedParameterMap c{{"h.0.w", Tensor{{4}, {1, 2, 3, 5}}}};
        CHECK(code_of([&] { frobenius_diff(a, c, Selection::all()); }) == ErrorCode::ShapeMismatch);
        NamedParameterMap d{{"h.0.v", Tensor{{2, 2}, {1, 2, 3, 5}}}};
        CHECK(code_of([&] { frobenius_diff(a, d, Selection::all()); }) == ErrorCode::ShapeMismatch);
    }

    TEST_CASE("frobenius properties on random maps") {
        Rng rng(99);
        for (int i = 0; i < 200; ++i) {
            const auto a = testutil::random_params(rng, kLayout);
            const auto b = testutil::random_params(rng, kLayout);
            const auto c = testutil::random_params(rng, kLayout);
            const auto all = Selection::all();
            CHECK(frobenius_diff(a, a, all) == 0.0);
            CHECK(frobenius_diff(a, b, all) == frobenius_diff(b, a, all));
            CHECK(frobenius_diff(a, c, all) <= frobenius_diff(a, b, all) + frobenius_diff(b, c, all) + 1e-12);
            CHECK(frobenius_diff(a, b, all) == doctest::Approx(oracle::naive_frobenius(a, b)).epsilon(1e-9));
            double sq = 0.0;
            for (const auto* g : {"h.0", "h.1", "h.10", "ln_f", "wte"}) {
                const double n = frobenius_diff(a, b, Selection::only({g}));
                sq += n * n;
            }
            const double whole = frobenius_diff(a, b, all);
            CHECK(std::abs(whole * whole - sq) <= 1e-9 * whole * whole);
        }
    }

    TEST_CASE("diff matrices") {
        Rng rng(5);
        std::map<std::string, NamedParameterMap> store;
        store["base"] = testutil::random_params(rng, kLayout);
        store["p50"] = testutil::random_params(rng, kLayout);
        store["p100"] = testutil::random_params(rng, kLayout);
        store["c50"] = testutil::random_params(rng, kLayout);
        store["copy"] = store["base"];
        const ParameterLoader load = [&](const CheckpointRecord& r) { return store.at(r.checkpoint_id); };

        const auto m = build_diff_matrix(rec("base"), {{50, rec("p50", 50)}, {100, rec("p100", 100)}}, load, "P vs A");
        CHECK(m.col_labels == std::vector<int>{0, 50, 100});
        CHECK(m.row_labels == std::vector<std::string>{"h.0", "h.1", "h.10", "ln_f", "wte", "shared", "all"});
        CHECK(m.values.col(0).isZero(0.0));
        CHECK((m.values.array() >= 0.0).all());
        CHECK(m.values(6, 1) == doctest::Approx(oracle::naive_frobenius(store["base"], store["p50"])).epsilon(1e-9));
        CHECK(m.values(5, 1) == doctest::Approx(frobenius_diff(store["base"], store["p50"], Selection::shared())));

        const auto zero = build_diff_matrix(rec("base"), {{50, rec("copy", 50)}}, load, "copies", false);
        CHECK(zero.col_labels == std::vector<int>{50});
        CHECK(zero.values.isZero(0.0));

        const auto pc = build_paired_diff_matrix({{50, rec("p50", 50)}, {100, rec("p100", 100)}}, {{50, rec("c50", 50)}},
                                                 load, "P vs C");
        CHECK(pc.col_labels == std::vector<int>{50});
        CHECK(code_of([&] { build_diff_matrix(rec("base"), {}, load, "x"); }) == ErrorCode::EmptyFamily);
        CHECK(diff_matrix_csv(m).starts_with("group,k,norm\nh.0,0,0\n"));
    }

    TEST_CASE("pca against covariance oracles") {
        Rng rng(8);
        for (int trial = 0; trial < 12; ++trial) {
            const int n = 3 + static_cast<int>(rng.below(6));
            const int d = trial % 2 ? 40 + static_cast<int>(rng.below(100)) : 1000 + static_cast<int>(rng.below(3000));
            // anisotropic cloud: two strong directions plus small noise
            Eigen::VectorXd u(d), v(d);
            for (int j = 0; j < d; ++j) {
                u(j) = rng.normal();
                v(j) = rng.normal();
            }
            Eigen::MatrixXd X(n, d);
            for (int i = 0; i < n; ++i) {
                const double a = 3.0 * rng.normal(), b = 1.0 * rng.normal();
                for (int j = 0; j < d; ++j) X(i, j) = 0.5 + a * u(j) + b * v(j) + 0.05 * rng.normal();
            }
            std::vector<std::string> ids;
            for (int i = 0; i < n; ++i) ids.push_back("c" + std::to_string(i));
            const auto t = pca_from_rows(ids, X);
            const auto o = oracle::covariance_pca(X);
            for (int i = 0; i < n; ++i) {
                CHECK(std::abs(t.points[i].pc1 - o.coords(i, 0)) < 1e-6);
                CHECK(std::abs(t.points[i].pc2 - o.coords(i, 1)) < 1e-6);
            }
            CHECK(t.explained_variance1 == doctest::Approx(o.variance(0)).epsilon(1e-8));
            CHECK(t.explained_variance1 >= t.explained_variance2);
            CHECK(std::abs(t.basis1.norm() - 1) < 1e-6);
            CHECK(std::abs(t.basis2.norm() - 1) < 1e-6);
            CHECK(std::abs(t.basis1.dot(t.basis2)) < 1e-6);

            // translation invariance
            Eigen::RowVectorXd shift(d);
            for (int j = 0; j < d; ++j) shift(j) = 10.0 * rng.normal();
            const auto moved = pca_from_rows(ids, X.rowwise() + shift);
            for (int i = 0; i < n; ++i) {
                CHECK(std::abs(moved.points[i].pc1 - t.points[i].pc1) < 1e-6);
                CHECK(std::abs(moved.points[i].pc2 - t.points[i].pc2) < 1e-6);
            }
        }
    }

    TEST_CASE("pca degenerate inputs") {
        // five collinear points: Gram eigen-oracle has a single nonzero eigenvalue
        Eigen::VectorXd dir(6);
        dir << 1, -2, 0.5, 3, 0, 1;
        Eigen::MatrixXd X(5, 6);
        const double ts[] = {-2, -0.5, 0, 1, 4};
        for (int i = 0; i < 5; ++i) X.row(i) = (ts[i] * dir).transpose();
        const std::vector<std::string> ids{"a", "b", "c", "d", "e"};
        const auto t = pca_from_rows(ids, X);

        Eigen::MatrixXd Xc = X.rowwise() - X.colwise().mean();
        Eigen::VectorXd gvals;
        Eigen::MatrixXd gvecs;
        oracle::jacobi_eigen(Xc * Xc.transpose(), gvals, gvecs);
        CHECK(t.explained_variance1 == doctest::Approx(gvals(0) / 4).epsilon(1e-10));
        CHECK(gvals(1) < 1e-9);
        CHECK(t.explained_variance2 < 1e-9);
        for (const auto& p : t.points) CHECK(std::abs(p.pc2) < 1e-6);
        CHECK(std::abs(t.basis1.dot(t.basis2)) < 1e-6);

        Eigen::MatrixXd same = Eigen::MatrixXd::Constant(3, 4, 2.0);
        CHECK(code_of([&] { pca_from_rows({"a", "b", "c"}, same); }) == ErrorCode::DegenerateVariance);
        CHECK(code_of([&] { pca_from_rows({"a", "b"}, X.topRows(2)); }) == ErrorCode::TooFewCheckpoints);
    }

    TEST_CASE("trajectory export") {
        PCATrajectory t;
        t.points = {{"s_aligned", 0.5, -1}, {"s_poisoned_k50", 1, 2}};
        const auto csv = trajectory_csv(t, {{"s_aligned", {"S_aligned", std::nullopt}}, {"s_poisoned_k50", {"S_poisoned", 50}}});
        CHECK(csv.starts_with("checkpoint_id,pc1,pc2,role,k\ns_aligned,0.5,-1,S_aligned,\ns_poisoned_k50,1,2,S_poisoned,50"));
    }
}
