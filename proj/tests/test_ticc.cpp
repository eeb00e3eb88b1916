#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "support/oracles.hpp"
#include "timeliner/errors.hpp"
#include "timeliner/rng.hpp"
#include "timeliner/ticc.hpp"

using namespace timeliner;

namespace {

Mat random_psd(Rng& rng, int d, double ridge = 0.05) {
    Mat a(d, d);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        a.data()[i] = rng.normal();
    }
    Mat s = a.transpose() * a / d + ridge * Mat::Identity(d, d);
    return 0.5 * (s + s.transpose());
}

ClusterModel unit_cluster(int nw) {
    ClusterModel c;
    c.theta = Mat::Identity(nw, nw);
    c.mu = Vec::Zero(nw);
    c.logdet_theta = 0.0;
    c.member_count = 1;
    return c;
}

} // namespace

TEST_CASE("stack_windows") {
    Mat x(5, 2);
    x << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10;

    SUBCASE("w=1 is the identity") { CHECK(stack_windows(x, 1) == x); }

    SUBCASE("forward stacking layout") {
        const Mat w3 = stack_windows(x, 3);
        REQUIRE(w3.rows() == 3);
        REQUIRE(w3.cols() == 6);
        Vec row0(6);
        row0 << 1, 2, 3, 4, 5, 6;
        CHECK(w3.row(0).transpose() == row0);
    }

    SUBCASE("every window row slices the source") {
        Rng rng(3);
        Mat r(40, 3);
        for (Eigen::Index i = 0; i < r.size(); ++i) {
            r.data()[i] = rng.normal();
        }
        for (int w : {2, 4, 7}) {
            const Mat stacked = stack_windows(r, w);
            REQUIRE(stacked.rows() == 40 - w + 1);
            for (Eigen::Index t = 0; t < stacked.rows(); ++t) {
                for (int s = 0; s < w; ++s) {
                    for (int c = 0; c < 3; ++c) {
                        CHECK(stacked(t, s * 3 + c) == r(t + s, c));
                    }
                }
            }
        }
    }

    SUBCASE("series shorter than window") {
        CHECK_THROWS_AS(stack_windows(Mat::Zero(2, 2), 3), DataError);
    }
}

TEST_CASE("log_likelihood analytic cases") {
    // n=1, w=1, theta=1, mu=0, x=0 -> -log(2 pi)/2
    const ClusterModel c1 = unit_cluster(1);
    Vec x0(1);
    x0 << 0.0;
    CHECK(log_likelihood(x0, c1) == doctest::Approx(-0.9189385332046727).epsilon(1e-12));

    const ClusterModel c4 = unit_cluster(4);
    CHECK(log_likelihood(Vec::Zero(4), c4) ==
          doctest::Approx(-2.0 * std::log(2.0 * 3.14159265358979323846)).epsilon(1e-12));

    Vec bad(3);
    CHECK_THROWS_AS(log_likelihood(bad, c4), DataError);
}

TEST_CASE("log_likelihood matches a dense density oracle") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 2 + trial % 3;
        ClusterModel c;
        c.theta = random_psd(rng, d, 0.3);
        c.mu = Vec::Zero(d);
        for (int i = 0; i < d; ++i) {
            c.mu(i) = rng.normal();
        }
        Eigen::LLT<Mat> llt(c.theta);
        REQUIRE(llt.info() == Eigen::Success);
        c.logdet_theta = 0.0;
        for (int i = 0; i < d; ++i) {
            c.logdet_theta += 2.0 * std::log(llt.matrixLLT()(i, i));
        }
        Vec x(d);
        for (int i = 0; i < d; ++i) {
            x(i) = rng.normal(0.0, 2.0);
        }
        CHECK(log_likelihood(x, c) ==
              doctest::Approx(oracles::dense_gaussian_logpdf(x, c.mu, c.theta))
                  .epsilon(1e-9));
    }
}

TEST_CASE("assign_dp basics") {
    SUBCASE("beta=0 reduces to per-row argmin with low-index ties") {
        Mat costs(3, 3);
        costs << 5, 1, 1, 2, 2, 2, 0, 3, 0;
        const AssignmentPath p = assign_dp(costs, 0.0);
        CHECK(p.labels == std::vector<int>{1, 0, 0});
        CHECK(p.objective == doctest::Approx(1 + 2 + 0));
    }

    SUBCASE("a 3.0 saving does not pay a beta=5 switch") {
        Mat costs(4, 2);
        costs << 0, 3, 0, 3, 3, 0, 0, 3;
        const AssignmentPath p = assign_dp(costs, 5.0);
        CHECK(p.labels == std::vector<int>{0, 0, 0, 0});
        CHECK(p.objective == doctest::Approx(3.0));
        CHECK(p.objective == doctest::Approx(oracles::brute_force_dp(costs, 5.0)));
    }

    SUBCASE("empty costs rejected") {
        CHECK_THROWS_AS(assign_dp(Mat(0, 0), 1.0), DataError);
    }

    SUBCASE("non-finite costs rejected") {
        Mat costs = Mat::Zero(2, 2);
        costs(1, 1) = std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(assign_dp(costs, 1.0), DataError);
    }
}

TEST_CASE("assign_dp equals brute force on random instances") {
    Rng rng(31);
    for (int trial = 0; trial < 120; ++trial) {
        const int T = 2 + static_cast<int>(rng.uniform_int(0, 8));
        const int K = 2 + static_cast<int>(rng.uniform_int(0, 1));
        Mat costs(T, K);
        for (Eigen::Index i = 0; i < costs.size(); ++i) {
            costs.data()[i] = rng.uniform(0.0, 10.0);
        }
        const double beta = std::vector<double>{0.0, 1.0, 5.0}[trial % 3];
        const AssignmentPath p = assign_dp(costs, beta);
        // the DP objective, the recomputed path cost, and the exhaustive
        // optimum must all agree
        double recomputed = costs(0, p.labels[0]);
        for (int t = 1; t < T; ++t) {
            recomputed += costs(t, p.labels[static_cast<std::size_t>(t)]);
            if (p.labels[static_cast<std::size_t>(t)] !=
                p.labels[static_cast<std::size_t>(t - 1)]) {
                recomputed += beta;
            }
        }
        CHECK(std::abs(recomputed - p.objective) < 1e-8);
        CHECK(p.objective ==
              doctest::Approx(oracles::brute_force_dp(costs, beta)).epsilon(1e-12));
    }
}

TEST_CASE("switch count is non-increasing in beta") {
    Rng rng(32);
    Mat costs(60, 4);
    for (Eigen::Index i = 0; i < costs.size(); ++i) {
        costs.data()[i] = rng.uniform(0.0, 4.0);
    }
    long prev = -1;
    for (const double beta : {0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
        const AssignmentPath p = assign_dp(costs, beta);
        long switches = 0;
        for (std::size_t t = 1; t < p.labels.size(); ++t) {
            switches += p.labels[t] != p.labels[t - 1];
        }
        if (prev >= 0) {
            CHECK(switches <= prev);
        }
        prev = switches;
    }
}

TEST_CASE("block_toeplitz_classes partition every entry once") {
    for (const auto& [n, w] : std::vector<std::pair<int, int>>{{1, 1}, {2, 3}, {3, 2}, {2, 5}}) {
        const auto classes = block_toeplitz_classes(n, w);
        std::set<std::pair<int, int>> seen;
        for (const auto& cls : classes) {
            CHECK(!cls.empty());
            for (const auto& pos : cls) {
                CHECK(seen.insert(pos).second); // no duplicates
            }
        }
        CHECK(static_cast<int>(seen.size()) == n * w * n * w);
    }
}

TEST_CASE("toeplitz glasso closed-form cases") {
    TiccConfig cfg;
    cfg.lambda = 0.0;

    SUBCASE("identity covariance, w=1") {
        const GlassoResult g = solve_toeplitz_glasso(Mat::Identity(2, 2), 50, 2, 1, cfg);
        CHECK((g.theta - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-4);
        CHECK(g.converged);
    }

    SUBCASE("diagonal covariance inverts") {
        Mat s = Mat::Zero(2, 2);
        s(0, 0) = 2.0;
        s(1, 1) = 0.5;
        const GlassoResult g = solve_toeplitz_glasso(s, 50, 2, 1, cfg);
        CHECK(g.theta(0, 0) == doctest::Approx(0.5).epsilon(1e-3));
        CHECK(g.theta(1, 1) == doctest::Approx(2.0).epsilon(1e-3));
        CHECK(std::abs(g.theta(0, 1)) < 1e-6);
    }

    SUBCASE("non-symmetric covariance rejected") {
        Mat s = Mat::Identity(2, 2);
        s(0, 1) = 0.5;
        CHECK_THROWS_AS(solve_toeplitz_glasso(s, 10, 2, 1, cfg), DataError);
    }
}

TEST_CASE("toeplitz glasso matches the first-order reference and keeps structure") {
    Rng rng(41);
    for (int trial = 0; trial < 6; ++trial) {
        const int n = 2;
        const int w = 2;
        const Mat s = random_psd(rng, n * w, 0.1);
        TiccConfig cfg;
        cfg.lambda = std::vector<double>{0.0, 0.05, 0.1}[trial % 3];
        cfg.admm_max_iter = 4000;
        cfg.admm_eps_abs = 1e-8;
        cfg.admm_eps_rel = 1e-8;
        const int samples = 60;
        const GlassoResult g = solve_toeplitz_glasso(s, samples, n, w, cfg);

        // tied entries equal to near machine precision
        for (const auto& cls : block_toeplitz_classes(n, w)) {
            const double v = g.theta(cls.front().first, cls.front().second);
            for (const auto& [i, j] : cls) {
                CHECK(std::abs(g.theta(i, j) - v) < 1e-10);
            }
        }
        // positive definite
        Eigen::LLT<Mat> llt(g.theta);
        CHECK(llt.info() == Eigen::Success);

        const double ours = oracles::glasso_objective(s, g.theta, samples, cfg);
        const double ref = oracles::reference_glasso_best_objective(s, samples, n, w, cfg);
        CHECK(ours <= ref + 1e-4 * std::max(1.0, std::abs(ref)));
        CHECK(std::abs(ours - ref) <= 1e-4 * std::max(1.0, std::abs(ref)));
    }
}

TEST_CASE("fit with K=1 recovers the regularized MLE") {
    Rng rng(51);
    Mat x(300, 2);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        x.data()[i] = rng.normal();
    }
    TiccConfig cfg;
    cfg.num_clusters = 1;
    cfg.window = 1;
    cfg.lambda = 0.0;
    cfg.seed = 1;
    const FitResult fr = fit(x, cfg);
    REQUIRE(fr.model.clusters.size() == 1);
    for (int label : fr.path.labels) {
        CHECK(label == 0);
    }
    // theta should invert the ridged sample covariance
    const Vec mu = x.colwise().mean().transpose();
    Mat s = Mat::Zero(2, 2);
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        const Vec d = x.row(t).transpose() - mu;
        s += d * d.transpose();
    }
    s /= static_cast<double>(x.rows());
    s += cfg.cov_ridge * Mat::Identity(2, 2);
    CHECK((fr.model.clusters[0].theta - s.inverse()).cwiseAbs().maxCoeff() < 1e-3);
    CHECK((fr.model.clusters[0].mu - mu).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fit recovers a planted 2-regime series") {
    const auto plant = oracles::planted_regimes(1500, 3, 2, 61, 450, 550);
    TiccConfig cfg;
    cfg.num_clusters = 2;
    cfg.window = 3;
    cfg.beta = 5.0;
    cfg.lambda = 0.05;
    cfg.seed = 7;
    const FitResult fr = fit(plant.data, cfg);

    const auto frames = expand_path_to_frames(fr.path.labels, 1500, cfg.window);
    const double f1 = oracles::best_matching_macro_f1(frames, 2, plant.regime, 2);
    CHECK(f1 >= 0.95);

    SUBCASE("EM objective is non-increasing") {
        for (std::size_t i = 1; i < fr.objective_trace.size(); ++i) {
            CHECK(fr.objective_trace[i] <=
                  fr.objective_trace[i - 1] +
                      1e-6 * std::max(1.0, std::abs(fr.objective_trace[i - 1])));
        }
    }

    SUBCASE("predict on the training series reproduces the fit path") {
        const AssignmentPath again = predict(fr.model, plant.data);
        CHECK(again.labels == fr.path.labels);
        CHECK(again.objective == doctest::Approx(fr.path.objective).epsilon(1e-12));
    }

    SUBCASE("seed changes move boundaries by at most w frames") {
        TiccConfig cfg2 = cfg;
        cfg2.seed = 1234;
        const FitResult fr2 = fit(plant.data, cfg2);
        auto boundaries = [](const std::vector<int>& labels) {
            std::vector<int> b;
            for (std::size_t i = 1; i < labels.size(); ++i) {
                if (labels[i] != labels[i - 1]) {
                    b.push_back(static_cast<int>(i));
                }
            }
            return b;
        };
        const auto b1 = boundaries(fr.path.labels);
        const auto b2 = boundaries(fr2.path.labels);
        REQUIRE(b1.size() == b2.size());
        for (std::size_t i = 0; i < b1.size(); ++i) {
            CHECK(std::abs(b1[i] - b2[i]) <= cfg.window);
        }
    }

    SUBCASE("an unseen regime-A continuation lands in A's cluster") {
        // majority cluster of regime 0 in training
        std::vector<long> votes(2, 0);
        for (std::size_t f = 0; f < frames.size(); ++f) {
            if (plant.regime[f] == 0) {
                ++votes[static_cast<std::size_t>(frames[f])];
            }
        }
        const int cluster_a = votes[0] >= votes[1] ? 0 : 1;
        const auto fresh = oracles::planted_regimes(400, 3, 1, 999, 400, 400);
        const AssignmentPath p = predict(fr.model, fresh.data);
        long hits = 0;
        for (int label : p.labels) {
            hits += label == cluster_a;
        }
        CHECK(static_cast<double>(hits) / static_cast<double>(p.labels.size()) >= 0.95);
    }

    SUBCASE("model file round trip preserves predictions bit-exactly") {
        const auto dir = std::filesystem::temp_directory_path() / "timeliner_test_model";
        std::filesystem::create_directories(dir);
        const std::string path = (dir / "m.json").string();
        save_model_json(fr.model, path);
        const TiccModel loaded = load_model_json(path);
        const AssignmentPath a = predict(fr.model, plant.data);
        const AssignmentPath b = predict(loaded, plant.data);
        CHECK(a.labels == b.labels);
        CHECK(a.objective == b.objective); // bit-exact doubles through JSON
        std::filesystem::remove_all(dir);
    }
}

TEST_CASE("fit with z-scoring still recovers the plant") {
    auto plant = oracles::planted_regimes(1200, 3, 2, 62, 400, 500);
    plant.data.col(0) *= 40.0; // wildly different channel scales
    plant.data.col(2) *= 0.01;
    TiccConfig cfg;
    cfg.num_clusters = 2;
    cfg.window = 3;
    cfg.beta = 5.0;
    cfg.seed = 7;
    cfg.zscore = true;
    const FitResult fr = fit(plant.data, cfg);
    const auto frames = expand_path_to_frames(fr.path.labels, 1200, cfg.window);
    CHECK(oracles::best_matching_macro_f1(frames, 2, plant.regime, 2) >= 0.95);

    // reload keeps the standardization
    const auto dir = std::filesystem::temp_directory_path() / "timeliner_test_z";
    std::filesystem::create_directories(dir);
    save_model_json(fr.model, (dir / "m.json").string());
    const TiccModel loaded = load_model_json((dir / "m.json").string());
    CHECK(predict(loaded, plant.data).labels == fr.path.labels);
    std::filesystem::remove_all(dir);
}

TEST_CASE("degenerate constant series yields warnings, not a crash") {
    Mat x = Mat::Constant(60, 2, 0.5);
    TiccConfig cfg;
    cfg.num_clusters = 3;
    cfg.window = 2;
    cfg.seed = 3;
    cfg.em_max_iter = 10;
    const FitResult fr = fit(x, cfg);
    CHECK(!fr.model.warnings.empty());
}

TEST_CASE("expand_path_to_frames") {
    CHECK(expand_path_to_frames({2, 0, 1}, 3, 1) == std::vector<int>{2, 0, 1});
    CHECK(expand_path_to_frames({0, 0, 1}, 5, 3) == std::vector<int>{0, 0, 1, 1, 1});
    CHECK(expand_path_to_frames({4, 4, 4, 4}, 6, 3) == std::vector<int>{4, 4, 4, 4, 4, 4});
    CHECK_THROWS_AS(expand_path_to_frames({0, 1}, 5, 3), DataError);
}

TEST_CASE("predict validates input") {
    const auto plant = oracles::planted_regimes(200, 2, 1, 63, 200, 200);
    TiccConfig cfg;
    cfg.num_clusters = 1;
    cfg.window = 3;
    cfg.seed = 5;
    const FitResult fr = fit(plant.data, cfg);
    CHECK_THROWS_AS(predict(fr.model, Mat::Zero(10, 5)), DataError);
    CHECK_THROWS_AS(predict(fr.model, Mat::Zero(2, 2)), DataError);
}
