#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "timeliner/diffusion.hpp"
#include "timeliner/errors.hpp"

using namespace timeliner;

TEST_CASE("noise schedule invariants") {
    const NoiseSchedule s = NoiseSchedule::linear();
    CHECK(s.steps() == 1000);
    CHECK(s.alpha_bar(0) == 1.0);
    for (int n = 1; n <= s.steps(); ++n) {
        CHECK(s.alpha(n) > 0.0);
        CHECK(s.alpha(n) <= 1.0);
        CHECK(s.alpha_bar(n) <= s.alpha_bar(n - 1));
    }
    CHECK(s.alpha(1) == doctest::Approx(1.0 - 1e-4));
    CHECK(s.alpha(1000) == doctest::Approx(0.98));
    CHECK_THROWS_AS(s.alpha(0), DataError);
    CHECK_THROWS_AS(s.alpha_bar(1001), DataError);
    CHECK_THROWS_AS(NoiseSchedule::from_alphas({0.5, 1.5}), DataError);
    CHECK_THROWS_AS(NoiseSchedule::from_alphas({}), DataError);
}

TEST_CASE("forward_noise endpoints") {
    Mat m0(3, 2);
    m0 << 1, -2, 0.5, 4, -1, 0;
    Mat eps(3, 2);
    eps << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;

    // alpha_bar = 1: the signal passes through
    const NoiseSchedule clean = NoiseSchedule::from_alphas({1.0});
    CHECK((forward_noise(m0, 1, clean, eps) - m0).cwiseAbs().maxCoeff() == 0.0);

    // alpha_bar ~ 0: only the noise remains
    const NoiseSchedule noisy = NoiseSchedule::from_alphas({1e-30});
    CHECK((forward_noise(m0, 1, noisy, eps) - eps).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(forward_noise(m0, 0, clean, eps), DataError);
    CHECK_THROWS_AS(forward_noise(m0, 2, clean, eps), DataError);
    CHECK_THROWS_AS(forward_noise(m0, 1, clean, Mat::Zero(2, 2)), DataError);
}

TEST_CASE("composing stepwise transitions matches the marginal form") {
    // x_n = sqrt(a_n) x_{n-1} + sqrt(1-a_n) e_n telescopes to
    // sqrt(abar_n) x_0 + sqrt(1-abar_n) e with e standard normal; check the
    // first two moments by Monte Carlo against the closed form
    const NoiseSchedule s = NoiseSchedule::linear(12, 0.02, 0.2);
    const int n = 12;
    const double ab = s.alpha_bar(n);
    const double m0 = 1.7;
    Rng rng(123);
    const int trials = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int t = 0; t < trials; ++t) {
        double x = m0;
        for (int step = 1; step <= n; ++step) {
            x = std::sqrt(s.alpha(step)) * x + std::sqrt(1.0 - s.alpha(step)) * rng.normal();
        }
        sum += x;
        sum_sq += x * x;
    }
    const double mean = sum / trials;
    const double var = sum_sq / trials - mean * mean;
    CHECK(mean == doctest::Approx(std::sqrt(ab) * m0).epsilon(0.01));
    CHECK(var == doctest::Approx(1.0 - ab).epsilon(0.01));
}

TEST_CASE("forward_noise marginal variance over draws") {
    const NoiseSchedule s = NoiseSchedule::linear(100, 1e-3, 0.05);
    const int step = 60;
    const double ab = s.alpha_bar(step);
    Mat m0 = Mat::Constant(1, 1, 0.8);
    Rng rng(321);
    const int trials = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int t = 0; t < trials; ++t) {
        Mat eps(1, 1);
        eps(0, 0) = rng.normal();
        const double x = forward_noise(m0, step, s, eps)(0, 0);
        sum += x;
        sum_sq += x * x;
    }
    const double mean = sum / trials;
    const double var = sum_sq / trials - mean * mean;
    CHECK(mean == doctest::Approx(std::sqrt(ab) * 0.8).epsilon(0.01));
    CHECK(var == doctest::Approx(1.0 - ab).epsilon(0.01));
}

TEST_CASE("x0 loss") {
    Mat a(2, 2);
    a << 1, 2, 3, 4;
    CHECK(x0_loss(a, a) == 0.0);
    Mat b = a;
    b(0, 1) += 2.0; // one element off by 2 in a 4-element sequence
    CHECK(x0_loss(a, b) == doctest::Approx(1.0));
    CHECK_THROWS_AS(x0_loss(a, Mat::Zero(2, 3)), DataError);

    Rng rng(9);
    Mat p(5, 3), q(5, 3);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        p.data()[i] = rng.normal();
        q.data()[i] = rng.normal();
    }
    double direct = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        direct += (p.data()[i] - q.data()[i]) * (p.data()[i] - q.data()[i]);
    }
    CHECK(x0_loss(p, q) == doctest::Approx(direct / 15.0).epsilon(1e-12));
}

TEST_CASE("condition mask distribution") {
    Rng rng(55);
    const int trials = 100000;
    int all_dropped = 0, all_kept = 0, only_brow = 0;
    for (int t = 0; t < trials; ++t) {
        const ConditionMask m = sample_condition_mask(rng);
        all_dropped += m.all_dropped();
        all_kept += m.all_kept();
        bool brow_only = m.dropped[0];
        for (int r = 1; r < kNumRegions; ++r) {
            brow_only = brow_only && !m.dropped[static_cast<std::size_t>(r)];
        }
        only_brow += brow_only;
    }
    // P(all dropped) = P(all kept) = 0.1 + 0.8 * 0.5^5 = 0.125
    const double se_125 = std::sqrt(0.125 * 0.875 / trials);
    CHECK(std::abs(all_dropped / double(trials) - 0.125) < 3 * se_125);
    CHECK(std::abs(all_kept / double(trials) - 0.125) < 3 * se_125);
    // P(exactly one region dropped) = 0.8 * 0.5^5 = 0.025
    const double se_025 = std::sqrt(0.025 * 0.975 / trials);
    CHECK(std::abs(only_brow / double(trials) - 0.025) < 3 * se_025);
}

TEST_CASE("encode_timeline_condition") {
    AnnotationSequence a = AnnotationSequence::zeros(6);
    a.set(2, ActionCategory::Smile, 1);
    a.set(3, ActionCategory::HeadUp, 1);

    ConditionMask keep_all;
    const EncodedTimeline kept = encode_timeline_condition(a, keep_all);
    for (int f = 0; f < 6; ++f) {
        for (int d = 0; d < kNumActions; ++d) {
            CHECK(kept(f, d) ==
                  a.values[static_cast<std::size_t>(f) * kNumActions +
                           static_cast<std::size_t>(d)]);
        }
    }

    ConditionMask drop_all;
    drop_all.dropped.fill(true);
    CHECK((encode_timeline_condition(a, drop_all).array() == -1.0).all());

    ConditionMask drop_head;
    drop_head.dropped[static_cast<std::size_t>(region_index(RegionId::Head))] = true;
    const EncodedTimeline e = encode_timeline_condition(a, drop_head);
    int minus_cols = 0;
    for (int d = 0; d < kNumActions; ++d) {
        bool all_minus = true;
        for (int f = 0; f < 6; ++f) {
            all_minus = all_minus && e(f, d) == -1.0;
        }
        minus_cols += all_minus;
        const bool is_head = region_of(static_cast<ActionCategory>(d)) == RegionId::Head;
        CHECK(all_minus == is_head);
    }
    CHECK(minus_cols == region_width(RegionId::Head));

    // pure function: same inputs, same encoding
    CHECK(encode_timeline_condition(a, drop_head) == e);
}

TEST_CASE("denoising loss against stub denoisers") {
    const NoiseSchedule s = NoiseSchedule::linear(50, 1e-3, 0.1);
    Mat m0(4, 3);
    for (Eigen::Index i = 0; i < m0.size(); ++i) {
        m0.data()[i] = 0.1 * static_cast<double>(i);
    }
    const EncodedTimeline cond = Mat::Zero(4, kNumActions);

    const Denoiser perfect = [&](const Mat&, int, const Mat&) { return m0; };
    Rng r1(77);
    CHECK(denoising_loss(m0, 25, s, cond, perfect, r1) == 0.0);

    const Denoiser zero = [&](const Mat& noisy, int, const Mat&) {
        return Mat(Mat::Zero(noisy.rows(), noisy.cols()));
    };
    Rng r2(77);
    CHECK(denoising_loss(m0, 25, s, cond, zero, r2) ==
          doctest::Approx(m0.squaredNorm() / m0.size()));

    // identity stub: loss equals the injected-noise distortion, reproducible
    // under the same seed
    const Denoiser identity = [](const Mat& noisy, int, const Mat&) { return noisy; };
    Rng r3(42), r4(42);
    const double l1 = denoising_loss(m0, 25, s, cond, identity, r3);
    const double l2 = denoising_loss(m0, 25, s, cond, identity, r4);
    CHECK(l1 == l2);
    CHECK(l1 > 0.0);
}
