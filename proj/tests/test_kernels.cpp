#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "timeliner/kernels.hpp"
#include "timeliner/rng.hpp"

using namespace timeliner;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) {
        x = rng.normal(0.0, scale);
    }
    return v;
}

} // namespace

TEST_CASE("scalar kernels match plain formulas") {
    Rng rng(11);
    const auto a = random_vec(rng, 13);
    const auto b = random_vec(rng, 13);

    double sum = 0.0, dot = 0.0, ssd = 0.0, dev = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sum += a[i];
        dot += a[i] * b[i];
        ssd += (a[i] - b[i]) * (a[i] - b[i]);
        dev += (a[i] - 0.25) * (a[i] - 0.25);
    }
    CHECK(kernels::scalar::sum(a.data(), a.size()) == doctest::Approx(sum).epsilon(1e-14));
    CHECK(kernels::scalar::dot(a.data(), b.data(), a.size()) ==
          doctest::Approx(dot).epsilon(1e-14));
    CHECK(kernels::scalar::sum_sq_diff(a.data(), b.data(), a.size()) ==
          doctest::Approx(ssd).epsilon(1e-14));
    CHECK(kernels::scalar::sum_sq_dev(a.data(), 0.25, a.size()) ==
          doctest::Approx(dev).epsilon(1e-14));
}

TEST_CASE("quad_form equals x'Mx") {
    Rng rng(12);
    const std::size_t n = 7;
    auto m = random_vec(rng, n * n);
    // symmetrize the way the callers do
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            const double avg = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = m[j * n + i] = avg;
        }
    }
    const auto x = random_vec(rng, n);
    double expected = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            expected += x[i] * m[i * n + j] * x[j];
        }
    }
    CHECK(kernels::scalar::quad_form(m.data(), x.data(), n) ==
          doctest::Approx(expected).epsilon(1e-13));
    CHECK(kernels::quad_form(m.data(), x.data(), n) ==
          doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("axpby blends elementwise") {
    Rng rng(13);
    const auto x = random_vec(rng, 9);
    const auto y = random_vec(rng, 9);
    std::vector<double> out(9);
    kernels::axpby(0.75, x.data(), -1.5, y.data(), out.data(), 9);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(out[i] == doctest::Approx(0.75 * x[i] - 1.5 * y[i]).epsilon(1e-14));
    }
}

TEST_CASE("avx2 variants agree with scalar reference") {
    if (!kernels::avx2_available()) {
        MESSAGE("AVX2 not available on this host; dispatched path is scalar");
        return;
    }
    Rng rng(14);
    // sweep lengths around the vector width to cover every remainder case
    for (std::size_t n : {1u, 2u, 3u, 4u, 5u, 7u, 8u, 15u, 16u, 33u, 100u, 1001u}) {
        const auto a = random_vec(rng, n, 2.0);
        const auto b = random_vec(rng, n, 0.5);
        const double rel = 1e-12;
        CHECK(kernels::avx2::sum(a.data(), n) ==
              doctest::Approx(kernels::scalar::sum(a.data(), n)).epsilon(rel));
        CHECK(kernels::avx2::dot(a.data(), b.data(), n) ==
              doctest::Approx(kernels::scalar::dot(a.data(), b.data(), n)).epsilon(rel));
        CHECK(kernels::avx2::sum_sq_diff(a.data(), b.data(), n) ==
              doctest::Approx(kernels::scalar::sum_sq_diff(a.data(), b.data(), n))
                  .epsilon(rel));
        CHECK(kernels::avx2::sum_sq_dev(a.data(), -0.3, n) ==
              doctest::Approx(kernels::scalar::sum_sq_dev(a.data(), -0.3, n)).epsilon(rel));
        std::vector<double> out_a(n), out_s(n);
        kernels::avx2::axpby(1.25, a.data(), 0.5, b.data(), out_a.data(), n);
        kernels::scalar::axpby(1.25, a.data(), 0.5, b.data(), out_s.data(), n);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(out_a[i] == doctest::Approx(out_s[i]).epsilon(rel));
        }
    }
    for (std::size_t n : {1u, 2u, 5u, 9u, 12u}) {
        const auto m = random_vec(rng, n * n);
        const auto x = random_vec(rng, n);
        CHECK(kernels::avx2::quad_form(m.data(), x.data(), n) ==
              doctest::Approx(kernels::scalar::quad_form(m.data(), x.data(), n))
                  .epsilon(1e-12));
    }
}

TEST_CASE("dispatch level is reported") {
    const auto level = kernels::active_level();
    CHECK((level == kernels::SimdLevel::Scalar || level == kernels::SimdLevel::Avx2));
    CHECK(kernels::level_name(level).size() > 0);
}
