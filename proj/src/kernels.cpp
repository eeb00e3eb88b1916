#include "timeliner/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace timeliner::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(TIMELINER_HAVE_AVX2) && (defined(__x86_64__) || defined(_M_X64))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

SimdLevel detect_level() {
    const bool have = cpu_has_avx2();
    if (const char* env = std::getenv("TIMELINER_SIMD")) {
        if (std::strcmp(env, "scalar") == 0) {
            return SimdLevel::Scalar;
        }
        if (std::strcmp(env, "avx2") == 0) {
            return have ? SimdLevel::Avx2 : SimdLevel::Scalar;
        }
        // unknown value: ignore and auto-detect
    }
    return have ? SimdLevel::Avx2 : SimdLevel::Scalar;
}

const SimdLevel g_level = detect_level();

} // namespace

SimdLevel active_level() { return g_level; }

std::string_view level_name(SimdLevel level) {
    return level == SimdLevel::Avx2 ? "avx2" : "scalar";
}

bool avx2_available() { return cpu_has_avx2(); }

double sum(const double* x, std::size_t n) {
    return g_level == SimdLevel::Avx2 ? avx2::sum(x, n) : scalar::sum(x, n);
}

double dot(const double* a, const double* b, std::size_t n) {
    return g_level == SimdLevel::Avx2 ? avx2::dot(a, b, n) : scalar::dot(a, b, n);
}

double quad_form(const double* m, const double* x, std::size_t n) {
    return g_level == SimdLevel::Avx2 ? avx2::quad_form(m, x, n)
                                      : scalar::quad_form(m, x, n);
}

double sum_sq_diff(const double* a, const double* b, std::size_t n) {
    return g_level == SimdLevel::Avx2 ? avx2::sum_sq_diff(a, b, n)
                                      : scalar::sum_sq_diff(a, b, n);
}

double sum_sq_dev(const double* x, double center, std::size_t n) {
    return g_level == SimdLevel::Avx2 ? avx2::sum_sq_dev(x, center, n)
                                      : scalar::sum_sq_dev(x, center, n);
}

void axpby(double a, const double* x, double b, const double* y, double* out,
           std::size_t n) {
    if (g_level == SimdLevel::Avx2) {
        avx2::axpby(a, x, b, y, out, n);
    } else {
        scalar::axpby(a, x, b, y, out, n);
    }
}

} // namespace timeliner::kernels
