#include "timeliner/kernels.hpp"

#ifdef TIMELINER_HAVE_AVX2

#include <immintrin.h>

namespace timeliner::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

} // namespace

double sum(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    }
    double tail = 0.0;
    for (; i < n; ++i) {
        tail += x[i];
    }
    return hsum(acc) + tail;
}

double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    }
    double tail = 0.0;
    for (; i < n; ++i) {
        tail += a[i] * b[i];
    }
    return hsum(acc) + tail;
}

double quad_form(const double* m, const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += x[i] * dot(m + i * n, x, n);
    }
    return acc;
}

double sum_sq_diff(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        acc = _mm256_fmadd_pd(d, d, acc);
    }
    double tail = 0.0;
    for (; i < n; ++i) {
        const double d = a[i] - b[i];
        tail += d * d;
    }
    return hsum(acc) + tail;
}

double sum_sq_dev(const double* x, double center, std::size_t n) {
    const __m256d c = _mm256_set1_pd(center);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), c);
        acc = _mm256_fmadd_pd(d, d, acc);
    }
    double tail = 0.0;
    for (; i < n; ++i) {
        const double d = x[i] - center;
        tail += d * d;
    }
    return hsum(acc) + tail;
}

void axpby(double a, const double* x, double b, const double* y, double* out,
           std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    const __m256d vb = _mm256_set1_pd(b);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d r = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                          _mm256_mul_pd(vb, _mm256_loadu_pd(y + i)));
        _mm256_storeu_pd(out + i, r);
    }
    for (; i < n; ++i) {
        out[i] = a * x[i] + b * y[i];
    }
}

} // namespace timeliner::kernels::avx2

#else // !TIMELINER_HAVE_AVX2

namespace timeliner::kernels::avx2 {

double sum(const double* x, std::size_t n) { return scalar::sum(x, n); }
double dot(const double* a, const double* b, std::size_t n) { return scalar::dot(a, b, n); }
double quad_form(const double* m, const double* x, std::size_t n) {
    return scalar::quad_form(m, x, n);
}
double sum_sq_diff(const double* a, const double* b, std::size_t n) {
    return scalar::sum_sq_diff(a, b, n);
}
double sum_sq_dev(const double* x, double center, std::size_t n) {
    return scalar::sum_sq_dev(x, center, n);
}
void axpby(double a, const double* x, double b, const double* y, double* out,
           std::size_t n) {
    scalar::axpby(a, x, b, y, out, n);
}

} // namespace timeliner::kernels::avx2

#endif
