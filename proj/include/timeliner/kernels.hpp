#pragma once

#include <cstddef>
#include <string_view>

// Data-parallel inner loops used by the window-cost, metric, and noise math.
// Every kernel has a scalar reference implementation and an AVX2 variant; the
// public entry points dispatch once at startup based on the host CPU. Set
// TIMELINER_SIMD=scalar|avx2 to override the choice (requests the CPU cannot
// honor fall back to scalar).

namespace timeliner::kernels {

enum class SimdLevel { Scalar, Avx2 };

SimdLevel active_level();
std::string_view level_name(SimdLevel level);

/// True when the AVX2 variants were compiled in and the CPU supports them.
bool avx2_available();

double sum(const double* x, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);

/// x' M x for a row-major n x n matrix. M is expected symmetric but the
/// kernel does not rely on it.
double quad_form(const double* m, const double* x, std::size_t n);

/// sum_i (a_i - b_i)^2
double sum_sq_diff(const double* a, const double* b, std::size_t n);

/// sum_i (x_i - center)^2
double sum_sq_dev(const double* x, double center, std::size_t n);

/// out_i = a*x_i + b*y_i
void axpby(double a, const double* x, double b, const double* y, double* out,
           std::size_t n);

// Reference implementations, always available. The dispatched entry points
// above must agree with these (up to floating-point reassociation); the
// equivalence tests in test_kernels.cpp pin that down.
namespace scalar {
double sum(const double* x, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double quad_form(const double* m, const double* x, std::size_t n);
double sum_sq_diff(const double* a, const double* b, std::size_t n);
double sum_sq_dev(const double* x, double center, std::size_t n);
void axpby(double a, const double* x, double b, const double* y, double* out,
           std::size_t n);
} // namespace scalar

// AVX2 variants. On builds without AVX2 support these forward to scalar and
// avx2_available() reports false.
namespace avx2 {
double sum(const double* x, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double quad_form(const double* m, const double* x, std::size_t n);
double sum_sq_diff(const double* a, const double* b, std::size_t n);
double sum_sq_dev(const double* x, double center, std::size_t n);
void axpby(double a, const double* x, double b, const double* y, double* out,
           std::size_t n);
} // namespace avx2

} // namespace timeliner::kernels
