#pragma once

// Independent reference computations for the test suites. Everything here is
// deliberately written along different algorithmic routes than the library
// code it checks.

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "timeliner/rng.hpp"
#include "timeliner/ticc.hpp"

namespace oracles {

using timeliner::Mat;
using timeliner::Vec;

/// Exhaustive minimum of sum_t costs(t, p_t) + beta * #switches over all K^T
/// paths. Only sane for tiny T and K.
inline double brute_force_dp(const Mat& costs, double beta) {
    const int T = static_cast<int>(costs.rows());
    const int K = static_cast<int>(costs.cols());
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> path(static_cast<std::size_t>(T), 0);
    while (true) {
        double total = costs(0, path[0]);
        for (int t = 1; t < T; ++t) {
            total += costs(t, path[static_cast<std::size_t>(t)]);
            if (path[static_cast<std::size_t>(t)] != path[static_cast<std::size_t>(t - 1)]) {
                total += beta;
            }
        }
        best = std::min(best, total);
        int i = T - 1;
        while (i >= 0 && path[static_cast<std::size_t>(i)] == K - 1) {
            path[static_cast<std::size_t>(i)] = 0;
            --i;
        }
        if (i < 0) {
            break;
        }
        ++path[static_cast<std::size_t>(i)];
    }
    return best;
}

/// Dense multivariate normal log-density evaluated through the covariance
/// (inverse of the precision), not through the cached logdet.
inline double dense_gaussian_logpdf(const Vec& x, const Vec& mu, const Mat& precision) {
    const Eigen::Index d = x.size();
    const Mat cov = precision.inverse();
    const Vec diff = x - mu;
    const double maha = diff.dot(cov.inverse() * diff);
    const double logdet_cov = std::log(cov.determinant());
    return -0.5 * (maha + logdet_cov + d * std::log(2.0 * 3.14159265358979323846));
}

/// Objective of the Toeplitz-constrained graphical lasso at theta.
inline double glasso_objective(const Mat& S, const Mat& theta, int sample_count,
                               const timeliner::TiccConfig& cfg) {
    Eigen::LLT<Mat> llt(theta);
    if (llt.info() != Eigen::Success) {
        return std::numeric_limits<double>::infinity();
    }
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < theta.rows(); ++i) {
        logdet += 2.0 * std::log(llt.matrixLLT()(i, i));
    }
    double l1 = 0.0;
    for (Eigen::Index i = 0; i < theta.rows(); ++i) {
        for (Eigen::Index j = 0; j < theta.cols(); ++j) {
            double w;
            if (cfg.lambda_matrix) {
                w = (*cfg.lambda_matrix)(i, j);
            } else {
                w = i == j ? 0.0 : cfg.lambda;
            }
            l1 += w * std::abs(theta(i, j));
        }
    }
    return -logdet + (S.array() * theta.array()).sum() + l1 / sample_count;
}

/// High-precision reference solve of the same convex problem by proximal
/// gradient over the tied-class parameters, with monotone backtracking. An
/// entirely different route than the ADMM under test.
inline double reference_glasso_best_objective(const Mat& S, int sample_count, int n,
                                              int w, const timeliner::TiccConfig& cfg,
                                              int iterations = 60000) {
    const auto classes = timeliner::block_toeplitz_classes(n, w);
    const Eigen::Index nw = static_cast<Eigen::Index>(n) * w;

    std::vector<double> class_l1(classes.size(), 0.0);
    for (std::size_t c = 0; c < classes.size(); ++c) {
        for (const auto& [i, j] : classes[c]) {
            class_l1[c] += cfg.lambda_matrix ? (*cfg.lambda_matrix)(i, j)
                                             : (i == j ? 0.0 : cfg.lambda);
        }
    }

    auto assemble = [&](const std::vector<double>& z) {
        Mat theta = Mat::Zero(nw, nw);
        for (std::size_t c = 0; c < classes.size(); ++c) {
            for (const auto& [i, j] : classes[c]) {
                theta(i, j) = z[c];
            }
        }
        return theta;
    };
    auto smooth = [&](const Mat& theta, double& logdet_out) {
        Eigen::LLT<Mat> llt(theta);
        if (llt.info() != Eigen::Success) {
            return std::numeric_limits<double>::infinity();
        }
        double logdet = 0.0;
        for (Eigen::Index i = 0; i < nw; ++i) {
            logdet += 2.0 * std::log(llt.matrixLLT()(i, i));
        }
        logdet_out = logdet;
        return -logdet + (S.array() * theta.array()).sum();
    };

    std::vector<double> z(classes.size(), 0.0);
    {
        // diagonal start, mirrors nothing in the ADMM's trajectory
        Mat theta0 = Mat::Zero(nw, nw);
        for (Eigen::Index i = 0; i < nw; ++i) {
            theta0(i, i) = 1.0 / std::max(S(i, i), 1e-12);
        }
        for (std::size_t c = 0; c < classes.size(); ++c) {
            const auto& [i, j] = classes[c].front();
            z[c] = theta0(i, j);
        }
    }

    double best = glasso_objective(S, assemble(z), sample_count, cfg);
    double step = 1.0;
    double logdet = 0.0;
    double g_cur = smooth(assemble(z), logdet);
    double last_best = best;
    int since_improvement = 0;

    for (int it = 0; it < iterations; ++it) {
        const Mat theta = assemble(z);
        const Mat grad_mat = S - theta.inverse();
        std::vector<double> grad(classes.size(), 0.0);
        for (std::size_t c = 0; c < classes.size(); ++c) {
            for (const auto& [i, j] : classes[c]) {
                grad[c] += grad_mat(i, j);
            }
        }

        // backtracking proximal step
        bool accepted = false;
        for (int half = 0; half < 60 && !accepted; ++half) {
            std::vector<double> z_new(classes.size());
            for (std::size_t c = 0; c < classes.size(); ++c) {
                const double v = z[c] - step * grad[c];
                const double thr = step * class_l1[c] / sample_count;
                z_new[c] = v > thr ? v - thr : (v < -thr ? v + thr : 0.0);
            }
            double logdet_new = 0.0;
            const Mat theta_new = assemble(z_new);
            const double g_new = smooth(theta_new, logdet_new);
            if (std::isfinite(g_new)) {
                // sufficient decrease on the smooth part's quadratic model
                double quad = g_cur;
                double dist2 = 0.0;
                for (std::size_t c = 0; c < classes.size(); ++c) {
                    quad += grad[c] * (z_new[c] - z[c]);
                    dist2 += (z_new[c] - z[c]) * (z_new[c] - z[c]);
                }
                quad += dist2 / (2.0 * step);
                if (g_new <= quad + 1e-12) {
                    z = std::move(z_new);
                    g_cur = g_new;
                    accepted = true;
                    best = std::min(best,
                                    glasso_objective(S, assemble(z), sample_count, cfg));
                    step *= 1.2;
                } else {
                    step *= 0.5;
                }
            } else {
                step *= 0.5;
            }
        }
        if (!accepted) {
            break;
        }
        if (it % 500 == 499) {
            if (best >= last_best - 1e-13 * std::max(1.0, std::abs(last_best))) {
                ++since_improvement;
                if (since_improvement >= 4) {
                    break; // long plateau: converged to working precision
                }
            } else {
                since_improvement = 0;
            }
            last_best = best;
        }
    }
    return best;
}

/// Multivariate series with planted regime switches: each regime is a VAR(1)
/// with its own feedback and noise-mixing structure.
struct PlantedSeries {
    Mat data;
    std::vector<int> regime; // per frame
    std::vector<int> boundaries;
};

inline PlantedSeries planted_regimes(int T, int n, int num_regimes,
                                     std::uint64_t seed, int seg_lo = 400,
                                     int seg_hi = 700) {
    timeliner::Rng rng(seed);
    std::vector<double> feedback = {0.0, 0.88, -0.75, 0.5};
    std::vector<double> mix = {0.0, 0.85, -0.7, 0.4}; // cross-channel noise corr

    PlantedSeries out;
    out.data.resize(T, n);
    out.regime.resize(static_cast<std::size_t>(T));

    Vec x = Vec::Zero(n);
    int t = 0;
    int r = 0;
    while (t < T) {
        const int seg = static_cast<int>(rng.uniform_int(seg_lo, seg_hi));
        const double phi = feedback[static_cast<std::size_t>(r % num_regimes)];
        const double rho = mix[static_cast<std::size_t>(r % num_regimes)];
        for (int s = 0; s < seg && t < T; ++s, ++t) {
            Vec eps(n);
            const double shared = rng.normal();
            for (int c = 0; c < n; ++c) {
                // correlated innovations: shared factor + idiosyncratic part
                eps(c) = std::sqrt(std::abs(rho)) * (rho < 0 && c % 2 ? -shared : shared) +
                         std::sqrt(1.0 - std::abs(rho)) * rng.normal();
            }
            x = phi * x + eps;
            out.data.row(t) = x.transpose();
            out.regime[static_cast<std::size_t>(t)] = r % num_regimes;
        }
        if (t < T) {
            out.boundaries.push_back(t);
        }
        ++r;
    }
    return out;
}

/// Macro-F1 between predicted cluster labels and planted regimes under the
/// best injective cluster->regime assignment (exhaustive over assignments).
inline double best_matching_macro_f1(const std::vector<int>& pred, int num_clusters,
                                     const std::vector<int>& truth, int num_regimes) {
    std::vector<int> choice(static_cast<std::size_t>(num_regimes), -1);
    std::vector<bool> used(static_cast<std::size_t>(num_clusters), false);
    double best = 0.0;

    auto score = [&]() {
        double total = 0.0;
        for (int reg = 0; reg < num_regimes; ++reg) {
            long tp = 0, fp = 0, fn = 0;
            const int cl = choice[static_cast<std::size_t>(reg)];
            for (std::size_t i = 0; i < truth.size(); ++i) {
                const bool g = truth[i] == reg;
                const bool p = cl >= 0 && pred[i] == cl;
                if (p && g) ++tp;
                else if (p && !g) ++fp;
                else if (!p && g) ++fn;
            }
            total += (2 * tp + fp + fn) == 0 ? 1.0
                                             : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
        }
        return total / num_regimes;
    };

    // depth-first over injective assignments; -1 allows unmatched regimes
    auto recurse = [&](auto&& self, int reg) -> void {
        if (reg == num_regimes) {
            best = std::max(best, score());
            return;
        }
        for (int cl = 0; cl < num_clusters; ++cl) {
            if (!used[static_cast<std::size_t>(cl)]) {
                used[static_cast<std::size_t>(cl)] = true;
                choice[static_cast<std::size_t>(reg)] = cl;
                self(self, reg + 1);
                used[static_cast<std::size_t>(cl)] = false;
            }
        }
        choice[static_cast<std::size_t>(reg)] = -1;
        self(self, reg + 1);
    };
    recurse(recurse, 0);
    return best;
}

} // namespace oracles
