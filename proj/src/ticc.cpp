#include "timeliner/ticc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "timeliner/errors.hpp"
#include "timeliner/kernels.hpp"
#include "timeliner/rng.hpp"

namespace timeliner {

using nlohmann::json;

namespace {

constexpr double kLog2Pi = 1.8378770664093453; // log(2*pi)

double l1_weight(const TiccConfig& cfg, int i, int j) {
    if (cfg.lambda_matrix) {
        return (*cfg.lambda_matrix)(i, j);
    }
    return i == j ? 0.0 : cfg.lambda; // diagonal unpenalized
}

double soft_threshold(double v, double thr) {
    if (v > thr) {
        return v - thr;
    }
    if (v < -thr) {
        return v + thr;
    }
    return 0.0;
}

double logdet_from_llt(const Eigen::LLT<Mat>& llt) {
    double acc = 0.0;
    const auto& L = llt.matrixLLT();
    for (Eigen::Index i = 0; i < L.rows(); ++i) {
        acc += std::log(L(i, i));
    }
    return 2.0 * acc;
}

/// l1 penalty the M-step trades against the likelihood: 1/2 ||lambda o theta||_1
/// summed over clusters. Keeping it in the tracked objective makes the EM
/// descent check meaningful.
double model_penalty(const TiccModel& m) {
    double pen = 0.0;
    for (const auto& c : m.clusters) {
        const int nw = static_cast<int>(c.theta.rows());
        for (int i = 0; i < nw; ++i) {
            for (int j = 0; j < nw; ++j) {
                pen += 0.5 * l1_weight(m.config, i, j) * std::abs(c.theta(i, j));
            }
        }
    }
    return pen;
}

} // namespace

void TiccConfig::check() const {
    std::ostringstream bad;
    if (num_clusters < 1) bad << " num_clusters=" << num_clusters;
    if (window < 1 || window > 10) bad << " window=" << window;
    if (beta < 0.0) bad << " beta=" << beta;
    if (lambda < 0.0) bad << " lambda=" << lambda;
    if (rho <= 0.0) bad << " rho=" << rho;
    if (admm_eps_abs <= 0.0) bad << " admm_eps_abs=" << admm_eps_abs;
    if (admm_eps_rel <= 0.0) bad << " admm_eps_rel=" << admm_eps_rel;
    if (admm_max_iter < 1) bad << " admm_max_iter=" << admm_max_iter;
    if (em_max_iter < 1) bad << " em_max_iter=" << em_max_iter;
    if (min_cluster_size < 1) bad << " min_cluster_size=" << min_cluster_size;
    if (cov_ridge <= 0.0) bad << " cov_ridge=" << cov_ridge;
    if (!bad.str().empty()) {
        throw DataError("invalid TiccConfig:" + bad.str());
    }
}

Mat stack_windows(const Mat& x, int w) {
    const Eigen::Index T = x.rows();
    const Eigen::Index n = x.cols();
    if (w < 1) {
        throw DataError("window size must be >= 1");
    }
    if (T < w) {
        throw DataError("series of length " + std::to_string(T) +
                        " is shorter than window " + std::to_string(w));
    }
    Mat out(T - w + 1, n * w);
    for (Eigen::Index t = 0; t + w <= T; ++t) {
        for (int s = 0; s < w; ++s) {
            out.block(t, s * n, 1, n) = x.row(t + s);
        }
    }
    return out;
}

double log_likelihood(const Vec& xw, const ClusterModel& c) {
    const Eigen::Index nw = c.mu.size();
    if (xw.size() != nw || c.theta.rows() != nw || c.theta.cols() != nw) {
        throw DataError("log_likelihood: dimension mismatch");
    }
    Vec diff = xw - c.mu;
    const double q = kernels::quad_form(c.theta.data(), diff.data(),
                                        static_cast<std::size_t>(nw));
    return -0.5 * q + 0.5 * c.logdet_theta -
           0.5 * static_cast<double>(nw) * kLog2Pi;
}

AssignmentPath assign_dp(const Mat& costs, double beta) {
    const Eigen::Index T = costs.rows();
    const Eigen::Index K = costs.cols();
    if (T == 0 || K == 0) {
        throw DataError("assign_dp: empty cost matrix");
    }
    if (!costs.allFinite()) {
        throw DataError("assign_dp: non-finite cost");
    }
    if (beta < 0.0) {
        throw DataError("assign_dp: negative beta");
    }

    Mat dp(T, K);
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> prev(T, K);
    dp.row(0) = costs.row(0);
    prev.row(0).setConstant(-1);
    for (Eigen::Index t = 1; t < T; ++t) {
        for (Eigen::Index k = 0; k < K; ++k) {
            double best = std::numeric_limits<double>::infinity();
            int best_j = 0;
            for (Eigen::Index j = 0; j < K; ++j) {
                const double cand = dp(t - 1, j) + (j == k ? 0.0 : beta);
                if (cand < best) {
                    best = cand;
                    best_j = static_cast<int>(j);
                }
            }
            dp(t, k) = costs(t, k) + best;
            prev(t, k) = best_j;
        }
    }

    AssignmentPath path;
    path.labels.resize(static_cast<std::size_t>(T));
    Eigen::Index k = 0;
    for (Eigen::Index j = 1; j < K; ++j) {
        if (dp(T - 1, j) < dp(T - 1, k)) {
            k = j;
        }
    }
    path.objective = dp(T - 1, k);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
        path.labels[static_cast<std::size_t>(t)] = static_cast<int>(k);
        if (t > 0) {
            k = prev(t, k);
        }
    }
    return path;
}

std::vector<std::vector<std::pair<int, int>>> block_toeplitz_classes(int n, int w) {
    std::vector<std::vector<std::pair<int, int>>> classes;
    // diagonal-block classes: A^(0) symmetric, so (p,q) pairs with p <= q
    for (int p = 0; p < n; ++p) {
        for (int q = p; q < n; ++q) {
            std::vector<std::pair<int, int>> cls;
            for (int b = 0; b < w; ++b) {
                cls.emplace_back(b * n + p, b * n + q);
                if (p != q) {
                    cls.emplace_back(b * n + q, b * n + p);
                }
            }
            classes.push_back(std::move(cls));
        }
    }
    // off-diagonal blocks at offset m: A^(m)[p][q] appears mirrored below
    for (int m = 1; m < w; ++m) {
        for (int p = 0; p < n; ++p) {
            for (int q = 0; q < n; ++q) {
                std::vector<std::pair<int, int>> cls;
                for (int b = 0; b + m < w; ++b) {
                    cls.emplace_back(b * n + p, (b + m) * n + q);
                    cls.emplace_back((b + m) * n + q, b * n + p);
                }
                classes.push_back(std::move(cls));
            }
        }
    }
    return classes;
}

GlassoResult solve_toeplitz_glasso(const Mat& S, int sample_count, int n, int w,
                                   const TiccConfig& cfg) {
    const Eigen::Index nw = static_cast<Eigen::Index>(n) * w;
    if (S.rows() != nw || S.cols() != nw) {
        throw DataError("glasso: covariance is " + std::to_string(S.rows()) + "x" +
                        std::to_string(S.cols()) + ", expected " + std::to_string(nw));
    }
    if (!S.isApprox(S.transpose(), 1e-10)) {
        throw DataError("glasso: covariance is not symmetric");
    }
    if (sample_count < 1) {
        throw DataError("glasso: sample_count must be >= 1");
    }
    const double rho = cfg.rho;
    const double inv_n = 1.0 / static_cast<double>(sample_count);

    const auto classes = block_toeplitz_classes(n, w);
    std::vector<double> class_weight(classes.size(), 0.0);
    for (std::size_t c = 0; c < classes.size(); ++c) {
        for (const auto& [i, j] : classes[c]) {
            class_weight[c] += l1_weight(cfg, i, j);
        }
    }

    auto objective = [&](const Mat& theta, double logdet) {
        double l1 = 0.0;
        for (Eigen::Index i = 0; i < nw; ++i) {
            for (Eigen::Index j = 0; j < nw; ++j) {
                l1 += l1_weight(cfg, static_cast<int>(i), static_cast<int>(j)) *
                      std::abs(theta(i, j));
            }
        }
        return -logdet + (S.array() * theta.array()).sum() + inv_n * l1;
    };

    // scale-aware diagonal start
    Mat Z = Mat::Zero(nw, nw);
    for (Eigen::Index i = 0; i < nw; ++i) {
        Z(i, i) = 1.0 / std::max(S(i, i), 1e-12);
    }
    Mat U = Mat::Zero(nw, nw);
    Mat theta(nw, nw);

    Mat best_Z;
    double best_obj = std::numeric_limits<double>::infinity();
    bool converged = false;
    int iterations = 0;

    for (int it = 0; it < cfg.admm_max_iter; ++it) {
        iterations = it + 1;

        // theta-step: rho*theta - theta^{-1} = rho*(Z - U) - S in the eigenbasis
        Mat B = rho * (Z - U) - S;
        B = 0.5 * (B + B.transpose());
        Eigen::SelfAdjointEigenSolver<Mat> es(B);
        if (es.info() != Eigen::Success) {
            throw ConvergenceError("glasso: eigendecomposition failed");
        }
        Vec d = es.eigenvalues();
        Vec lifted(nw);
        for (Eigen::Index i = 0; i < nw; ++i) {
            lifted(i) = (d(i) + std::sqrt(d(i) * d(i) + 4.0 * rho)) / (2.0 * rho);
        }
        theta = es.eigenvectors() * lifted.asDiagonal() * es.eigenvectors().transpose();

        // Z-step: per tied class, soft-threshold the class mean of theta + U
        Mat Zold = Z;
        const Mat A = theta + U;
        for (std::size_t c = 0; c < classes.size(); ++c) {
            double mean = 0.0;
            for (const auto& [i, j] : classes[c]) {
                mean += A(i, j);
            }
            const double m_c = static_cast<double>(classes[c].size());
            mean /= m_c;
            const double thr = class_weight[c] / (rho * m_c * sample_count);
            const double z = soft_threshold(mean, thr);
            for (const auto& [i, j] : classes[c]) {
                Z(i, j) = z;
            }
        }

        U += theta - Z;

        // track the best positive definite iterate seen
        Eigen::LLT<Mat> llt(Z);
        if (llt.info() == Eigen::Success) {
            const double obj = objective(Z, logdet_from_llt(llt));
            if (obj < best_obj) {
                best_obj = obj;
                best_Z = Z;
            }
        }

        const double r_norm = (theta - Z).norm();
        const double s_norm = rho * (Z - Zold).norm();
        const double eps_pri = static_cast<double>(nw) * cfg.admm_eps_abs +
                               cfg.admm_eps_rel * std::max(theta.norm(), Z.norm());
        const double eps_dual = static_cast<double>(nw) * cfg.admm_eps_abs +
                                cfg.admm_eps_rel * (rho * U.norm());
        if (r_norm <= eps_pri && s_norm <= eps_dual) {
            converged = true;
            break;
        }
    }

    Mat result = Z;
    if (!converged && best_Z.size() > 0) {
        result = best_Z;
    }

    // The consensus variable carries the Toeplitz ties exactly; make sure it
    // is also positive definite before handing it out.
    Eigen::LLT<Mat> llt(result);
    if (llt.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<Mat> es(result);
        const double lmin = es.eigenvalues().minCoeff();
        const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
        const double bump = -std::min(lmin, 0.0) + 1e-8 * std::max(1.0, lmax);
        result += bump * Mat::Identity(nw, nw);
        llt.compute(result);
        if (llt.info() != Eigen::Success) {
            throw ConvergenceError("glasso: could not restore positive definiteness");
        }
    }

    GlassoResult out;
    out.theta = std::move(result);
    out.logdet = logdet_from_llt(llt);
    out.converged = converged;
    out.iterations = iterations;
    return out;
}

Mat cost_matrix(const TiccModel& m, const Mat& windows) {
    const Eigen::Index T = windows.rows();
    const int K = m.cluster_count();
    Mat costs(T, K);
    for (int k = 0; k < K; ++k) {
        const ClusterModel& c = m.clusters[static_cast<std::size_t>(k)];
        // The ridge-trace term mirrors the covariance regularizer in the
        // M-step objective, keeping the EM descent exact; it is a per-cluster
        // constant, shared with predict.
        const double ridge_term = 0.5 * m.config.cov_ridge * c.theta.trace();
        const double base = -0.5 * c.logdet_theta +
                            0.5 * static_cast<double>(c.mu.size()) * kLog2Pi + ridge_term;
        for (Eigen::Index t = 0; t < T; ++t) {
            Vec diff = windows.row(t).transpose() - c.mu;
            const double q = kernels::quad_form(c.theta.data(), diff.data(),
                                                static_cast<std::size_t>(diff.size()));
            costs(t, k) = 0.5 * q + base;
        }
    }
    return costs;
}

std::vector<int> expand_path_to_frames(const std::vector<int>& path, int num_frames,
                                       int w) {
    if (static_cast<int>(path.size()) != num_frames - w + 1) {
        throw DataError("expand_path_to_frames: path length " +
                        std::to_string(path.size()) + " does not match T-w+1 = " +
                        std::to_string(num_frames - w + 1));
    }
    std::vector<int> frames(static_cast<std::size_t>(num_frames));
    for (int t = 0; t < num_frames; ++t) {
        const int wi = std::min(t, num_frames - w);
        frames[static_cast<std::size_t>(t)] = path[static_cast<std::size_t>(wi)];
    }
    return frames;
}

namespace {

struct ClusterStats {
    Vec mu;
    Mat cov; // with ridge
    int count = 0;
};

ClusterStats member_stats(const Mat& windows, const std::vector<int>& members,
                          double ridge) {
    const Eigen::Index nw = windows.cols();
    ClusterStats st;
    st.count = static_cast<int>(members.size());
    st.mu = Vec::Zero(nw);
    for (int t : members) {
        st.mu += windows.row(t).transpose();
    }
    if (st.count > 0) {
        st.mu /= static_cast<double>(st.count);
    }
    st.cov = Mat::Zero(nw, nw);
    for (int t : members) {
        Vec d = windows.row(t).transpose() - st.mu;
        st.cov.noalias() += d * d.transpose();
    }
    if (st.count > 0) {
        st.cov /= static_cast<double>(st.count);
    }
    st.cov += ridge * Mat::Identity(nw, nw);
    return st;
}

ClusterModel fit_cluster(const Mat& windows, const std::vector<int>& members, int n,
                         int w, const TiccConfig& cfg, bool* admm_converged) {
    const ClusterStats st = member_stats(windows, members, cfg.cov_ridge);
    const int samples = std::max(st.count, 1);
    GlassoResult g = solve_toeplitz_glasso(st.cov, samples, n, w, cfg);
    if (admm_converged) {
        *admm_converged = g.converged;
    }
    ClusterModel cm;
    cm.theta = std::move(g.theta);
    cm.mu = st.mu;
    cm.logdet_theta = g.logdet;
    cm.member_count = st.count;
    return cm;
}

/// Features the assignment init clusters on: the window itself plus its
/// second-moment products, averaged over short neighborhoods within each
/// contiguous run of valid windows and variance-stabilized. Plain windows
/// cannot expose regimes that differ only in covariance; these can. Two
/// smoothing radii cover short facial intervals and long regimes alike.
Mat init_features(const Mat& windows, const std::vector<int>& rows) {
    const Eigen::Index nw = windows.cols();
    const auto N = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index nf = nw + nw * (nw + 1) / 2;

    Mat raw(N, nf);
    for (Eigen::Index i = 0; i < N; ++i) {
        const auto row = windows.row(rows[static_cast<std::size_t>(i)]);
        Eigen::Index at = 0;
        for (Eigen::Index a = 0; a < nw; ++a) {
            raw(i, at++) = row(a);
        }
        for (Eigen::Index a = 0; a < nw; ++a) {
            for (Eigen::Index b = a; b < nw; ++b) {
                raw(i, at++) = row(a) * row(b);
            }
        }
    }

    const std::vector<Eigen::Index> radii = {std::min<Eigen::Index>(4, N / 8),
                                             std::min<Eigen::Index>(20, N / 8)};
    Mat features(N, nf * static_cast<Eigen::Index>(radii.size()));
    for (std::size_t bank = 0; bank < radii.size(); ++bank) {
        const Eigen::Index radius = radii[bank];
        const Eigen::Index off = nf * static_cast<Eigen::Index>(bank);
        Eigen::Index run_start = 0;
        for (Eigen::Index i = 0; i <= N; ++i) {
            const bool run_ends =
                i == N || (i > 0 && rows[static_cast<std::size_t>(i)] !=
                                        rows[static_cast<std::size_t>(i - 1)] + 1);
            if (!run_ends) {
                continue;
            }
            const Eigen::Index len = i - run_start;
            Mat prefix = Mat::Zero(len + 1, nf);
            for (Eigen::Index k = 0; k < len; ++k) {
                prefix.row(k + 1) = prefix.row(k) + raw.row(run_start + k);
            }
            for (Eigen::Index k = 0; k < len; ++k) {
                const Eigen::Index lo = std::max<Eigen::Index>(0, k - radius);
                const Eigen::Index hi = std::min(len - 1, k + radius);
                features.block(run_start + k, off, 1, nf) =
                    (prefix.row(hi + 1) - prefix.row(lo)) /
                    static_cast<double>(hi - lo + 1);
            }
            run_start = i;
        }
    }

    features =
        features.array().unaryExpr([](double v) { return std::asinh(v); }).matrix();
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
        const double mean = features.col(c).mean();
        const double sd = std::sqrt((features.col(c).array() - mean).square().mean());
        if (sd > 1e-12) {
            features.col(c) = (features.col(c).array() - mean) / sd;
        } else {
            features.col(c).setZero();
        }
    }
    return features;
}

/// One k-means++ seeding plus Lloyd rounds; returns the within-cluster SSE.
double lloyd_once(const Mat& F, int K, Rng& rng, std::vector<int>& assign) {
    const auto N = F.rows();
    const auto nf = static_cast<std::size_t>(F.cols());
    std::vector<Vec> centers;
    centers.reserve(static_cast<std::size_t>(K));
    centers.push_back(F.row(rng.uniform_int(0, N - 1)).transpose());

    std::vector<double> d2(static_cast<std::size_t>(N));
    while (static_cast<int>(centers.size()) < K) {
        for (Eigen::Index i = 0; i < N; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec& c : centers) {
                best = std::min(best, kernels::sum_sq_diff(F.row(i).data(), c.data(), nf));
            }
            d2[static_cast<std::size_t>(i)] = best;
        }
        const double total = kernels::sum(d2.data(), d2.size());
        Eigen::Index pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (Eigen::Index i = 0; i < N; ++i) {
                acc += d2[static_cast<std::size_t>(i)];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.uniform_int(0, N - 1);
        }
        centers.push_back(F.row(pick).transpose());
    }

    assign.assign(static_cast<std::size_t>(N), 0);
    for (int round = 0; round < 40; ++round) {
        bool changed = false;
        for (Eigen::Index i = 0; i < N; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int best_k = 0;
            for (int k = 0; k < K; ++k) {
                const double d = kernels::sum_sq_diff(
                    F.row(i).data(), centers[static_cast<std::size_t>(k)].data(), nf);
                if (d < best) {
                    best = d;
                    best_k = k;
                }
            }
            if (assign[static_cast<std::size_t>(i)] != best_k) {
                assign[static_cast<std::size_t>(i)] = best_k;
                changed = true;
            }
        }
        if (!changed && round > 0) {
            break;
        }
        for (int k = 0; k < K; ++k) {
            Vec mean = Vec::Zero(F.cols());
            int cnt = 0;
            for (Eigen::Index i = 0; i < N; ++i) {
                if (assign[static_cast<std::size_t>(i)] == k) {
                    mean += F.row(i).transpose();
                    ++cnt;
                }
            }
            if (cnt > 0) {
                centers[static_cast<std::size_t>(k)] = mean / static_cast<double>(cnt);
            } else {
                // reseed an emptied center on the farthest point
                Eigen::Index far = 0;
                double far_d = -1.0;
                for (Eigen::Index i = 0; i < N; ++i) {
                    const double d = kernels::sum_sq_diff(
                        F.row(i).data(),
                        centers[static_cast<std::size_t>(
                                    assign[static_cast<std::size_t>(i)])]
                            .data(),
                        nf);
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                centers[static_cast<std::size_t>(k)] = F.row(far).transpose();
            }
        }
    }

    double sse = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
        sse += kernels::sum_sq_diff(
            F.row(i).data(),
            centers[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])].data(),
            nf);
    }
    return sse;
}

/// Plain standardized windows: the right init view when clusters differ in
/// mean.
Mat plain_features(const Mat& windows, const std::vector<int>& rows) {
    const auto N = static_cast<Eigen::Index>(rows.size());
    Mat out(N, windows.cols());
    for (Eigen::Index i = 0; i < N; ++i) {
        out.row(i) = windows.row(rows[static_cast<std::size_t>(i)]);
    }
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
        const double mean = out.col(c).mean();
        const double sd = std::sqrt((out.col(c).array() - mean).square().mean());
        if (sd > 1e-12) {
            out.col(c) = (out.col(c).array() - mean) / sd;
        } else {
            out.col(c).setZero();
        }
    }
    return out;
}

/// k-means++ with restarts over the given feature view; lowest SSE wins.
std::vector<int> kmeans_labels(const Mat& features, int K, Rng& rng) {
    std::vector<int> best_assign;
    double best_sse = std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < 10; ++restart) {
        Rng child(rng.next_u64());
        std::vector<int> assign;
        const double sse = lloyd_once(features, K, child, assign);
        if (sse < best_sse) {
            best_sse = sse;
            best_assign = std::move(assign);
        }
    }
    return best_assign;
}

} // namespace

FitResult fit(const Mat& x, const TiccConfig& cfg,
              const std::vector<std::uint8_t>* null_mask) {
    cfg.check();
    const Eigen::Index T = x.rows();
    const int n = static_cast<int>(x.cols());
    const int w = cfg.window;
    if (T < w) {
        throw DataError("fit: series shorter than window");
    }
    if (null_mask && static_cast<Eigen::Index>(null_mask->size()) != T) {
        throw DataError("fit: null mask length does not match series");
    }

    TiccModel model;
    model.config = cfg;
    model.n = n;

    // optional per-channel standardization, computed over non-null rows
    Mat series = x;
    if (cfg.zscore) {
        model.channel_mean = Vec::Zero(n);
        model.channel_scale = Vec::Ones(n);
        std::vector<double> col;
        for (int c = 0; c < n; ++c) {
            col.clear();
            for (Eigen::Index r = 0; r < T; ++r) {
                if (!null_mask || !(*null_mask)[static_cast<std::size_t>(r)]) {
                    col.push_back(x(r, c));
                }
            }
            const double mean =
                kernels::sum(col.data(), col.size()) / std::max<double>(1.0, col.size());
            const double var = kernels::sum_sq_dev(col.data(), mean, col.size()) /
                               std::max<double>(1.0, col.size());
            model.channel_mean(c) = mean;
            model.channel_scale(c) = std::sqrt(std::max(var, 1e-12));
        }
        for (Eigen::Index r = 0; r < T; ++r) {
            if (null_mask && (*null_mask)[static_cast<std::size_t>(r)]) {
                continue; // separators keep their sentinel value
            }
            for (int c = 0; c < n; ++c) {
                series(r, c) = (x(r, c) - model.channel_mean(c)) / model.channel_scale(c);
            }
        }
    }

    const Mat windows = stack_windows(series, w);
    const Eigen::Index Tw = windows.rows();

    std::vector<std::uint8_t> window_null(static_cast<std::size_t>(Tw), 0);
    bool any_null = false;
    if (null_mask) {
        for (Eigen::Index t = 0; t < Tw; ++t) {
            for (int s = 0; s < w; ++s) {
                if ((*null_mask)[static_cast<std::size_t>(t + s)]) {
                    window_null[static_cast<std::size_t>(t)] = 1;
                    any_null = true;
                    break;
                }
            }
        }
    }

    const int K = cfg.num_clusters;
    const int Kint = K + (any_null ? 1 : 0);
    model.has_null_cluster = any_null;

    std::vector<int> valid_rows, null_rows;
    for (Eigen::Index t = 0; t < Tw; ++t) {
        (window_null[static_cast<std::size_t>(t)] ? null_rows : valid_rows)
            .push_back(static_cast<int>(t));
    }
    if (valid_rows.empty()) {
        throw DataError("fit: no non-null windows");
    }
    if (static_cast<int>(valid_rows.size()) < K) {
        throw DataError("fit: fewer valid windows than clusters");
    }

    // initial assignments: k-means++ over valid windows, null windows to the
    // dedicated last slot. Two feature views get seeded: plain windows catch
    // mean-separated clusters, moment features catch covariance-separated
    // ones; the TICC objective itself picks between them below.
    Rng rng(cfg.seed);
    auto labels_from = [&](const std::vector<int>& km) {
        std::vector<int> lab(static_cast<std::size_t>(Tw), any_null ? K : 0);
        for (std::size_t i = 0; i < valid_rows.size(); ++i) {
            lab[static_cast<std::size_t>(valid_rows[i])] = km[i];
        }
        return lab;
    };
    const std::vector<int> cand_plain =
        labels_from(kmeans_labels(plain_features(windows, valid_rows), K, rng));
    const std::vector<int> cand_moment =
        labels_from(kmeans_labels(init_features(windows, valid_rows), K, rng));
    std::vector<int> labels = cand_plain;

    // The null cluster's statistics come from the separator windows alone and
    // never change across iterations.
    ClusterModel null_cluster;
    if (any_null) {
        bool ok = true;
        null_cluster = fit_cluster(windows, null_rows, n, w, cfg, &ok);
        if (!ok) {
            model.warnings.push_back("ADMM did not converge for the null cluster");
        }
    }

    auto run_m_step = [&](const std::vector<int>& lab) {
        std::vector<std::vector<int>> members(static_cast<std::size_t>(Kint));
        for (int t : valid_rows) {
            members[static_cast<std::size_t>(lab[static_cast<std::size_t>(t)])].push_back(t);
        }
        model.clusters.assign(static_cast<std::size_t>(Kint), ClusterModel{});
        std::vector<std::future<void>> jobs;
        std::vector<std::string> notes(static_cast<std::size_t>(K));
        for (int k = 0; k < K; ++k) {
            jobs.push_back(std::async(std::launch::async, [&, k]() {
                const auto& mem = members[static_cast<std::size_t>(k)];
                if (mem.empty()) {
                    // inert placeholder; the repair pass feeds it next round
                    ClusterModel cm;
                    cm.mu = Vec::Zero(windows.cols());
                    cm.theta = Mat::Identity(windows.cols(), windows.cols());
                    cm.logdet_theta = 0.0;
                    cm.member_count = 0;
                    model.clusters[static_cast<std::size_t>(k)] = std::move(cm);
                    notes[static_cast<std::size_t>(k)] =
                        "cluster " + std::to_string(k) + " has no members";
                    return;
                }
                bool ok = true;
                model.clusters[static_cast<std::size_t>(k)] =
                    fit_cluster(windows, mem, n, w, cfg, &ok);
                if (!ok) {
                    notes[static_cast<std::size_t>(k)] =
                        "ADMM did not converge for cluster " + std::to_string(k);
                }
            }));
        }
        for (auto& j : jobs) {
            j.get();
        }
        for (const auto& note : notes) {
            if (!note.empty()) {
                model.warnings.push_back(note);
            }
        }
        if (any_null) {
            model.clusters[static_cast<std::size_t>(K)] = null_cluster;
        }
    };

    FitResult result;
    std::vector<int> repair_count(static_cast<std::size_t>(K), 0);

    {
        const auto warn_base = model.warnings;
        auto objective_of = [&](const std::vector<int>& lab) {
            run_m_step(lab);
            const AssignmentPath p = assign_dp(cost_matrix(model, windows), cfg.beta);
            return p.objective + model_penalty(model);
        };
        const double obj_plain = objective_of(cand_plain);
        model.warnings = warn_base;
        const double obj_moment = objective_of(cand_moment);
        model.warnings = warn_base;
        if (obj_moment < obj_plain) {
            labels = cand_moment;
        }
    }
    run_m_step(labels);

    for (int it = 0; it < cfg.em_max_iter; ++it) {
        result.em_iterations = it + 1;
        const Mat costs = cost_matrix(model, windows);
        AssignmentPath path = assign_dp(costs, cfg.beta);
        result.objective_trace.push_back(path.objective + model_penalty(model));

        std::vector<int> next = path.labels;

        // empty-cluster repair: hand the worst-fitting contiguous run of w
        // valid windows to any cluster that fell below the size floor
        bool repaired = false;
        std::vector<std::uint8_t> stolen(static_cast<std::size_t>(Tw), 0);
        for (int k = 0; k < K; ++k) {
            int count = 0;
            for (int t : valid_rows) {
                if (next[static_cast<std::size_t>(t)] == k) {
                    ++count;
                }
            }
            if (count >= cfg.min_cluster_size ||
                repair_count[static_cast<std::size_t>(k)] >= 2) {
                if (count < cfg.min_cluster_size) {
                    model.warnings.push_back("cluster " + std::to_string(k) +
                                             " stayed below min_cluster_size");
                }
                continue;
            }
            double worst = -std::numeric_limits<double>::infinity();
            int worst_start = -1;
            for (Eigen::Index s = 0; s + w <= Tw; ++s) {
                bool usable = true;
                double total = 0.0;
                for (int d = 0; d < w; ++d) {
                    const auto t = static_cast<std::size_t>(s + d);
                    if (window_null[t] || stolen[t] || next[t] == k) {
                        usable = false;
                        break;
                    }
                    total += costs(s + d, next[t]);
                }
                if (usable && total > worst) {
                    worst = total;
                    worst_start = static_cast<int>(s);
                }
            }
            if (worst_start >= 0) {
                for (int d = 0; d < w; ++d) {
                    next[static_cast<std::size_t>(worst_start + d)] = k;
                    stolen[static_cast<std::size_t>(worst_start + d)] = 1;
                }
                ++repair_count[static_cast<std::size_t>(k)];
                model.warnings.push_back("reseeded cluster " + std::to_string(k) +
                                         " at window " + std::to_string(worst_start));
                repaired = true;
            }
        }

        if (!repaired && next == labels) {
            break;
        }
        labels = std::move(next);
        run_m_step(labels);
    }

    // final path from the converged model, the same computation predict runs
    result.path = assign_dp(cost_matrix(model, windows), cfg.beta);
    result.model = std::move(model);
    return result;
}

AssignmentPath predict(const TiccModel& m, const Mat& x) {
    if (static_cast<int>(x.cols()) != m.n) {
        throw DataError("predict: series has " + std::to_string(x.cols()) +
                        " channels, model expects " + std::to_string(m.n));
    }
    Mat series = x;
    if (m.config.zscore) {
        for (Eigen::Index r = 0; r < series.rows(); ++r) {
            for (int c = 0; c < m.n; ++c) {
                series(r, c) = (x(r, c) - m.channel_mean(c)) / m.channel_scale(c);
            }
        }
    }
    const Mat windows = stack_windows(series, m.config.window);
    return assign_dp(cost_matrix(m, windows), m.config.beta);
}

namespace {

json config_to_json(const TiccConfig& cfg) {
    json j = {{"num_clusters", cfg.num_clusters},
              {"window", cfg.window},
              {"beta", cfg.beta},
              {"lambda", cfg.lambda},
              {"rho", cfg.rho},
              {"admm_eps_abs", cfg.admm_eps_abs},
              {"admm_eps_rel", cfg.admm_eps_rel},
              {"admm_max_iter", cfg.admm_max_iter},
              {"em_max_iter", cfg.em_max_iter},
              {"min_cluster_size", cfg.min_cluster_size},
              {"cov_ridge", cfg.cov_ridge},
              {"zscore", cfg.zscore},
              {"seed", cfg.seed}};
    if (cfg.lambda_matrix) {
        std::vector<double> flat(cfg.lambda_matrix->data(),
                                 cfg.lambda_matrix->data() + cfg.lambda_matrix->size());
        j["lambda_matrix"] = flat;
    }
    return j;
}

TiccConfig config_from_json(const json& j) {
    TiccConfig cfg;
    cfg.num_clusters = j.at("num_clusters").get<int>();
    cfg.window = j.at("window").get<int>();
    cfg.beta = j.at("beta").get<double>();
    cfg.lambda = j.at("lambda").get<double>();
    cfg.rho = j.at("rho").get<double>();
    cfg.admm_eps_abs = j.at("admm_eps_abs").get<double>();
    cfg.admm_eps_rel = j.at("admm_eps_rel").get<double>();
    cfg.admm_max_iter = j.at("admm_max_iter").get<int>();
    cfg.em_max_iter = j.at("em_max_iter").get<int>();
    cfg.min_cluster_size = j.at("min_cluster_size").get<int>();
    cfg.cov_ridge = j.at("cov_ridge").get<double>();
    cfg.zscore = j.at("zscore").get<bool>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("lambda_matrix")) {
        const auto flat = j["lambda_matrix"].get<std::vector<double>>();
        const auto nw = static_cast<Eigen::Index>(std::llround(std::sqrt(
            static_cast<double>(flat.size()))));
        Mat lm = Eigen::Map<const Mat>(flat.data(), nw, nw);
        cfg.lambda_matrix = std::move(lm);
    }
    return cfg;
}

} // namespace

void save_model_json(const TiccModel& m, const std::string& path) {
    json clusters = json::array();
    for (const auto& c : m.clusters) {
        std::vector<double> theta_flat(c.theta.data(), c.theta.data() + c.theta.size());
        std::vector<double> mu_flat(c.mu.data(), c.mu.data() + c.mu.size());
        clusters.push_back({{"mu", mu_flat},
                            {"theta", theta_flat},
                            {"logdet_theta", c.logdet_theta},
                            {"member_count", c.member_count}});
    }
    json doc = {{"format", "timeliner-ticc-model"},
                {"version", 1},
                {"n", m.n},
                {"channels", m.channels},
                {"has_null_cluster", m.has_null_cluster},
                {"config", config_to_json(m.config)},
                {"warnings", m.warnings},
                {"clusters", std::move(clusters)}};
    if (m.config.zscore) {
        doc["channel_mean"] = std::vector<double>(m.channel_mean.data(),
                                                  m.channel_mean.data() + m.channel_mean.size());
        doc["channel_scale"] = std::vector<double>(
            m.channel_scale.data(), m.channel_scale.data() + m.channel_scale.size());
    }
    std::ofstream os(path);
    if (!os) {
        throw DataError("cannot open for writing: " + path);
    }
    os << doc.dump(2) << "\n";
}

TiccModel load_model_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw DataError("model file not found: " + path);
    }
    json doc;
    try {
        is >> doc;
    } catch (const json::exception& e) {
        throw DataError(std::string("model parse error: ") + e.what());
    }
    TiccModel m;
    try {
        if (doc.at("format").get<std::string>() != "timeliner-ticc-model" ||
            doc.at("version").get<int>() != 1) {
            throw DataError("unsupported model file format in " + path);
        }
        m.n = doc.at("n").get<int>();
        m.channels = doc.at("channels").get<std::vector<std::string>>();
        m.has_null_cluster = doc.at("has_null_cluster").get<bool>();
        m.config = config_from_json(doc.at("config"));
        m.warnings = doc.at("warnings").get<std::vector<std::string>>();
        const Eigen::Index nw = static_cast<Eigen::Index>(m.n) * m.config.window;
        for (const json& jc : doc.at("clusters")) {
            ClusterModel c;
            const auto mu = jc.at("mu").get<std::vector<double>>();
            const auto theta = jc.at("theta").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(mu.size()) != nw ||
                static_cast<Eigen::Index>(theta.size()) != nw * nw) {
                throw DataError("model cluster dimensions are inconsistent in " + path);
            }
            c.mu = Eigen::Map<const Vec>(mu.data(), nw);
            c.theta = Eigen::Map<const Mat>(theta.data(), nw, nw);
            c.logdet_theta = jc.at("logdet_theta").get<double>();
            c.member_count = jc.at("member_count").get<int>();
            m.clusters.push_back(std::move(c));
        }
        if (m.config.zscore) {
            const auto mean = doc.at("channel_mean").get<std::vector<double>>();
            const auto scale = doc.at("channel_scale").get<std::vector<double>>();
            m.channel_mean = Eigen::Map<const Vec>(mean.data(),
                                                   static_cast<Eigen::Index>(mean.size()));
            m.channel_scale = Eigen::Map<const Vec>(
                scale.data(), static_cast<Eigen::Index>(scale.size()));
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("model schema error: ") + e.what());
    }
    return m;
}

} // namespace timeliner
