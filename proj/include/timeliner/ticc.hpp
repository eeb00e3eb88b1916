#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "timeliner/ingest.hpp"

namespace timeliner {

struct TiccConfig {
    int num_clusters = 5; // valid clusters; a null cluster is added internally
    int window = 3;       // frames per stacked window, 1..10
    double beta = 5.0;    // switching penalty
    double lambda = 0.05; // scalar l1 weight, off-diagonal entries only
    std::optional<Mat> lambda_matrix; // per-entry weights (nw x nw), overrides scalar
    double rho = 1.0;
    double admm_eps_abs = 1e-5;
    double admm_eps_rel = 1e-4;
    int admm_max_iter = 1000;
    int em_max_iter = 100;
    int min_cluster_size = 3;
    double cov_ridge = 1e-6; // added to each empirical covariance
    bool zscore = false;     // per-channel standardization before fitting
    std::uint64_t seed = 0;

    void check() const; // throws DataError on out-of-range fields
};

/// One cluster: mean plus block-Toeplitz precision over the stacked window.
struct ClusterModel {
    Mat theta;        // nw x nw, symmetric PD, Toeplitz-tied blocks
    Vec mu;           // nw
    double logdet_theta = 0.0;
    int member_count = 0;
};

struct TiccModel {
    std::vector<ClusterModel> clusters; // valid clusters first, null slot last
    TiccConfig config;
    int n = 0; // channels per frame
    std::vector<std::string> channels;
    bool has_null_cluster = false;
    Vec channel_mean, channel_scale; // populated when config.zscore
    std::vector<std::string> warnings;

    int cluster_count() const { return static_cast<int>(clusters.size()); }
    int null_cluster_index() const { return has_null_cluster ? cluster_count() - 1 : -1; }
};

struct AssignmentPath {
    std::vector<int> labels; // per window
    double objective = 0.0;  // sum of chosen costs + beta * switch count
};

/// Rows are forward-stacked windows [x_t; ...; x_{t+w-1}], one per t in
/// [0, T-w]. Throws DataError when T < w.
Mat stack_windows(const Mat& x, int w);

/// Gaussian log-density of one stacked window under a cluster:
/// -1/2 (x-mu)' theta (x-mu) + 1/2 logdet(theta) - nw/2 log(2 pi).
double log_likelihood(const Vec& xw, const ClusterModel& c);

/// Minimizes sum_t costs(t, path_t) + beta * #switches exactly. Ties break
/// toward the lower cluster index.
AssignmentPath assign_dp(const Mat& costs, double beta);

/// Tied-entry equivalence classes of an n*w block-Toeplitz matrix, as lists
/// of (row, col) positions. Every entry appears in exactly one class.
std::vector<std::vector<std::pair<int, int>>> block_toeplitz_classes(int n, int w);

struct GlassoResult {
    Mat theta;
    double logdet = 0.0;
    bool converged = true;
    int iterations = 0;
};

/// ADMM solve of min -logdet(T) + tr(S T) + (1/sample_count)*||lambda o T||_1
/// over block-Toeplitz positive definite T. On iteration exhaustion returns
/// the best iterate with converged=false.
GlassoResult solve_toeplitz_glasso(const Mat& S, int sample_count, int n, int w,
                                   const TiccConfig& cfg);

struct FitResult {
    TiccModel model;
    AssignmentPath path;
    int em_iterations = 0;
    std::vector<double> objective_trace; // one entry per EM iteration
};

/// EM loop: k-means++ initialized assignments, per-cluster Toeplitz glasso
/// M-steps, DP E-steps, until the path stops changing. When `null_mask` marks
/// separator rows, fitting uses num_clusters + 1 clusters internally; windows
/// touching a null row are kept out of the valid clusters' statistics.
FitResult fit(const Mat& x, const TiccConfig& cfg,
              const std::vector<std::uint8_t>* null_mask = nullptr);

/// One DP pass with frozen cluster models.
AssignmentPath predict(const TiccModel& m, const Mat& x);

/// Window labels to frame labels: frame t takes window t's label; the final
/// w-1 frames inherit the last window's label.
std::vector<int> expand_path_to_frames(const std::vector<int>& path, int num_frames,
                                       int w);

/// Per-window DP costs under a model. Shared by fit and predict so that
/// predicting on the training series reproduces the final fit path.
Mat cost_matrix(const TiccModel& m, const Mat& windows);

// Versioned JSON model file; doubles survive the round trip bit-exactly.
void save_model_json(const TiccModel& m, const std::string& path);
TiccModel load_model_json(const std::string& path);

} // namespace timeliner
