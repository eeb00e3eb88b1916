#pragma once

#include <map>
#include <string>
#include <vector>

#include "timeliner/ingest.hpp"
#include "timeliner/timeline.hpp"

namespace timeliner {

/// Per-region frame-classification scores. Classes are the region's actions
/// plus Neutral, scored one-vs-rest; classes absent from both prediction and
/// ground truth are left out of the macro average. For the eye region,
/// squint/widen/neutral counts skip frames whose ground truth marks the eyes
/// closed, and the closure F1 is also reported on its own.
struct RegionF1 {
    double macro_f1 = 1.0;
    std::map<std::string, double> per_class; // scored classes only
    double eye_close_f1 = -1.0;              // eye region only, else -1
    long scored_frames = 0;
};

RegionF1 macro_f1(const AnnotationSequence& pred, const AnnotationSequence& gt,
                  RegionId region);

/// Timeline Alignment Score: per-region macro-F1 between the rasterized input
/// timeline and the recovered annotation, averaged uniformly over the five
/// regions.
double tas(const Timeline& input, const AnnotationSequence& generated);

/// Pooled per-dimension population variance over all frames of all samples,
/// averaged across dimensions.
double variance_metric(const std::vector<Mat>& samples);

struct FidResult {
    double value = 0.0;
    bool regularized = false; // a covariance needed a ridge (too few points)
};

/// Frechet distance between Gaussian fits of two point sets (rows = points):
/// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^{1/2}), population covariances.
/// The cross term uses the symmetric product Sa^{1/2} Sb Sa^{1/2} with
/// negative eigenvalues clamped to zero.
FidResult fid(const Mat& a, const Mat& b);

/// Consecutive-frame differences; length T-1.
Mat delta_series(const Mat& c);

double snd(double fid_fm, double fid_dfm);

struct MetricsReport {
    std::map<std::string, double> region_macro_f1; // pooled over clips
    double eye_close_f1 = -1.0;
    double tas_mean = -1.0;
    int clip_count = 0;
    long frame_count = 0;
    double var_generated = -1.0;
    double var_reference = -1.0;
    double fid_fm = -1.0;
    double fid_dfm = -1.0;
    double snd_value = -1.0; // always fid_fm + fid_dfm when both present
    bool fid_regularized = false;
    long fid_points_generated = 0;
    long fid_points_reference = 0;
    std::string config_hash;
    std::string provenance;
};

std::string metrics_report_to_json(const MetricsReport& r);
MetricsReport metrics_report_from_json(const std::string& text);
std::string metrics_report_table(const MetricsReport& r);

} // namespace timeliner
