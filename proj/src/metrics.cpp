#include "timeliner/metrics.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "timeliner/errors.hpp"
#include "timeliner/kernels.hpp"

namespace timeliner {

using nlohmann::json;

namespace {

bool region_all_zero(const AnnotationSequence& a, int frame, RegionId region) {
    const int off = region_offset(region);
    const int width = region_width(region);
    for (int d = 0; d < width; ++d) {
        // the eye Neutral class means no squint/widen; closure is scored apart
        if (region == RegionId::Eye &&
            static_cast<ActionCategory>(off + d) == ActionCategory::EyeClose) {
            continue;
        }
        if (a.values[static_cast<std::size_t>(frame) * kNumActions +
                     static_cast<std::size_t>(off + d)] != 0) {
            return false;
        }
    }
    return true;
}

struct Counts {
    long tp = 0, fp = 0, fn = 0;
    double f1() const {
        const long denom = 2 * tp + fp + fn;
        return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    }
    bool present() const { return tp + fp > 0 || tp + fn > 0; }
};

} // namespace

RegionF1 macro_f1(const AnnotationSequence& pred, const AnnotationSequence& gt,
                  RegionId region) {
    if (pred.num_frames != gt.num_frames) {
        throw DataError("macro_f1: frame counts differ (" +
                        std::to_string(pred.num_frames) + " vs " +
                        std::to_string(gt.num_frames) + ")");
    }
    RegionF1 out;
    const auto actions = actions_in(region);
    const int num_classes = static_cast<int>(actions.size()) + 1; // + Neutral
    std::vector<Counts> counts(static_cast<std::size_t>(num_classes));

    for (int f = 0; f < pred.num_frames; ++f) {
        const bool gt_closed =
            region == RegionId::Eye && gt.at(f, ActionCategory::EyeClose) != 0;
        for (int c = 0; c < num_classes; ++c) {
            const bool is_neutral = c == static_cast<int>(actions.size());
            const bool is_closure =
                !is_neutral && actions[static_cast<std::size_t>(c)] == ActionCategory::EyeClose;
            // closed-eye frames only score the closure class itself
            if (gt_closed && !is_closure) {
                continue;
            }
            bool p, g;
            if (is_neutral) {
                p = region_all_zero(pred, f, region);
                g = region_all_zero(gt, f, region);
            } else {
                const ActionCategory a = actions[static_cast<std::size_t>(c)];
                p = pred.at(f, a) != 0;
                g = gt.at(f, a) != 0;
            }
            auto& k = counts[static_cast<std::size_t>(c)];
            if (p && g) {
                ++k.tp;
            } else if (p && !g) {
                ++k.fp;
            } else if (!p && g) {
                ++k.fn;
            }
        }
    }

    double total = 0.0;
    int included = 0;
    for (int c = 0; c < num_classes; ++c) {
        const auto& k = counts[static_cast<std::size_t>(c)];
        const bool is_neutral = c == static_cast<int>(actions.size());
        const std::string name =
            is_neutral ? "Neutral"
                       : std::string(action_name(actions[static_cast<std::size_t>(c)]));
        if (!is_neutral && actions[static_cast<std::size_t>(c)] == ActionCategory::EyeClose) {
            // closure is its own binary score, not part of the eye macro
            out.eye_close_f1 = k.f1();
            if (k.present()) {
                out.per_class[name] = k.f1();
            }
            continue;
        }
        if (k.present()) {
            out.per_class[name] = k.f1();
            total += k.f1();
            ++included;
        }
    }
    out.macro_f1 = included == 0 ? 1.0 : total / included;
    out.scored_frames = pred.num_frames;
    return out;
}

double tas(const Timeline& input, const AnnotationSequence& generated) {
    const AnnotationSequence ref = timeline_to_frames(input);
    if (ref.num_frames != generated.num_frames) {
        throw DataError("tas: frame counts differ");
    }
    double total = 0.0;
    for (int r = 0; r < kNumRegions; ++r) {
        total += macro_f1(generated, ref, static_cast<RegionId>(r)).macro_f1;
    }
    return total / kNumRegions;
}

double variance_metric(const std::vector<Mat>& samples) {
    if (samples.empty()) {
        throw DataError("variance_metric: no samples");
    }
    const Eigen::Index d = samples[0].cols();
    for (const Mat& s : samples) {
        if (s.cols() != d) {
            throw DataError("variance_metric: dimension mismatch");
        }
    }
    double total_var = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) {
        // Welford: exact zero on constant input, stable otherwise
        double mean = 0.0, m2 = 0.0;
        long count = 0;
        for (const Mat& s : samples) {
            for (Eigen::Index r = 0; r < s.rows(); ++r) {
                ++count;
                const double x = s(r, c);
                const double delta = x - mean;
                mean += delta / static_cast<double>(count);
                m2 += delta * (x - mean);
            }
        }
        if (count == 0) {
            throw DataError("variance_metric: samples contain no frames");
        }
        total_var += m2 / static_cast<double>(count);
    }
    return total_var / static_cast<double>(d);
}

namespace {

struct Gaussian {
    Vec mean;
    Mat cov;
    bool regularized = false;
};

Gaussian fit_gaussian(const Mat& points) {
    const Eigen::Index n = points.rows();
    const Eigen::Index d = points.cols();
    Gaussian g;
    g.mean = points.colwise().mean().transpose();
    g.cov = Mat::Zero(d, d);
    for (Eigen::Index r = 0; r < n; ++r) {
        Vec dev = points.row(r).transpose() - g.mean;
        g.cov.noalias() += dev * dev.transpose();
    }
    g.cov /= static_cast<double>(n); // population convention
    if (n < d + 1) {
        g.cov += 1e-6 * Mat::Identity(d, d);
        g.regularized = true;
    }
    return g;
}

Mat psd_sqrt(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(m);
    Vec lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace

FidResult fid(const Mat& a, const Mat& b) {
    if (a.rows() == 0 || b.rows() == 0) {
        throw DataError("fid: empty point set");
    }
    if (a.cols() != b.cols()) {
        throw DataError("fid: dimension mismatch (" + std::to_string(a.cols()) + " vs " +
                        std::to_string(b.cols()) + ")");
    }
    const Gaussian ga = fit_gaussian(a);
    const Gaussian gb = fit_gaussian(b);

    const double mean_term = kernels::sum_sq_diff(
        ga.mean.data(), gb.mean.data(), static_cast<std::size_t>(ga.mean.size()));

    const Mat root_a = psd_sqrt(ga.cov);
    Mat inner = root_a * gb.cov * root_a;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(inner);
    const double trace_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    FidResult out;
    out.value = mean_term + ga.cov.trace() + gb.cov.trace() - 2.0 * trace_sqrt;
    out.regularized = ga.regularized || gb.regularized;
    return out;
}

Mat delta_series(const Mat& c) {
    if (c.rows() < 2) {
        throw DataError("delta_series: need at least 2 frames");
    }
    return c.bottomRows(c.rows() - 1) - c.topRows(c.rows() - 1);
}

double snd(double fid_fm, double fid_dfm) { return fid_fm + fid_dfm; }

std::string metrics_report_to_json(const MetricsReport& r) {
    json doc = {{"region_macro_f1", r.region_macro_f1},
                {"eye_close_f1", r.eye_close_f1},
                {"tas_mean", r.tas_mean},
                {"clip_count", r.clip_count},
                {"frame_count", r.frame_count},
                {"var_generated", r.var_generated},
                {"var_reference", r.var_reference},
                {"fid_fm", r.fid_fm},
                {"fid_dfm", r.fid_dfm},
                {"snd", r.snd_value},
                {"fid_regularized", r.fid_regularized},
                {"fid_points_generated", r.fid_points_generated},
                {"fid_points_reference", r.fid_points_reference},
                {"config_hash", r.config_hash},
                {"provenance", r.provenance}};
    return doc.dump(2);
}

MetricsReport metrics_report_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("metrics report parse error: ") + e.what());
    }
    MetricsReport r;
    try {
        r.region_macro_f1 = doc.at("region_macro_f1").get<std::map<std::string, double>>();
        r.eye_close_f1 = doc.at("eye_close_f1").get<double>();
        r.tas_mean = doc.at("tas_mean").get<double>();
        r.clip_count = doc.at("clip_count").get<int>();
        r.frame_count = doc.at("frame_count").get<long>();
        r.var_generated = doc.at("var_generated").get<double>();
        r.var_reference = doc.at("var_reference").get<double>();
        r.fid_fm = doc.at("fid_fm").get<double>();
        r.fid_dfm = doc.at("fid_dfm").get<double>();
        r.snd_value = doc.at("snd").get<double>();
        r.fid_regularized = doc.at("fid_regularized").get<bool>();
        r.fid_points_generated = doc.at("fid_points_generated").get<long>();
        r.fid_points_reference = doc.at("fid_points_reference").get<long>();
        r.config_hash = doc.at("config_hash").get<std::string>();
        r.provenance = doc.at("provenance").get<std::string>();
    } catch (const json::exception& e) {
        throw DataError(std::string("metrics report schema error: ") + e.what());
    }
    return r;
}

std::string metrics_report_table(const MetricsReport& r) {
    std::ostringstream os;
    os.precision(4);
    os << std::fixed;
    os << "metric                value\n";
    os << "--------------------  ----------\n";
    for (const auto& [region, score] : r.region_macro_f1) {
        os << "macro_f1[" << region << "]";
        for (std::size_t i = region.size(); i < 11; ++i) {
            os << ' ';
        }
        os << "  " << score << "\n";
    }
    if (r.eye_close_f1 >= 0.0) {
        os << "eye_close_f1          " << r.eye_close_f1 << "\n";
    }
    if (r.tas_mean >= 0.0) {
        os << "tas                   " << r.tas_mean << "\n";
    }
    if (r.var_generated >= 0.0) {
        os << "var_generated         " << r.var_generated << "\n";
    }
    if (r.var_reference >= 0.0) {
        os << "var_reference         " << r.var_reference << "\n";
    }
    if (r.fid_fm >= 0.0) {
        os << "fid_fm                " << r.fid_fm << "\n";
        os << "fid_dfm               " << r.fid_dfm << "\n";
        os << "snd                   " << r.snd_value << "\n";
    }
    os << "clips                 " << r.clip_count << "\n";
    os << "frames                " << r.frame_count << "\n";
    return os.str();
}

} // namespace timeliner
