#pragma once

#include <array>
#include <functional>

#include "timeliner/ingest.hpp"
#include "timeliner/rng.hpp"
#include "timeliner/timeline.hpp"

namespace timeliner {

/// Facial motion coefficients, rows = frames (the signal the forward process
/// noises).
using MotionSequence = Mat;

/// Per-step alphas with cached cumulative products. alpha_bar(0) = 1 and the
/// sequence is non-increasing.
class NoiseSchedule {
public:
    /// Linear schedule in (1 - alpha) from `one_minus_alpha_start` to
    /// `one_minus_alpha_end` over `steps` steps.
    static NoiseSchedule linear(int steps = 1000, double one_minus_alpha_start = 1e-4,
                                double one_minus_alpha_end = 0.02);

    /// Schedule from explicit per-step alphas in (0, 1].
    static NoiseSchedule from_alphas(std::vector<double> alphas);

    int steps() const { return static_cast<int>(alpha_.size()); }
    double alpha(int n) const;     // n in [1, steps]
    double alpha_bar(int n) const; // n in [0, steps]

private:
    std::vector<double> alpha_;
    std::vector<double> alpha_bar_; // steps + 1 entries, [0] = 1
};

/// sqrt(alpha_bar_n) m0 + sqrt(1 - alpha_bar_n) eps, the marginal form of the
/// stepwise Gaussian chain. `eps` must match m0's shape.
MotionSequence forward_noise(const MotionSequence& m0, int step, const NoiseSchedule& s,
                             const MotionSequence& eps);

/// Mean squared error between the original signal and its prediction.
double x0_loss(const MotionSequence& m0, const MotionSequence& m0_pred);

/// Per-region keep/drop decisions for condition dropout, in region order.
struct ConditionMask {
    std::array<bool, kNumRegions> dropped{};

    bool all_dropped() const;
    bool all_kept() const;
    bool operator==(const ConditionMask&) const = default;
};

/// Condition-dropout sampler: probability 0.1 of dropping every region, 0.1
/// of keeping every region, otherwise each region drops independently with
/// probability 0.5.
ConditionMask sample_condition_mask(Rng& rng);

/// T x 16 condition matrix: kept regions carry the 0/1 annotation columns,
/// dropped regions' columns are -1 throughout.
using EncodedTimeline = Mat;

EncodedTimeline encode_timeline_condition(const AnnotationSequence& a,
                                          const ConditionMask& mask);

/// Contract of the (out-of-scope) denoiser network: predicts the original
/// signal from a noisy sequence, a step index, and the encoded condition.
using Denoiser =
    std::function<MotionSequence(const MotionSequence&, int, const EncodedTimeline&)>;

/// One draw of the denoising objective: noise m0 at a step, run the denoiser,
/// return the x0 reconstruction error.
double denoising_loss(const MotionSequence& m0, int step, const NoiseSchedule& s,
                      const EncodedTimeline& condition, const Denoiser& g, Rng& rng);

} // namespace timeliner
