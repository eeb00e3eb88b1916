#include "timeliner/diffusion.hpp"

#include <cmath>

#include "timeliner/errors.hpp"
#include "timeliner/kernels.hpp"

namespace timeliner {

NoiseSchedule NoiseSchedule::linear(int steps, double one_minus_alpha_start,
                                    double one_minus_alpha_end) {
    if (steps < 1) {
        throw DataError("noise schedule needs at least one step");
    }
    std::vector<double> alphas(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0
                                       : static_cast<double>(i) /
                                             static_cast<double>(steps - 1);
        const double one_minus =
            one_minus_alpha_start + frac * (one_minus_alpha_end - one_minus_alpha_start);
        alphas[static_cast<std::size_t>(i)] = 1.0 - one_minus;
    }
    return from_alphas(std::move(alphas));
}

NoiseSchedule NoiseSchedule::from_alphas(std::vector<double> alphas) {
    if (alphas.empty()) {
        throw DataError("noise schedule needs at least one step");
    }
    NoiseSchedule s;
    s.alpha_bar_.resize(alphas.size() + 1);
    s.alpha_bar_[0] = 1.0;
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        if (!(alphas[i] > 0.0) || alphas[i] > 1.0) {
            throw DataError("alpha out of (0,1] at step " + std::to_string(i + 1));
        }
        s.alpha_bar_[i + 1] = s.alpha_bar_[i] * alphas[i];
    }
    s.alpha_ = std::move(alphas);
    return s;
}

double NoiseSchedule::alpha(int n) const {
    if (n < 1 || n > steps()) {
        throw DataError("schedule step " + std::to_string(n) + " out of [1," +
                        std::to_string(steps()) + "]");
    }
    return alpha_[static_cast<std::size_t>(n - 1)];
}

double NoiseSchedule::alpha_bar(int n) const {
    if (n < 0 || n > steps()) {
        throw DataError("schedule step " + std::to_string(n) + " out of [0," +
                        std::to_string(steps()) + "]");
    }
    return alpha_bar_[static_cast<std::size_t>(n)];
}

MotionSequence forward_noise(const MotionSequence& m0, int step, const NoiseSchedule& s,
                             const MotionSequence& eps) {
    if (step < 1 || step > s.steps()) {
        throw DataError("forward_noise: step " + std::to_string(step) + " out of [1," +
                        std::to_string(s.steps()) + "]");
    }
    if (eps.rows() != m0.rows() || eps.cols() != m0.cols()) {
        throw DataError("forward_noise: noise shape does not match signal");
    }
    const double ab = s.alpha_bar(step);
    MotionSequence out(m0.rows(), m0.cols());
    kernels::axpby(std::sqrt(ab), m0.data(), std::sqrt(1.0 - ab), eps.data(), out.data(),
                   static_cast<std::size_t>(m0.size()));
    return out;
}

double x0_loss(const MotionSequence& m0, const MotionSequence& m0_pred) {
    if (m0.rows() != m0_pred.rows() || m0.cols() != m0_pred.cols()) {
        throw DataError("x0_loss: shape mismatch");
    }
    if (m0.size() == 0) {
        throw DataError("x0_loss: empty sequence");
    }
    return kernels::sum_sq_diff(m0.data(), m0_pred.data(),
                                static_cast<std::size_t>(m0.size())) /
           static_cast<double>(m0.size());
}

bool ConditionMask::all_dropped() const {
    for (bool d : dropped) {
        if (!d) {
            return false;
        }
    }
    return true;
}

bool ConditionMask::all_kept() const {
    for (bool d : dropped) {
        if (d) {
            return false;
        }
    }
    return true;
}

ConditionMask sample_condition_mask(Rng& rng) {
    ConditionMask mask;
    const double u = rng.uniform();
    if (u < 0.1) {
        mask.dropped.fill(true);
    } else if (u < 0.2) {
        mask.dropped.fill(false);
    } else {
        for (int r = 0; r < kNumRegions; ++r) {
            mask.dropped[static_cast<std::size_t>(r)] = rng.bernoulli(0.5);
        }
    }
    return mask;
}

EncodedTimeline encode_timeline_condition(const AnnotationSequence& a,
                                          const ConditionMask& mask) {
    EncodedTimeline out(a.num_frames, kNumActions);
    for (int r = 0; r < kNumRegions; ++r) {
        const auto region = static_cast<RegionId>(r);
        const int off = region_offset(region);
        const int width = region_width(region);
        if (mask.dropped[static_cast<std::size_t>(r)]) {
            out.block(0, off, a.num_frames, width).setConstant(-1.0);
            continue;
        }
        for (int f = 0; f < a.num_frames; ++f) {
            for (int d = 0; d < width; ++d) {
                out(f, off + d) = a.values[static_cast<std::size_t>(f) * kNumActions +
                                           static_cast<std::size_t>(off + d)];
            }
        }
    }
    return out;
}

double denoising_loss(const MotionSequence& m0, int step, const NoiseSchedule& s,
                      const EncodedTimeline& condition, const Denoiser& g, Rng& rng) {
    MotionSequence eps(m0.rows(), m0.cols());
    for (Eigen::Index i = 0; i < eps.size(); ++i) {
        eps.data()[i] = rng.normal();
    }
    const MotionSequence noisy = forward_noise(m0, step, s, eps);
    return x0_loss(m0, g(noisy, step, condition));
}

} // namespace timeliner
