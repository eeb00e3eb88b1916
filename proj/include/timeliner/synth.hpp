#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "timeliner/ingest.hpp"
#include "timeliner/timeline.hpp"

namespace timeliner {

/// How one action shows up in the descriptor channels: target channels with
/// amplitude ranges, raised-cosine attack/decay ramps, and jitter levels.
struct ActionProfile {
    struct Target {
        std::string channel;
        double amp_lo = 0.0;
        double amp_hi = 0.0; // signed; negative for right/down axes
    };

    ActionCategory action = ActionCategory::BrowUp;
    std::vector<Target> targets;
    int attack_frames = 6;
    int decay_frames = 8;
    double sigma_hold = 0.03;
    // interval-length overrides used by synth_corpus (blinks are short)
    std::optional<int> interval_min_len;
    std::optional<double> interval_mean_len;
};

/// Secondary channel activation triggered by an action (people who smile also
/// squint a little). Bleed amplitudes stay below every annotation threshold.
struct CouplingRule {
    ActionCategory trigger = ActionCategory::Smile;
    std::string channel;
    double bleed = 0.0;
};

struct SynthConfig {
    std::map<ActionCategory, ActionProfile> profiles; // one per category
    std::vector<CouplingRule> couplings;
    std::vector<std::string> channels; // full emitted channel set
    double sigma_base = 0.02;
    double fps = 30.0;
    int interval_min_len = 24;
    double interval_mean_len = 48.0;
    std::uint64_t seed = 0;

    static SynthConfig defaults();
    void check() const; // throws DataError when a category lacks a profile
};

/// Renders a timeline into a descriptor series: neutral baseline noise plus
/// ramped per-interval activations plus coupling bleed. Deterministic for a
/// fixed (timeline, config, stream).
ClipSeries synth_motion(const Timeline& t, const SynthConfig& cfg,
                        std::uint64_t stream = 0);

struct SynthCorpus {
    Corpus corpus;
    std::vector<Timeline> ground_truth; // parallel to corpus.clips
};

/// Random valid timelines (conflict-set aware, geometric interval lengths)
/// rendered through synth_motion. action_rate is the per-frame chance that an
/// idle track starts an interval.
SynthCorpus synth_corpus(int num_clips, std::pair<int, int> clip_len_range,
                         double action_rate, const SynthConfig& cfg);

} // namespace timeliner
