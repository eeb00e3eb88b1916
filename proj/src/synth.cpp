#include "timeliner/synth.hpp"

#include <algorithm>
#include <cmath>

#include "timeliner/errors.hpp"
#include "timeliner/rng.hpp"

namespace timeliner {

namespace {

constexpr double kPi = 3.14159265358979323846;

ActionProfile profile(ActionCategory action,
                      std::vector<ActionProfile::Target> targets) {
    ActionProfile p;
    p.action = action;
    p.targets = std::move(targets);
    return p;
}

/// Conflict axes used for random timeline generation: within an axis the
/// intervals never overlap, across axes they may.
const std::vector<std::vector<ActionCategory>>& generation_axes() {
    static const std::vector<std::vector<ActionCategory>> axes = {
        {ActionCategory::BrowUp, ActionCategory::BrowDown},
        {ActionCategory::EyeSquint, ActionCategory::EyeWiden},
        {ActionCategory::EyeClose},
        {ActionCategory::SoftSmile, ActionCategory::Smile, ActionCategory::MouthFrown},
        {ActionCategory::GazeLeft, ActionCategory::GazeRight},
        {ActionCategory::GazeUp, ActionCategory::GazeDown},
        {ActionCategory::HeadLeft, ActionCategory::HeadRight},
        {ActionCategory::HeadUp, ActionCategory::HeadDown},
    };
    return axes;
}

int geometric(Rng& rng, double mean) {
    if (mean <= 1.0) {
        return 1;
    }
    const double p = 1.0 / mean;
    double u = rng.uniform();
    while (u <= 0.0) {
        u = rng.uniform();
    }
    return 1 + static_cast<int>(std::floor(std::log(u) / std::log(1.0 - p)));
}

} // namespace

SynthConfig SynthConfig::defaults() {
    SynthConfig cfg;
    cfg.channels = {"browDown_L",   "browInnerUp",  "browOuterUp_L", "eyeBlink_L",
                    "eyeSquint_L",  "eyeWide_L",    "mouthSmile_L",  "mouthStretch_L",
                    "mouthFrown_L", "gazeHorizontal", "gazeVertical", "headPitch",
                    "headYaw",      "headRoll"};

    auto add = [&cfg](ActionProfile p) { cfg.profiles[p.action] = std::move(p); };

    add(profile(ActionCategory::BrowUp,
                {{"browInnerUp", 0.4, 0.8}, {"browOuterUp_L", 0.4, 0.8}}));
    add(profile(ActionCategory::BrowDown, {{"browDown_L", 0.4, 0.8}}));
    add(profile(ActionCategory::EyeSquint, {{"eyeSquint_L", 0.3, 0.7}}));
    add(profile(ActionCategory::EyeWiden, {{"eyeWide_L", 0.3, 0.7}}));
    {
        ActionProfile close = profile(ActionCategory::EyeClose, {{"eyeBlink_L", 0.7, 1.0}});
        close.attack_frames = 2;
        close.decay_frames = 3;
        close.interval_min_len = 4;
        close.interval_mean_len = 10.0;
        add(std::move(close));
    }
    add(profile(ActionCategory::SoftSmile, {{"mouthSmile_L", 0.15, 0.35}}));
    add(profile(ActionCategory::Smile, {{"mouthSmile_L", 0.5, 0.9}}));
    add(profile(ActionCategory::MouthFrown, {{"mouthFrown_L", 0.3, 0.7}}));
    // gaze/head amplitudes sit at least 2x above the annotation thresholds
    add(profile(ActionCategory::GazeLeft, {{"gazeHorizontal", 0.5, 0.7}}));
    add(profile(ActionCategory::GazeRight, {{"gazeHorizontal", -0.7, -0.5}}));
    add(profile(ActionCategory::GazeUp, {{"gazeVertical", 0.5, 0.7}}));
    add(profile(ActionCategory::GazeDown, {{"gazeVertical", -0.7, -0.5}}));
    add(profile(ActionCategory::HeadLeft, {{"headYaw", 0.30, 0.45}}));
    add(profile(ActionCategory::HeadRight, {{"headYaw", -0.45, -0.30}}));
    add(profile(ActionCategory::HeadUp, {{"headPitch", 0.24, 0.36}}));
    add(profile(ActionCategory::HeadDown, {{"headPitch", -0.36, -0.24}}));

    cfg.couplings = {{ActionCategory::Smile, "eyeSquint_L", 0.15},
                     {ActionCategory::BrowUp, "headPitch", 0.03}};
    return cfg;
}

void SynthConfig::check() const {
    for (int d = 0; d < kNumActions; ++d) {
        const auto a = static_cast<ActionCategory>(d);
        const auto it = profiles.find(a);
        if (it == profiles.end()) {
            throw DataError("synth config lacks a profile for " +
                            std::string(action_name(a)));
        }
        for (const auto& target : it->second.targets) {
            if (std::find(channels.begin(), channels.end(), target.channel) ==
                channels.end()) {
                throw DataError("profile for " + std::string(action_name(a)) +
                                " targets unknown channel " + target.channel);
            }
        }
    }
    for (const auto& c : couplings) {
        if (std::find(channels.begin(), channels.end(), c.channel) == channels.end()) {
            throw DataError("coupling targets unknown channel " + c.channel);
        }
    }
}

ClipSeries synth_motion(const Timeline& t, const SynthConfig& cfg, std::uint64_t stream) {
    cfg.check();
    {
        const auto violations = validate(t);
        if (!violations.empty()) {
            throw DataError("synth_motion: invalid timeline: " + violations.front().rule +
                            " (" + violations.front().detail + ")");
        }
    }
    Rng rng = Rng(cfg.seed).split(stream);
    const int T = t.num_frames;
    const auto n = static_cast<Eigen::Index>(cfg.channels.size());

    ClipSeries clip;
    clip.fps = cfg.fps;
    clip.channel_names = cfg.channels;
    clip.data = Mat::Zero(T, n);

    // neutral baseline noise everywhere
    for (Eigen::Index i = 0; i < clip.data.size(); ++i) {
        clip.data.data()[i] = rng.normal(0.0, cfg.sigma_base);
    }

    auto channel_col = [&](const std::string& name) {
        const auto it = std::find(cfg.channels.begin(), cfg.channels.end(), name);
        return static_cast<Eigen::Index>(it - cfg.channels.begin());
    };

    // intervals in deterministic order: region tracks, then list order
    for (const auto& track : t.tracks) {
        for (const Interval& iv : track) {
            const ActionProfile& prof = cfg.profiles.at(iv.action);
            const int attack = std::max(1, prof.attack_frames);
            const int decay = std::max(1, prof.decay_frames);

            // envelope over [start, end + decay)
            std::vector<double> env(static_cast<std::size_t>(iv.end - iv.start + decay), 0.0);
            double level = 0.0;
            for (int f = iv.start; f < iv.end; ++f) {
                const int k = f - iv.start;
                level = k < attack ? 0.5 * (1.0 - std::cos(kPi * (k + 1) / attack)) : 1.0;
                env[static_cast<std::size_t>(k)] = level;
            }
            for (int d = 0; d < decay; ++d) {
                env[static_cast<std::size_t>(iv.end - iv.start + d)] =
                    level * 0.5 * (1.0 + std::cos(kPi * (d + 1) / decay));
            }

            auto splash = [&](Eigen::Index col, double amplitude, bool jitter) {
                for (std::size_t k = 0; k < env.size(); ++k) {
                    const int f = iv.start + static_cast<int>(k);
                    if (f >= T) {
                        break;
                    }
                    double v = amplitude * env[k];
                    if (jitter && env[k] >= 1.0) {
                        v += rng.normal(0.0, prof.sigma_hold);
                    }
                    clip.data(f, col) += v;
                }
            };

            for (const auto& target : prof.targets) {
                const double amp = rng.uniform(target.amp_lo, target.amp_hi);
                splash(channel_col(target.channel), amp, true);
            }
            for (const auto& coupling : cfg.couplings) {
                if (coupling.trigger == iv.action) {
                    splash(channel_col(coupling.channel), coupling.bleed, false);
                }
            }
        }
    }
    return clip;
}

SynthCorpus synth_corpus(int num_clips, std::pair<int, int> clip_len_range,
                         double action_rate, const SynthConfig& cfg) {
    cfg.check();
    if (num_clips < 0 || clip_len_range.first < 1 ||
        clip_len_range.second < clip_len_range.first || action_rate < 0.0) {
        throw DataError("synth_corpus: bad parameters");
    }

    SynthCorpus out;
    out.corpus.fps = cfg.fps;
    out.corpus.channel_map = RegionChannelMap::defaults();
    out.corpus.provenance = "synthetic oracle corpus, seed " + std::to_string(cfg.seed);

    Rng master(cfg.seed);
    for (int i = 0; i < num_clips; ++i) {
        Rng rng = master.split(0x10000 + static_cast<std::uint64_t>(i));
        Timeline t;
        t.fps = cfg.fps;
        t.num_frames = static_cast<int>(
            rng.uniform_int(clip_len_range.first, clip_len_range.second));

        if (action_rate > 0.0) {
            const double mean_gap = 1.0 / action_rate;
            for (const auto& axis : generation_axes()) {
                int pos = geometric(rng, mean_gap);
                while (pos < t.num_frames) {
                    const ActionCategory action =
                        axis[static_cast<std::size_t>(rng.uniform_int(
                            0, static_cast<std::int64_t>(axis.size()) - 1))];
                    const ActionProfile& prof = cfg.profiles.at(action);
                    const int min_len = prof.interval_min_len.value_or(cfg.interval_min_len);
                    const double mean_len =
                        prof.interval_mean_len.value_or(cfg.interval_mean_len);
                    int len = min_len + geometric(rng, std::max(1.0, mean_len - min_len)) - 1;
                    len = std::min(len, t.num_frames - pos);
                    if (len >= std::max(2, min_len / 2)) {
                        t.add({action, pos, pos + len});
                    }
                    pos += len + geometric(rng, mean_gap);
                }
            }
        }

        ClipSeries clip = synth_motion(t, cfg, static_cast<std::uint64_t>(i));
        clip.clip_id = "synth" + std::to_string(i);
        out.corpus.clips.push_back(std::move(clip));
        out.ground_truth.push_back(std::move(t));
    }
    return out;
}

} // namespace timeliner
