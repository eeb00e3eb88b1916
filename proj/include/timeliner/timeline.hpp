#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "timeliner/actions.hpp"

namespace timeliner {

/// Half-open frame range [start, end) carrying one action.
struct Interval {
    ActionCategory action;
    int start = 0;
    int end = 0;

    bool operator==(const Interval&) const = default;
};

/// Multi-track list of action intervals over a fixed frame count. fps is
/// metadata only; all logic is frame-indexed.
struct Timeline {
    int num_frames = 0;
    double fps = 30.0;
    std::array<std::vector<Interval>, kNumRegions> tracks;

    std::vector<Interval>& track(RegionId r) { return tracks[static_cast<std::size_t>(region_index(r))]; }
    const std::vector<Interval>& track(RegionId r) const {
        return tracks[static_cast<std::size_t>(region_index(r))];
    }

    void add(Interval iv) { track(region_of(iv.action)).push_back(iv); }

    bool operator==(const Timeline&) const = default;
};

/// Per-frame 16-dimensional binary action vectors, row-major frames x 16.
struct AnnotationSequence {
    int num_frames = 0;
    double fps = 30.0;
    std::vector<std::uint8_t> values; // num_frames * kNumActions

    static AnnotationSequence zeros(int num_frames, double fps = 30.0);

    std::uint8_t at(int frame, ActionCategory a) const {
        return values[static_cast<std::size_t>(frame) * kNumActions +
                      static_cast<std::size_t>(action_index(a))];
    }
    void set(int frame, ActionCategory a, std::uint8_t v) {
        values[static_cast<std::size_t>(frame) * kNumActions +
               static_cast<std::size_t>(action_index(a))] = v;
    }

    bool operator==(const AnnotationSequence&) const = default;
};

/// One broken invariant. Violations are data, not errors.
struct Violation {
    std::string rule;   // "out of bounds", "conflict set", ...
    std::string detail; // names the interval or frame and what went wrong
};

std::vector<Violation> validate(const Timeline& t);
std::vector<Violation> validate(const AnnotationSequence& a);

/// Rasterizes intervals to per-frame binary vectors. A frame's dimension is 1
/// iff some interval with that action covers it. Throws DataError listing the
/// violations if `t` is invalid.
AnnotationSequence timeline_to_frames(const Timeline& t);

/// Run-length inverse of timeline_to_frames: maximal per-action runs become
/// intervals, sorted by start within each track. Throws DataError on
/// conflict-set violations in the input.
Timeline frames_to_timeline(const AnnotationSequence& a);

// --- serialization ---

std::string timeline_to_json(const Timeline& t);
Timeline timeline_from_json(const std::string& text);
void save_timeline_json(const Timeline& t, const std::string& path);
Timeline load_timeline_json(const std::string& path);

/// CSV with a 16-name header and one 0/1 row per frame. fps is not stored in
/// the CSV; supply it on load.
void save_annotation_csv(const AnnotationSequence& a, const std::string& path);
AnnotationSequence load_annotation_csv(const std::string& path, double fps);

} // namespace timeliner
