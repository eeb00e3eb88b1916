#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

namespace timeliner {

/// The five facial regions. Ordinals are stable and define the layout of
/// per-frame annotation vectors.
enum class RegionId : int { Brow = 0, Eye = 1, Mouth = 2, Gaze = 3, Head = 4 };

inline constexpr int kNumRegions = 5;

/// The 16 non-neutral facial actions, in the fixed vector order used by
/// AnnotationSequence (Brow 2, Eye 3, Mouth 3, Gaze 4, Head 4).
enum class ActionCategory : int {
    BrowUp = 0,
    BrowDown = 1,
    EyeSquint = 2,
    EyeWiden = 3,
    EyeClose = 4,
    SoftSmile = 5,
    Smile = 6,
    MouthFrown = 7,
    GazeLeft = 8,
    GazeRight = 9,
    GazeUp = 10,
    GazeDown = 11,
    HeadLeft = 12,
    HeadRight = 13,
    HeadUp = 14,
    HeadDown = 15,
};

inline constexpr int kNumActions = 16;

constexpr int action_index(ActionCategory a) { return static_cast<int>(a); }
constexpr int region_index(RegionId r) { return static_cast<int>(r); }

std::string_view action_name(ActionCategory a);
std::string_view region_name(RegionId r);
std::optional<ActionCategory> parse_action(std::string_view name);
std::optional<RegionId> parse_region(std::string_view name);

/// Region owning the action (every action maps to exactly one region).
RegionId region_of(ActionCategory a);

/// The actions of one region, in vector-layout order.
std::span<const ActionCategory> actions_in(RegionId r);

/// First dimension of the region's slice in the 16-wide layout.
int region_offset(RegionId r);

/// Number of dimensions the region occupies (2/3/3/4/4).
int region_width(RegionId r);

/// Groups of mutually exclusive actions. A frame may activate at most one
/// action per set. EyeClose belongs to no set (closure may overlay squint or
/// widen), and horizontal/vertical gaze or head actions combine freely.
std::span<const std::span<const ActionCategory>> conflict_sets();

/// Conflict set containing `a`, or an empty span for EyeClose.
std::span<const ActionCategory> conflict_set_of(ActionCategory a);

} // namespace timeliner
