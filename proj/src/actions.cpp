#include "timeliner/actions.hpp"

namespace timeliner {

namespace {

constexpr std::array<std::string_view, kNumActions> kActionNames = {
    "BrowUp",   "BrowDown", "EyeSquint",  "EyeWiden", "EyeClose", "SoftSmile",
    "Smile",    "MouthFrown", "GazeLeft", "GazeRight", "GazeUp",  "GazeDown",
    "HeadLeft", "HeadRight", "HeadUp",    "HeadDown",
};

constexpr std::array<std::string_view, kNumRegions> kRegionNames = {
    "Brow", "Eye", "Mouth", "Gaze", "Head",
};

// Offsets of each region's slice in the 16-wide layout.
constexpr std::array<int, kNumRegions + 1> kRegionOffsets = {0, 2, 5, 8, 12, 16};

constexpr std::array<ActionCategory, kNumActions> kAllActions = {
    ActionCategory::BrowUp,    ActionCategory::BrowDown,  ActionCategory::EyeSquint,
    ActionCategory::EyeWiden,  ActionCategory::EyeClose,  ActionCategory::SoftSmile,
    ActionCategory::Smile,     ActionCategory::MouthFrown, ActionCategory::GazeLeft,
    ActionCategory::GazeRight, ActionCategory::GazeUp,    ActionCategory::GazeDown,
    ActionCategory::HeadLeft,  ActionCategory::HeadRight, ActionCategory::HeadUp,
    ActionCategory::HeadDown,
};

constexpr std::array<ActionCategory, 2> kBrowSet = {ActionCategory::BrowUp,
                                                    ActionCategory::BrowDown};
constexpr std::array<ActionCategory, 2> kEyeAperture = {ActionCategory::EyeSquint,
                                                        ActionCategory::EyeWiden};
constexpr std::array<ActionCategory, 3> kMouthSet = {
    ActionCategory::SoftSmile, ActionCategory::Smile, ActionCategory::MouthFrown};
constexpr std::array<ActionCategory, 2> kGazeH = {ActionCategory::GazeLeft,
                                                  ActionCategory::GazeRight};
constexpr std::array<ActionCategory, 2> kGazeV = {ActionCategory::GazeUp,
                                                  ActionCategory::GazeDown};
constexpr std::array<ActionCategory, 2> kHeadH = {ActionCategory::HeadLeft,
                                                  ActionCategory::HeadRight};
constexpr std::array<ActionCategory, 2> kHeadV = {ActionCategory::HeadUp,
                                                  ActionCategory::HeadDown};

const std::array<std::span<const ActionCategory>, 7> kConflictSets = {
    std::span<const ActionCategory>(kBrowSet),
    std::span<const ActionCategory>(kEyeAperture),
    std::span<const ActionCategory>(kMouthSet),
    std::span<const ActionCategory>(kGazeH),
    std::span<const ActionCategory>(kGazeV),
    std::span<const ActionCategory>(kHeadH),
    std::span<const ActionCategory>(kHeadV),
};

} // namespace

std::string_view action_name(ActionCategory a) {
    return kActionNames[static_cast<std::size_t>(action_index(a))];
}

std::string_view region_name(RegionId r) {
    return kRegionNames[static_cast<std::size_t>(region_index(r))];
}

std::optional<ActionCategory> parse_action(std::string_view name) {
    for (int i = 0; i < kNumActions; ++i) {
        if (kActionNames[static_cast<std::size_t>(i)] == name) {
            return static_cast<ActionCategory>(i);
        }
    }
    return std::nullopt;
}

std::optional<RegionId> parse_region(std::string_view name) {
    for (int i = 0; i < kNumRegions; ++i) {
        if (kRegionNames[static_cast<std::size_t>(i)] == name) {
            return static_cast<RegionId>(i);
        }
    }
    return std::nullopt;
}

RegionId region_of(ActionCategory a) {
    const int idx = action_index(a);
    for (int r = 0; r < kNumRegions; ++r) {
        if (idx < kRegionOffsets[static_cast<std::size_t>(r + 1)]) {
            return static_cast<RegionId>(r);
        }
    }
    return RegionId::Head;
}

std::span<const ActionCategory> actions_in(RegionId r) {
    const int lo = kRegionOffsets[static_cast<std::size_t>(region_index(r))];
    const int hi = kRegionOffsets[static_cast<std::size_t>(region_index(r) + 1)];
    return std::span<const ActionCategory>(kAllActions.data() + lo,
                                           static_cast<std::size_t>(hi - lo));
}

int region_offset(RegionId r) {
    return kRegionOffsets[static_cast<std::size_t>(region_index(r))];
}

int region_width(RegionId r) {
    return kRegionOffsets[static_cast<std::size_t>(region_index(r) + 1)] -
           kRegionOffsets[static_cast<std::size_t>(region_index(r))];
}

std::span<const std::span<const ActionCategory>> conflict_sets() {
    return std::span<const std::span<const ActionCategory>>(kConflictSets);
}

std::span<const ActionCategory> conflict_set_of(ActionCategory a) {
    for (const auto& set : kConflictSets) {
        for (ActionCategory member : set) {
            if (member == a) {
                return set;
            }
        }
    }
    return {};
}

} // namespace timeliner
