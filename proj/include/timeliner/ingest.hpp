#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "timeliner/actions.hpp"

namespace timeliner {

/// Row-major so one frame is contiguous in memory.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

/// One clip's multivariate descriptor series, rows = frames. Blendshape
/// channels are nominally in [0,1], head angles in radians, gaze coefficients
/// unitless; none of that is enforced beyond finiteness.
struct ClipSeries {
    std::string clip_id;
    double fps = 30.0;
    std::vector<std::string> channel_names;
    Mat data; // T x n
};

/// Region -> ordered descriptor channel names.
struct RegionChannelMap {
    std::array<std::vector<std::string>, kNumRegions> channels;

    const std::vector<std::string>& for_region(RegionId r) const {
        return channels[static_cast<std::size_t>(region_index(r))];
    }
    std::vector<std::string>& for_region(RegionId r) {
        return channels[static_cast<std::size_t>(region_index(r))];
    }

    /// Left-side ARKit blendshapes for brow/eye/mouth, FaceVerse-style
    /// horizontal/vertical gaze coefficients, and pitch/yaw/roll head angles.
    /// Positive horizontal means the subject's left.
    static RegionChannelMap defaults();
};

struct Corpus {
    std::vector<ClipSeries> clips;
    RegionChannelMap channel_map;
    double fps = 30.0;
    std::string provenance;
};

/// Clips joined into one long sequence with null separator blocks between
/// them (no leading or trailing block). index_map covers every row exactly
/// once: source clip + local frame for data rows, clip_index = -1 for nulls.
struct ConcatenatedSeries {
    struct SourceRef {
        int clip_index = -1; // -1: null separator row
        int frame = 0;
    };

    Mat data; // total rows x k
    std::vector<std::uint8_t> null_mask;
    std::vector<SourceRef> index_map;
    std::vector<std::string> clip_ids;
    double null_value = -1.0;
};

ClipSeries load_descriptor_csv(const std::string& path, double fps);
void save_descriptor_csv(const ClipSeries& clip, const std::string& path);

/// Columns of `names`, in that order. Throws DataError on unknown names.
Mat select_channels(const ClipSeries& clip, const std::vector<std::string>& names);

/// Columns of the region's mapped channels, in map order.
Mat select_region_channels(const ClipSeries& clip, RegionId region,
                           const RegionChannelMap& map);

ConcatenatedSeries concatenate_with_null(const std::vector<Mat>& mats,
                                         const std::vector<std::string>& clip_ids,
                                         int null_len, double null_value = -1.0);

/// Inverse of the concatenation layout. Null rows map to nullopt;
/// out-of-range indices throw DataError.
std::optional<std::pair<std::string, int>> map_global_to_clip(
    const ConcatenatedSeries& s, Eigen::Index global_row);

/// Corpus manifest JSON: {"fps":30,"clips":[{"id":"...","path":"..."}],
/// "channel_map":{"Brow":[...],...}}. Clip paths are resolved relative to the
/// manifest's directory. A missing channel_map selects the defaults.
Corpus load_corpus(const std::string& manifest_path);
void save_corpus_manifest(const Corpus& corpus,
                          const std::vector<std::string>& clip_paths,
                          const std::string& manifest_path);

} // namespace timeliner
