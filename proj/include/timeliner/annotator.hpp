#pragma once

#include <map>
#include <string>
#include <vector>

#include "timeliner/ticc.hpp"
#include "timeliner/timeline.hpp"

namespace timeliner {

/// What a cluster means: one of the region's actions, a resting face, or the
/// separator cluster.
struct ClusterLabel {
    enum class Kind { Action, Neutral, Null };
    Kind kind = Kind::Neutral;
    ActionCategory action = ActionCategory::BrowUp; // meaningful when Action

    static ClusterLabel make_action(ActionCategory a) { return {Kind::Action, a}; }
    static ClusterLabel make_neutral() { return {Kind::Neutral, ActionCategory::BrowUp}; }
    static ClusterLabel make_null() { return {Kind::Null, ActionCategory::BrowUp}; }

    bool operator==(const ClusterLabel&) const = default;
};

std::string cluster_label_name(const ClusterLabel& label);
ClusterLabel parse_cluster_label(const std::string& name, RegionId region);

/// Human-edited cluster -> label assignment for one region's model.
struct ClusterLabelMap {
    RegionId region = RegionId::Brow;
    std::map<int, ClusterLabel> labels; // total over the model's clusters
    std::string provenance;
};

void save_label_map(const ClusterLabelMap& m, const std::string& path);
ClusterLabelMap load_label_map(const std::string& path);

/// Hysteresis threshold on one channel. A positive enter_threshold arms the
/// action when the value rises to it and disarms below exit_threshold; a
/// negative enter_threshold mirrors that on the other side of zero.
struct ThresholdRule {
    std::string channel;
    ActionCategory action = ActionCategory::EyeClose;
    double enter_threshold = 0.0;
    double exit_threshold = 0.0; // same sign, |exit| <= |enter|
    int min_duration_frames = 1;
};

/// eyeBlink_L > 0.4 for closure; gaze/head axis thresholds are non-paper
/// defaults (gaze 0.25/0.20, yaw 0.15, pitch 0.12, exits at 80%, 3-frame
/// minimum hold).
std::vector<ThresholdRule> default_threshold_rules();

/// One region's slice of per-frame binary annotations.
struct RegionAnnotation {
    RegionId region = RegionId::Brow;
    int num_frames = 0;
    std::vector<std::uint8_t> values; // num_frames * region_width(region)

    static RegionAnnotation zeros(RegionId region, int num_frames);
    std::uint8_t at(int frame, ActionCategory a) const;
    void set(int frame, ActionCategory a, std::uint8_t v);
};

/// The cluster covering the largest share of separator frames. Warns through
/// `warnings` when that cluster also covers more than 5% of the data frames.
int identify_null_cluster(const std::vector<int>& frame_labels,
                          const std::vector<std::uint8_t>& null_mask, int cluster_count,
                          std::vector<std::string>* warnings = nullptr);

struct RepresentativeInterval {
    std::string clip_id;
    int start = 0;
    int end = 0; // clip-local, half open
    Eigen::Index global_start = 0;
};

/// The `count` longest maximal runs of a cluster over data frames, split at
/// clip boundaries and mapped back to clip coordinates.
std::vector<RepresentativeInterval> representative_intervals(
    const std::vector<int>& frame_labels, const ConcatenatedSeries& series, int cluster,
    int count, int min_len = 1);

/// Frame labels through the map. Throws DataError on an unmapped cluster.
std::vector<ClusterLabel> apply_label_map(const std::vector<int>& frame_labels,
                                          const ClusterLabelMap& m);

/// Rule-based annotation of one region from raw descriptor channels.
RegionAnnotation threshold_annotate(const Mat& series,
                                    const std::vector<std::string>& channel_names,
                                    const std::vector<ThresholdRule>& rules);

/// Merges region parts into 16-dim vectors (several parts may target the same
/// region; eye closure overlays squint/widen). Conflict violations indicate
/// an upstream bug and throw.
AnnotationSequence assemble_annotation(const std::vector<RegionAnnotation>& parts,
                                       int num_frames, double fps);

/// One TICC analysis: which region it annotates, which channels it reads, and
/// which actions its clusters may be labeled with.
struct TiccRegionConfig {
    RegionId region = RegionId::Brow;
    std::vector<std::string> channels;
    std::vector<ActionCategory> candidates;
    TiccConfig ticc;
};

struct PipelineConfig {
    std::vector<TiccRegionConfig> ticc_regions; // brow, eye aperture, mouth
    std::vector<ThresholdRule> threshold_rules; // closure, gaze, head
    int null_len = 100;
    double null_value = -1.0;

    /// Paper-style analysis setup: TICC on brow (K=9), eye squint/widen (K=8,
    /// blink channel excluded), mouth (K=9), beta=5 everywhere; thresholds for
    /// closure, gaze, and head pose.
    static PipelineConfig defaults();
};

struct ClusterSummary {
    int cluster = 0;
    bool is_null = false;
    long frame_count = 0; // data frames only
    Vec mean_values;      // per analyzed channel
    std::vector<RepresentativeInterval> representatives;
    std::vector<Mat> representative_traces; // channel slices for the plots
};

struct RegionInspection {
    RegionId region = RegionId::Brow;
    std::vector<std::string> channel_names;
    int null_cluster = -1;
    std::vector<ClusterSummary> clusters;
};

struct InspectionReport {
    std::vector<RegionInspection> regions;
};

/// Static HTML with per-cluster tables and inline SVG descriptor plots.
std::string inspection_report_html(const InspectionReport& r);

/// Raw per-region analysis kept alongside the result so labeling workflows
/// (skeleton maps, oracle auto-labels) can work without refitting.
struct RegionAnalysis {
    RegionId region = RegionId::Brow;
    std::vector<int> frame_labels; // over the concatenated rows
    int null_cluster = -1;
    ConcatenatedSeries concat;
};

struct PipelineResult {
    bool labels_required = false; // halted so a human can label clusters
    std::map<std::string, AnnotationSequence> annotations; // per clip id
    InspectionReport report;
    std::vector<std::pair<RegionId, TiccModel>> models;
    std::vector<RegionAnalysis> analyses;
    std::vector<std::string> warnings;
};

/// Full annotation pass: per TICC region, concatenate clips with null
/// separators, fit (or reuse) the model, label clusters; per threshold
/// region, scan each clip; assemble per-clip annotations. With any TICC
/// label map missing the pipeline stops after building the inspection
/// report so the maps can be written.
PipelineResult run_pipeline(const Corpus& corpus, const PipelineConfig& cfg,
                            const std::map<RegionId, ClusterLabelMap>& label_maps,
                            const std::map<RegionId, TiccModel>* models = nullptr);

/// Oracle-side stand-in for the human inspection step: each cluster takes the
/// majority planted label among its data frames (candidates + Neutral); the
/// separator cluster is labeled Null.
ClusterLabelMap label_map_from_reference(
    const TiccRegionConfig& rc, const std::vector<int>& frame_labels, int cluster_count,
    int null_cluster, const ConcatenatedSeries& series,
    const std::map<std::string, const Timeline*>& ground_truth);

} // namespace timeliner
