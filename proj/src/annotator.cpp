#include "timeliner/annotator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "timeliner/errors.hpp"

namespace timeliner {

using nlohmann::json;

std::string cluster_label_name(const ClusterLabel& label) {
    switch (label.kind) {
        case ClusterLabel::Kind::Neutral: return "Neutral";
        case ClusterLabel::Kind::Null: return "Null";
        case ClusterLabel::Kind::Action: return std::string(action_name(label.action));
    }
    return "Neutral";
}

ClusterLabel parse_cluster_label(const std::string& name, RegionId region) {
    if (name == "Neutral") {
        return ClusterLabel::make_neutral();
    }
    if (name == "Null") {
        return ClusterLabel::make_null();
    }
    const auto action = parse_action(name);
    if (!action) {
        throw DataError("unknown cluster label '" + name + "'");
    }
    if (region_of(*action) != region) {
        throw DataError("label " + name + " does not belong to region " +
                        std::string(region_name(region)));
    }
    return ClusterLabel::make_action(*action);
}

void save_label_map(const ClusterLabelMap& m, const std::string& path) {
    json labels = json::object();
    for (const auto& [cluster, label] : m.labels) {
        labels[std::to_string(cluster)] = cluster_label_name(label);
    }
    const json doc = {{"region", std::string(region_name(m.region))},
                      {"labels", std::move(labels)},
                      {"provenance", m.provenance}};
    std::ofstream os(path);
    if (!os) {
        throw DataError("cannot open for writing: " + path);
    }
    os << doc.dump(2) << "\n";
}

ClusterLabelMap load_label_map(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw DataError("label map not found: " + path);
    }
    json doc;
    try {
        is >> doc;
    } catch (const json::exception& e) {
        throw DataError(std::string("label map parse error: ") + e.what());
    }
    ClusterLabelMap m;
    try {
        const auto region = parse_region(doc.at("region").get<std::string>());
        if (!region) {
            throw DataError("label map names an unknown region in " + path);
        }
        m.region = *region;
        if (doc.contains("provenance")) {
            m.provenance = doc["provenance"].get<std::string>();
        }
        for (auto it = doc.at("labels").begin(); it != doc.at("labels").end(); ++it) {
            const int cluster = std::stoi(it.key());
            m.labels[cluster] = parse_cluster_label(it.value().get<std::string>(), m.region);
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("label map schema error: ") + e.what());
    }
    return m;
}

std::vector<ThresholdRule> default_threshold_rules() {
    return {
        {"eyeBlink_L", ActionCategory::EyeClose, 0.4, 0.4, 1},
        {"gazeHorizontal", ActionCategory::GazeLeft, 0.25, 0.20, 3},
        {"gazeHorizontal", ActionCategory::GazeRight, -0.25, -0.20, 3},
        {"gazeVertical", ActionCategory::GazeUp, 0.25, 0.20, 3},
        {"gazeVertical", ActionCategory::GazeDown, -0.25, -0.20, 3},
        {"headYaw", ActionCategory::HeadLeft, 0.15, 0.12, 3},
        {"headYaw", ActionCategory::HeadRight, -0.15, -0.12, 3},
        {"headPitch", ActionCategory::HeadUp, 0.12, 0.096, 3},
        {"headPitch", ActionCategory::HeadDown, -0.12, -0.096, 3},
    };
}

RegionAnnotation RegionAnnotation::zeros(RegionId region, int num_frames) {
    RegionAnnotation a;
    a.region = region;
    a.num_frames = num_frames;
    a.values.assign(static_cast<std::size_t>(num_frames) *
                        static_cast<std::size_t>(region_width(region)),
                    0);
    return a;
}

std::uint8_t RegionAnnotation::at(int frame, ActionCategory a) const {
    const int local = action_index(a) - region_offset(region);
    return values[static_cast<std::size_t>(frame) *
                      static_cast<std::size_t>(region_width(region)) +
                  static_cast<std::size_t>(local)];
}

void RegionAnnotation::set(int frame, ActionCategory a, std::uint8_t v) {
    const int local = action_index(a) - region_offset(region);
    values[static_cast<std::size_t>(frame) * static_cast<std::size_t>(region_width(region)) +
           static_cast<std::size_t>(local)] = v;
}

int identify_null_cluster(const std::vector<int>& frame_labels,
                          const std::vector<std::uint8_t>& null_mask, int cluster_count,
                          std::vector<std::string>* warnings) {
    if (frame_labels.size() != null_mask.size()) {
        throw DataError("identify_null_cluster: mask length mismatch");
    }
    std::vector<long> null_hits(static_cast<std::size_t>(cluster_count), 0);
    std::vector<long> data_hits(static_cast<std::size_t>(cluster_count), 0);
    long null_total = 0, data_total = 0;
    for (std::size_t f = 0; f < frame_labels.size(); ++f) {
        const int c = frame_labels[f];
        if (c < 0 || c >= cluster_count) {
            throw DataError("identify_null_cluster: label out of range");
        }
        if (null_mask[f]) {
            ++null_hits[static_cast<std::size_t>(c)];
            ++null_total;
        } else {
            ++data_hits[static_cast<std::size_t>(c)];
            ++data_total;
        }
    }
    if (null_total == 0) {
        throw DataError("identify_null_cluster: no null frames in the sequence");
    }
    int best = 0;
    for (int c = 1; c < cluster_count; ++c) {
        if (null_hits[static_cast<std::size_t>(c)] > null_hits[static_cast<std::size_t>(best)]) {
            best = c;
        }
    }
    if (warnings && data_total > 0) {
        const double share = static_cast<double>(data_hits[static_cast<std::size_t>(best)]) /
                             static_cast<double>(data_total);
        if (share > 0.05) {
            std::ostringstream os;
            os << "null cluster " << best << " also covers " << std::round(share * 1000) / 10
               << "% of data frames";
            warnings->push_back(os.str());
        }
    }
    return best;
}

std::vector<RepresentativeInterval> representative_intervals(
    const std::vector<int>& frame_labels, const ConcatenatedSeries& series, int cluster,
    int count, int min_len) {
    if (static_cast<Eigen::Index>(frame_labels.size()) != series.data.rows()) {
        throw DataError("representative_intervals: label/series length mismatch");
    }
    struct Run {
        Eigen::Index start = 0;
        int len = 0;
        int clip_index = -1;
        int local_start = 0;
    };
    std::vector<Run> runs;
    Run current;
    auto flush = [&]() {
        if (current.len >= std::max(1, min_len)) {
            runs.push_back(current);
        }
        current = Run{};
    };
    for (Eigen::Index g = 0; g < series.data.rows(); ++g) {
        const auto& ref = series.index_map[static_cast<std::size_t>(g)];
        const bool match = ref.clip_index >= 0 &&
                           frame_labels[static_cast<std::size_t>(g)] == cluster;
        const bool continues = match && current.len > 0 &&
                               ref.clip_index == current.clip_index &&
                               ref.frame == current.local_start + current.len;
        if (continues) {
            ++current.len;
        } else {
            flush();
            if (match) {
                current = {g, 1, ref.clip_index, ref.frame};
            }
        }
    }
    flush();

    std::sort(runs.begin(), runs.end(), [](const Run& a, const Run& b) {
        return a.len != b.len ? a.len > b.len : a.start < b.start;
    });
    std::vector<RepresentativeInterval> out;
    for (const Run& r : runs) {
        if (static_cast<int>(out.size()) >= count) {
            break;
        }
        out.push_back({series.clip_ids[static_cast<std::size_t>(r.clip_index)],
                       r.local_start, r.local_start + r.len, r.start});
    }
    return out;
}

std::vector<ClusterLabel> apply_label_map(const std::vector<int>& frame_labels,
                                          const ClusterLabelMap& m) {
    std::vector<ClusterLabel> out(frame_labels.size());
    for (std::size_t f = 0; f < frame_labels.size(); ++f) {
        const auto it = m.labels.find(frame_labels[f]);
        if (it == m.labels.end()) {
            throw DataError("apply_label_map: cluster " + std::to_string(frame_labels[f]) +
                            " has no label in the " +
                            std::string(region_name(m.region)) + " map");
        }
        out[f] = it->second;
    }
    return out;
}

RegionAnnotation threshold_annotate(const Mat& series,
                                    const std::vector<std::string>& channel_names,
                                    const std::vector<ThresholdRule>& rules) {
    if (rules.empty()) {
        throw DataError("threshold_annotate: no rules");
    }
    const RegionId region = region_of(rules[0].action);
    const int T = static_cast<int>(series.rows());
    RegionAnnotation out = RegionAnnotation::zeros(region, T);

    for (const ThresholdRule& rule : rules) {
        if (region_of(rule.action) != region) {
            throw DataError("threshold_annotate: rules span regions");
        }
        if (rule.enter_threshold == 0.0 || !std::isfinite(rule.enter_threshold) ||
            !std::isfinite(rule.exit_threshold) ||
            std::signbit(rule.enter_threshold) != std::signbit(rule.exit_threshold) ||
            std::abs(rule.exit_threshold) > std::abs(rule.enter_threshold) ||
            rule.min_duration_frames < 1) {
            throw DataError("threshold_annotate: malformed rule for " +
                            std::string(action_name(rule.action)));
        }
        const auto it = std::find(channel_names.begin(), channel_names.end(), rule.channel);
        if (it == channel_names.end()) {
            throw DataError("threshold_annotate: unknown channel " + rule.channel);
        }
        const auto col = static_cast<Eigen::Index>(it - channel_names.begin());
        const bool positive = rule.enter_threshold > 0.0;

        bool active = false;
        int run_start = 0;
        auto commit = [&](int run_end) {
            if (run_end - run_start >= rule.min_duration_frames) {
                for (int f = run_start; f < run_end; ++f) {
                    out.set(f, rule.action, 1);
                }
            }
        };
        for (int f = 0; f < T; ++f) {
            const double v = series(f, col);
            if (!active) {
                const bool enter = positive ? v >= rule.enter_threshold
                                            : v <= rule.enter_threshold;
                if (enter) {
                    active = true;
                    run_start = f;
                }
            } else {
                const bool leave = positive ? v < rule.exit_threshold
                                            : v > rule.exit_threshold;
                if (leave) {
                    commit(f);
                    active = false;
                    // a frame that drops one side may immediately arm the
                    // opposite-sign rule; this frame stays inactive for ours
                }
            }
        }
        if (active) {
            commit(T);
        }
    }
    return out;
}

AnnotationSequence assemble_annotation(const std::vector<RegionAnnotation>& parts,
                                       int num_frames, double fps) {
    AnnotationSequence a = AnnotationSequence::zeros(num_frames, fps);
    for (const RegionAnnotation& part : parts) {
        if (part.num_frames != num_frames) {
            throw DataError("assemble_annotation: part for region " +
                            std::string(region_name(part.region)) + " has " +
                            std::to_string(part.num_frames) + " frames, expected " +
                            std::to_string(num_frames));
        }
        const int off = region_offset(part.region);
        const int width = region_width(part.region);
        for (int f = 0; f < num_frames; ++f) {
            for (int d = 0; d < width; ++d) {
                if (part.values[static_cast<std::size_t>(f) * static_cast<std::size_t>(width) +
                                static_cast<std::size_t>(d)]) {
                    a.set(f, static_cast<ActionCategory>(off + d), 1);
                }
            }
        }
    }
    const auto violations = validate(a);
    if (!violations.empty()) {
        throw DataError("assemble_annotation produced a conflict: " +
                        violations.front().detail);
    }
    return a;
}

PipelineConfig PipelineConfig::defaults() {
    PipelineConfig cfg;

    TiccRegionConfig brow;
    brow.region = RegionId::Brow;
    brow.channels = {"browDown_L", "browInnerUp", "browOuterUp_L"};
    brow.candidates = {ActionCategory::BrowUp, ActionCategory::BrowDown};
    brow.ticc.num_clusters = 9;
    brow.ticc.beta = 5.0;

    // closure is thresholded separately, so the aperture analysis skips the
    // blink channel
    TiccRegionConfig eye;
    eye.region = RegionId::Eye;
    eye.channels = {"eyeSquint_L", "eyeWide_L"};
    eye.candidates = {ActionCategory::EyeSquint, ActionCategory::EyeWiden};
    eye.ticc.num_clusters = 8;
    eye.ticc.beta = 5.0;

    TiccRegionConfig mouth;
    mouth.region = RegionId::Mouth;
    mouth.channels = {"mouthSmile_L", "mouthStretch_L", "mouthFrown_L"};
    mouth.candidates = {ActionCategory::SoftSmile, ActionCategory::Smile,
                        ActionCategory::MouthFrown};
    mouth.ticc.num_clusters = 9;
    mouth.ticc.beta = 5.0;

    cfg.ticc_regions = {std::move(brow), std::move(eye), std::move(mouth)};
    cfg.threshold_rules = default_threshold_rules();
    return cfg;
}

PipelineResult run_pipeline(const Corpus& corpus, const PipelineConfig& cfg,
                            const std::map<RegionId, ClusterLabelMap>& label_maps,
                            const std::map<RegionId, TiccModel>* models) {
    if (corpus.clips.empty()) {
        throw DataError("run_pipeline: empty corpus");
    }
    PipelineResult result;

    std::vector<std::string> clip_ids;
    for (const auto& clip : corpus.clips) {
        clip_ids.push_back(clip.clip_id);
    }
    std::map<std::string, std::vector<RegionAnnotation>> parts;

    for (const TiccRegionConfig& rc : cfg.ticc_regions) {
        std::vector<Mat> mats;
        for (const auto& clip : corpus.clips) {
            mats.push_back(select_channels(clip, rc.channels));
        }
        const ConcatenatedSeries concat =
            concatenate_with_null(mats, clip_ids, cfg.null_len, cfg.null_value);
        const bool has_nulls = corpus.clips.size() > 1 && cfg.null_len > 0;

        TiccModel model;
        AssignmentPath path;
        if (models && models->count(rc.region)) {
            model = models->at(rc.region);
            if (model.channels != rc.channels) {
                throw DataError("run_pipeline: model for " +
                                std::string(region_name(rc.region)) +
                                " was fitted on different channels");
            }
            path = predict(model, concat.data);
        } else {
            FitResult fr = fit(concat.data, rc.ticc, has_nulls ? &concat.null_mask : nullptr);
            model = std::move(fr.model);
            path = std::move(fr.path);
            model.channels = rc.channels;
        }
        for (const auto& w : model.warnings) {
            result.warnings.push_back(std::string(region_name(rc.region)) + ": " + w);
        }

        const auto frame_labels = expand_path_to_frames(
            path.labels, static_cast<int>(concat.data.rows()), model.config.window);

        int null_cluster = -1;
        if (has_nulls) {
            null_cluster = identify_null_cluster(frame_labels, concat.null_mask,
                                                 model.cluster_count(), &result.warnings);
        }

        // inspection entry, also used to seed human label maps
        RegionInspection inspection;
        inspection.region = rc.region;
        inspection.channel_names = rc.channels;
        inspection.null_cluster = null_cluster;
        for (int c = 0; c < model.cluster_count(); ++c) {
            ClusterSummary cs;
            cs.cluster = c;
            cs.is_null = c == null_cluster;
            Vec mean = Vec::Zero(concat.data.cols());
            for (Eigen::Index g = 0; g < concat.data.rows(); ++g) {
                if (!concat.null_mask[static_cast<std::size_t>(g)] &&
                    frame_labels[static_cast<std::size_t>(g)] == c) {
                    ++cs.frame_count;
                    mean += concat.data.row(g).transpose();
                }
            }
            cs.mean_values =
                cs.frame_count > 0 ? Vec(mean / static_cast<double>(cs.frame_count)) : mean;
            cs.representatives = representative_intervals(frame_labels, concat, c, 3, 5);
            for (const auto& rep : cs.representatives) {
                cs.representative_traces.push_back(
                    concat.data.middleRows(rep.global_start, rep.end - rep.start));
            }
            inspection.clusters.push_back(std::move(cs));
        }
        result.report.regions.push_back(std::move(inspection));
        result.models.emplace_back(rc.region, std::move(model));
        result.analyses.push_back({rc.region, frame_labels, null_cluster, concat});

        const auto map_it = label_maps.find(rc.region);
        if (map_it == label_maps.end()) {
            result.labels_required = true;
            result.warnings.push_back("label map required for region " +
                                      std::string(region_name(rc.region)));
            continue;
        }
        const auto labels = apply_label_map(frame_labels, map_it->second);

        // project the global label stream onto each clip
        std::map<std::string, RegionAnnotation> region_parts;
        for (std::size_t i = 0; i < corpus.clips.size(); ++i) {
            region_parts[clip_ids[i]] = RegionAnnotation::zeros(
                rc.region, static_cast<int>(corpus.clips[i].data.rows()));
        }
        long null_on_data = 0;
        for (Eigen::Index g = 0; g < concat.data.rows(); ++g) {
            const auto& ref = concat.index_map[static_cast<std::size_t>(g)];
            if (ref.clip_index < 0) {
                continue;
            }
            const ClusterLabel& label = labels[static_cast<std::size_t>(g)];
            if (label.kind == ClusterLabel::Kind::Action) {
                region_parts[clip_ids[static_cast<std::size_t>(ref.clip_index)]].set(
                    ref.frame, label.action, 1);
            } else if (label.kind == ClusterLabel::Kind::Null) {
                ++null_on_data; // data frame in the separator cluster: neutral
            }
        }
        if (null_on_data > 0) {
            result.warnings.push_back(std::string(region_name(rc.region)) + ": " +
                                      std::to_string(null_on_data) +
                                      " data frames fell into the null cluster");
        }
        for (auto& [id, part] : region_parts) {
            parts[id].push_back(std::move(part));
        }
    }

    if (result.labels_required) {
        return result; // inspection report only; a human labels the clusters
    }

    // threshold regions, one clip at a time
    std::map<RegionId, std::vector<ThresholdRule>> rules_by_region;
    for (const auto& rule : cfg.threshold_rules) {
        rules_by_region[region_of(rule.action)].push_back(rule);
    }
    for (const auto& clip : corpus.clips) {
        for (const auto& [region, rules] : rules_by_region) {
            parts[clip.clip_id].push_back(
                threshold_annotate(clip.data, clip.channel_names, rules));
        }
    }

    for (const auto& clip : corpus.clips) {
        result.annotations[clip.clip_id] = assemble_annotation(
            parts[clip.clip_id], static_cast<int>(clip.data.rows()), clip.fps);
    }
    return result;
}

ClusterLabelMap label_map_from_reference(
    const TiccRegionConfig& rc, const std::vector<int>& frame_labels, int cluster_count,
    int null_cluster, const ConcatenatedSeries& series,
    const std::map<std::string, const Timeline*>& ground_truth) {
    // rasterize each clip's planted timeline once
    std::map<std::string, AnnotationSequence> gt_frames;
    for (const auto& [id, timeline] : ground_truth) {
        gt_frames[id] = timeline_to_frames(*timeline);
    }

    const int num_candidates = static_cast<int>(rc.candidates.size());
    std::vector<std::vector<long>> counts(
        static_cast<std::size_t>(cluster_count),
        std::vector<long>(static_cast<std::size_t>(num_candidates) + 1, 0));

    for (Eigen::Index g = 0; g < series.data.rows(); ++g) {
        const auto& ref = series.index_map[static_cast<std::size_t>(g)];
        if (ref.clip_index < 0) {
            continue;
        }
        const int cluster = frame_labels[static_cast<std::size_t>(g)];
        const auto& gt = gt_frames.at(series.clip_ids[static_cast<std::size_t>(ref.clip_index)]);
        int slot = num_candidates; // neutral
        for (int c = 0; c < num_candidates; ++c) {
            if (gt.at(ref.frame, rc.candidates[static_cast<std::size_t>(c)]) != 0) {
                slot = c;
                break;
            }
        }
        ++counts[static_cast<std::size_t>(cluster)][static_cast<std::size_t>(slot)];
    }

    ClusterLabelMap map;
    map.region = rc.region;
    map.provenance = "majority vote against planted timelines";
    for (int c = 0; c < cluster_count; ++c) {
        if (c == null_cluster) {
            map.labels[c] = ClusterLabel::make_null();
            continue;
        }
        const auto& row = counts[static_cast<std::size_t>(c)];
        int best = 0;
        for (int s = 1; s <= num_candidates; ++s) {
            if (row[static_cast<std::size_t>(s)] > row[static_cast<std::size_t>(best)]) {
                best = s;
            }
        }
        map.labels[c] = best == num_candidates
                            ? ClusterLabel::make_neutral()
                            : ClusterLabel::make_action(
                                  rc.candidates[static_cast<std::size_t>(best)]);
    }
    return map;
}

namespace {

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

void svg_trace(std::ostringstream& os, const Mat& trace,
               const std::vector<std::string>& channels) {
    const int W = 420, H = 120, pad = 8;
    double lo = trace.minCoeff(), hi = trace.maxCoeff();
    if (hi - lo < 1e-9) {
        hi = lo + 1e-9;
    }
    os << "<svg width=\"" << W << "\" height=\"" << H
       << "\" xmlns=\"http://www.w3.org/2000/svg\" style=\"background:#fafafa\">";
    for (Eigen::Index c = 0; c < trace.cols(); ++c) {
        os << "<polyline fill=\"none\" stroke=\""
           << kPalette[static_cast<std::size_t>(c) % 8] << "\" stroke-width=\"1.5\" points=\"";
        for (Eigen::Index f = 0; f < trace.rows(); ++f) {
            const double x =
                pad + (W - 2.0 * pad) * (trace.rows() > 1
                                             ? static_cast<double>(f) / (trace.rows() - 1)
                                             : 0.5);
            const double y = H - pad - (H - 2.0 * pad) * (trace(f, c) - lo) / (hi - lo);
            os << x << "," << y << " ";
        }
        os << "\"><title>" << channels[static_cast<std::size_t>(c)] << "</title></polyline>";
    }
    os << "</svg>";
}

} // namespace

std::string inspection_report_html(const InspectionReport& r) {
    std::ostringstream os;
    os << "<!DOCTYPE html><html><head><meta charset=\"utf-8\">"
          "<title>Cluster inspection</title><style>"
          "body{font-family:sans-serif;margin:2em;max-width:70em}"
          "table{border-collapse:collapse;margin:1em 0}"
          "td,th{border:1px solid #ccc;padding:4px 10px;text-align:left}"
          ".null{color:#999}"
          ".legend span{margin-right:1em;font-size:0.9em}"
          "</style></head><body><h1>Cluster inspection</h1>\n";
    os << "<p>Representative intervals per cluster. Label each non-null cluster "
          "with one of its region's actions or Neutral, then save the label map "
          "and rerun the annotation.</p>\n";
    for (const auto& region : r.regions) {
        os << "<h2>" << region_name(region.region) << "</h2>\n<p class=\"legend\">";
        for (std::size_t c = 0; c < region.channel_names.size(); ++c) {
            os << "<span style=\"color:" << kPalette[c % 8] << "\">&#9632; "
               << region.channel_names[c] << "</span>";
        }
        os << "</p>\n<table><tr><th>cluster</th><th>data frames</th>"
              "<th>mean values</th><th>note</th></tr>\n";
        for (const auto& cs : region.clusters) {
            os << "<tr" << (cs.is_null ? " class=\"null\"" : "") << "><td>" << cs.cluster
               << "</td><td>" << cs.frame_count << "</td><td>";
            for (Eigen::Index i = 0; i < cs.mean_values.size(); ++i) {
                os << (i ? ", " : "") << std::round(cs.mean_values(i) * 1000) / 1000;
            }
            os << "</td><td>" << (cs.is_null ? "null separators" : "") << "</td></tr>\n";
        }
        os << "</table>\n";
        for (const auto& cs : region.clusters) {
            if (cs.is_null) {
                continue;
            }
            for (std::size_t i = 0; i < cs.representatives.size(); ++i) {
                const auto& rep = cs.representatives[i];
                os << "<h3>cluster " << cs.cluster << " &mdash; " << rep.clip_id << " ["
                   << rep.start << "," << rep.end << ")</h3>\n";
                svg_trace(os, cs.representative_traces[i], region.channel_names);
                os << "\n";
            }
        }
    }
    os << "</body></html>\n";
    return os.str();
}

} // namespace timeliner
