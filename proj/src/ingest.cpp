#include "timeliner/ingest.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "timeliner/errors.hpp"

namespace timeliner {

using nlohmann::json;

RegionChannelMap RegionChannelMap::defaults() {
    RegionChannelMap m;
    m.for_region(RegionId::Brow) = {"browDown_L", "browInnerUp", "browOuterUp_L"};
    m.for_region(RegionId::Eye) = {"eyeBlink_L", "eyeSquint_L", "eyeWide_L"};
    m.for_region(RegionId::Mouth) = {"mouthSmile_L", "mouthStretch_L", "mouthFrown_L"};
    m.for_region(RegionId::Gaze) = {"gazeHorizontal", "gazeVertical"};
    m.for_region(RegionId::Head) = {"headPitch", "headYaw", "headRoll"};
    return m;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) {
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        cells.emplace_back();
    }
    return cells;
}

} // namespace

ClipSeries load_descriptor_csv(const std::string& path, double fps) {
    std::ifstream is(path);
    if (!is) {
        throw DataError("descriptor file not found: " + path);
    }
    std::string line;
    if (!std::getline(is, line)) {
        throw DataError("empty descriptor file: " + path);
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    ClipSeries clip;
    clip.fps = fps;
    clip.clip_id = std::filesystem::path(path).stem().string();
    clip.channel_names = split_csv_line(line);
    if (clip.channel_names.empty()) {
        throw DataError("descriptor file has an empty header: " + path);
    }
    const std::size_t n = clip.channel_names.size();

    std::vector<double> cells;
    int rows = 0;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto row = split_csv_line(line);
        if (row.size() != n) {
            throw DataError("ragged row " + std::to_string(rows) + " in " + path + ": " +
                            std::to_string(row.size()) + " cells, expected " +
                            std::to_string(n));
        }
        for (std::size_t c = 0; c < n; ++c) {
            char* endp = nullptr;
            const double v = std::strtod(row[c].c_str(), &endp);
            if (endp == row[c].c_str() || *endp != '\0') {
                throw DataError("unparseable cell '" + row[c] + "' at row " +
                                std::to_string(rows) + " column " + clip.channel_names[c] +
                                " in " + path);
            }
            if (!std::isfinite(v)) {
                throw DataError("non-finite value at row " + std::to_string(rows) +
                                " column " + clip.channel_names[c] + " in " + path);
            }
            cells.push_back(v);
        }
        ++rows;
    }
    if (rows == 0) {
        throw DataError("descriptor file has a header but no rows: " + path);
    }
    clip.data = Eigen::Map<const Mat>(cells.data(), rows, static_cast<Eigen::Index>(n));
    return clip;
}

void save_descriptor_csv(const ClipSeries& clip, const std::string& path) {
    std::ofstream os(path);
    if (!os) {
        throw DataError("cannot open for writing: " + path);
    }
    os.precision(17);
    for (std::size_t c = 0; c < clip.channel_names.size(); ++c) {
        os << (c ? "," : "") << clip.channel_names[c];
    }
    os << "\n";
    for (Eigen::Index r = 0; r < clip.data.rows(); ++r) {
        for (Eigen::Index c = 0; c < clip.data.cols(); ++c) {
            os << (c ? "," : "") << clip.data(r, c);
        }
        os << "\n";
    }
}

Mat select_channels(const ClipSeries& clip, const std::vector<std::string>& names) {
    if (names.empty()) {
        throw DataError("empty channel selection for clip " + clip.clip_id);
    }
    Mat out(clip.data.rows(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto it =
            std::find(clip.channel_names.begin(), clip.channel_names.end(), names[i]);
        if (it == clip.channel_names.end()) {
            throw DataError("unknown channel '" + names[i] + "' in clip " + clip.clip_id);
        }
        const auto col = static_cast<Eigen::Index>(it - clip.channel_names.begin());
        out.col(static_cast<Eigen::Index>(i)) = clip.data.col(col);
    }
    return out;
}

Mat select_region_channels(const ClipSeries& clip, RegionId region,
                           const RegionChannelMap& map) {
    return select_channels(clip, map.for_region(region));
}

ConcatenatedSeries concatenate_with_null(const std::vector<Mat>& mats,
                                         const std::vector<std::string>& clip_ids,
                                         int null_len, double null_value) {
    if (mats.size() != clip_ids.size()) {
        throw DataError("concatenate: clip id count does not match matrix count");
    }
    if (null_len < 0) {
        throw DataError("concatenate: negative null_len");
    }
    if (mats.empty()) {
        return {};
    }
    const Eigen::Index k = mats[0].cols();
    Eigen::Index total = 0;
    for (std::size_t i = 0; i < mats.size(); ++i) {
        if (mats[i].cols() != k) {
            throw DataError("concatenate: width mismatch at clip " + clip_ids[i] + " (" +
                            std::to_string(mats[i].cols()) + " vs " + std::to_string(k) + ")");
        }
        total += mats[i].rows();
    }
    total += static_cast<Eigen::Index>(null_len) *
             static_cast<Eigen::Index>(mats.size() - 1);

    ConcatenatedSeries out;
    out.data.resize(total, k);
    out.null_mask.assign(static_cast<std::size_t>(total), 0);
    out.index_map.resize(static_cast<std::size_t>(total));
    out.clip_ids = clip_ids;
    out.null_value = null_value;

    Eigen::Index row = 0;
    for (std::size_t i = 0; i < mats.size(); ++i) {
        if (i > 0) {
            for (int s = 0; s < null_len; ++s, ++row) {
                out.data.row(row).setConstant(null_value);
                out.null_mask[static_cast<std::size_t>(row)] = 1;
                out.index_map[static_cast<std::size_t>(row)] = {-1, 0};
            }
        }
        for (Eigen::Index f = 0; f < mats[i].rows(); ++f, ++row) {
            out.data.row(row) = mats[i].row(f);
            out.index_map[static_cast<std::size_t>(row)] = {static_cast<int>(i),
                                                            static_cast<int>(f)};
        }
    }
    return out;
}

std::optional<std::pair<std::string, int>> map_global_to_clip(
    const ConcatenatedSeries& s, Eigen::Index global_row) {
    if (global_row < 0 || global_row >= s.data.rows()) {
        throw DataError("global row " + std::to_string(global_row) + " out of range [0," +
                        std::to_string(s.data.rows()) + ")");
    }
    const auto& ref = s.index_map[static_cast<std::size_t>(global_row)];
    if (ref.clip_index < 0) {
        return std::nullopt;
    }
    return std::make_pair(s.clip_ids[static_cast<std::size_t>(ref.clip_index)], ref.frame);
}

Corpus load_corpus(const std::string& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) {
        throw DataError("corpus manifest not found: " + manifest_path);
    }
    json doc;
    try {
        is >> doc;
    } catch (const json::exception& e) {
        throw DataError(std::string("corpus manifest parse error: ") + e.what());
    }

    Corpus corpus;
    const auto base = std::filesystem::path(manifest_path).parent_path();
    try {
        corpus.fps = doc.at("fps").get<double>();
        if (doc.contains("provenance")) {
            corpus.provenance = doc["provenance"].get<std::string>();
        }
        if (doc.contains("channel_map")) {
            for (auto it = doc["channel_map"].begin(); it != doc["channel_map"].end(); ++it) {
                const auto region = parse_region(it.key());
                if (!region) {
                    throw DataError("corpus manifest: unknown region '" + it.key() + "'");
                }
                corpus.channel_map.for_region(*region) =
                    it.value().get<std::vector<std::string>>();
            }
        } else {
            corpus.channel_map = RegionChannelMap::defaults();
        }
        for (const json& jc : doc.at("clips")) {
            const auto rel = jc.at("path").get<std::string>();
            auto path = std::filesystem::path(rel);
            if (path.is_relative()) {
                path = base / path;
            }
            ClipSeries clip = load_descriptor_csv(path.string(), corpus.fps);
            clip.clip_id = jc.at("id").get<std::string>();
            corpus.clips.push_back(std::move(clip));
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("corpus manifest schema error: ") + e.what());
    }

    if (!corpus.clips.empty()) {
        const auto& names = corpus.clips[0].channel_names;
        for (const auto& clip : corpus.clips) {
            if (clip.channel_names != names) {
                throw DataError("corpus clips disagree on channel names (" + clip.clip_id +
                                ")");
            }
        }
    }
    return corpus;
}

void save_corpus_manifest(const Corpus& corpus,
                          const std::vector<std::string>& clip_paths,
                          const std::string& manifest_path) {
    if (clip_paths.size() != corpus.clips.size()) {
        throw DataError("manifest: clip path count does not match corpus");
    }
    json clips = json::array();
    for (std::size_t i = 0; i < corpus.clips.size(); ++i) {
        clips.push_back({{"id", corpus.clips[i].clip_id}, {"path", clip_paths[i]}});
    }
    json channel_map = json::object();
    for (int r = 0; r < kNumRegions; ++r) {
        const auto region = static_cast<RegionId>(r);
        channel_map[std::string(region_name(region))] = corpus.channel_map.for_region(region);
    }
    json doc = {{"fps", corpus.fps},
                {"clips", std::move(clips)},
                {"channel_map", std::move(channel_map)}};
    if (!corpus.provenance.empty()) {
        doc["provenance"] = corpus.provenance;
    }
    std::ofstream os(manifest_path);
    if (!os) {
        throw DataError("cannot open for writing: " + manifest_path);
    }
    os << doc.dump(2) << "\n";
}

} // namespace timeliner
