#include "timeliner/timeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "timeliner/errors.hpp"

namespace timeliner {

using nlohmann::json;

AnnotationSequence AnnotationSequence::zeros(int num_frames, double fps) {
    AnnotationSequence a;
    a.num_frames = num_frames;
    a.fps = fps;
    a.values.assign(static_cast<std::size_t>(num_frames) * kNumActions, 0);
    return a;
}

namespace {

std::string interval_str(const Interval& iv) {
    std::ostringstream os;
    os << action_name(iv.action) << " [" << iv.start << "," << iv.end << ")";
    return os.str();
}

bool overlaps(const Interval& a, const Interval& b) {
    return a.start < b.end && b.start < a.end;
}

bool same_conflict_set(ActionCategory a, ActionCategory b) {
    if (a == b) {
        return true; // same-action overlap is also degenerate input
    }
    for (ActionCategory member : conflict_set_of(a)) {
        if (member == b) {
            return true;
        }
    }
    return false;
}

void throw_if_invalid(const std::vector<Violation>& violations, const char* what) {
    if (violations.empty()) {
        return;
    }
    std::ostringstream os;
    os << what << ":";
    for (const auto& v : violations) {
        os << "\n  [" << v.rule << "] " << v.detail;
    }
    throw DataError(os.str());
}

} // namespace

std::vector<Violation> validate(const Timeline& t) {
    std::vector<Violation> out;
    if (t.num_frames <= 0) {
        out.push_back({"frame count", "num_frames must be positive, got " +
                                          std::to_string(t.num_frames)});
        return out;
    }
    for (int r = 0; r < kNumRegions; ++r) {
        const auto region = static_cast<RegionId>(r);
        for (const Interval& iv : t.track(region)) {
            if (region_of(iv.action) != region) {
                out.push_back({"track region", interval_str(iv) + " stored in track " +
                                                   std::string(region_name(region))});
            }
            if (iv.start < 0 || iv.start >= iv.end || iv.end > t.num_frames) {
                out.push_back({"out of bounds",
                               interval_str(iv) + " with num_frames=" +
                                   std::to_string(t.num_frames)});
            }
        }
    }
    // Overlap within a conflict set (including two intervals of one action).
    std::vector<Interval> all;
    for (const auto& track : t.tracks) {
        all.insert(all.end(), track.begin(), track.end());
    }
    for (std::size_t i = 0; i < all.size(); ++i) {
        for (std::size_t j = i + 1; j < all.size(); ++j) {
            if (overlaps(all[i], all[j]) && same_conflict_set(all[i].action, all[j].action)) {
                out.push_back({"conflict set", interval_str(all[i]) + " overlaps " +
                                                   interval_str(all[j])});
            }
        }
    }
    return out;
}

std::vector<Violation> validate(const AnnotationSequence& a) {
    std::vector<Violation> out;
    if (a.num_frames < 0 ||
        a.values.size() != static_cast<std::size_t>(a.num_frames) * kNumActions) {
        out.push_back({"shape", "values size " + std::to_string(a.values.size()) +
                                    " does not match num_frames*" +
                                    std::to_string(kNumActions)});
        return out;
    }
    for (int f = 0; f < a.num_frames; ++f) {
        for (int d = 0; d < kNumActions; ++d) {
            const std::uint8_t v =
                a.values[static_cast<std::size_t>(f) * kNumActions + static_cast<std::size_t>(d)];
            if (v != 0 && v != 1) {
                out.push_back({"binary", "frame " + std::to_string(f) + " dim " +
                                             std::to_string(d) + " = " + std::to_string(v)});
            }
        }
        for (const auto& set : conflict_sets()) {
            int active = 0;
            for (ActionCategory c : set) {
                active += a.at(f, c);
            }
            if (active > 1) {
                out.push_back({"conflict set",
                               "frame " + std::to_string(f) + ": " + std::to_string(active) +
                                   " active actions in the " +
                                   std::string(action_name(set[0])) + " set"});
            }
        }
    }
    return out;
}

AnnotationSequence timeline_to_frames(const Timeline& t) {
    throw_if_invalid(validate(t), "invalid timeline");
    AnnotationSequence a = AnnotationSequence::zeros(t.num_frames, t.fps);
    for (const auto& track : t.tracks) {
        for (const Interval& iv : track) {
            for (int f = iv.start; f < iv.end; ++f) {
                a.set(f, iv.action, 1);
            }
        }
    }
    return a;
}

Timeline frames_to_timeline(const AnnotationSequence& a) {
    throw_if_invalid(validate(a), "invalid annotation sequence");
    Timeline t;
    t.num_frames = a.num_frames;
    t.fps = a.fps;
    for (int d = 0; d < kNumActions; ++d) {
        const auto action = static_cast<ActionCategory>(d);
        int run_start = -1;
        for (int f = 0; f <= a.num_frames; ++f) {
            const bool on = f < a.num_frames && a.at(f, action) != 0;
            if (on && run_start < 0) {
                run_start = f;
            } else if (!on && run_start >= 0) {
                t.add({action, run_start, f});
                run_start = -1;
            }
        }
    }
    for (auto& track : t.tracks) {
        std::sort(track.begin(), track.end(), [](const Interval& x, const Interval& y) {
            return x.start != y.start ? x.start < y.start
                                      : action_index(x.action) < action_index(y.action);
        });
    }
    return t;
}

std::string timeline_to_json(const Timeline& t) {
    json tracks = json::object();
    for (int r = 0; r < kNumRegions; ++r) {
        const auto region = static_cast<RegionId>(r);
        json arr = json::array();
        for (const Interval& iv : t.track(region)) {
            arr.push_back({{"action", std::string(action_name(iv.action))},
                           {"start", iv.start},
                           {"end", iv.end}});
        }
        tracks[std::string(region_name(region))] = std::move(arr);
    }
    const json doc = {
        {"num_frames", t.num_frames}, {"fps", t.fps}, {"tracks", std::move(tracks)}};
    return doc.dump(2);
}

Timeline timeline_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("timeline JSON parse error: ") + e.what());
    }
    Timeline t;
    try {
        t.num_frames = doc.at("num_frames").get<int>();
        t.fps = doc.at("fps").get<double>();
        const json& tracks = doc.at("tracks");
        for (auto it = tracks.begin(); it != tracks.end(); ++it) {
            const auto region = parse_region(it.key());
            if (!region) {
                throw DataError("timeline JSON: unknown region '" + it.key() + "'");
            }
            for (const json& jiv : it.value()) {
                const std::string name = jiv.at("action").get<std::string>();
                const auto action = parse_action(name);
                if (!action) {
                    throw DataError("timeline JSON: unknown action '" + name + "'");
                }
                if (region_of(*action) != *region) {
                    throw DataError("timeline JSON: action " + name + " listed under region " +
                                    it.key());
                }
                t.add({*action, jiv.at("start").get<int>(), jiv.at("end").get<int>()});
            }
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("timeline JSON schema error: ") + e.what());
    }
    return t;
}

void save_timeline_json(const Timeline& t, const std::string& path) {
    std::ofstream os(path);
    if (!os) {
        throw DataError("cannot open for writing: " + path);
    }
    os << timeline_to_json(t) << "\n";
}

Timeline load_timeline_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw DataError("cannot open timeline file: " + path);
    }
    std::ostringstream buf;
    buf << is.rdbuf();
    return timeline_from_json(buf.str());
}

void save_annotation_csv(const AnnotationSequence& a, const std::string& path) {
    std::ofstream os(path);
    if (!os) {
        throw DataError("cannot open for writing: " + path);
    }
    for (int d = 0; d < kNumActions; ++d) {
        os << (d ? "," : "") << action_name(static_cast<ActionCategory>(d));
    }
    os << "\n";
    for (int f = 0; f < a.num_frames; ++f) {
        for (int d = 0; d < kNumActions; ++d) {
            os << (d ? "," : "")
               << int(a.values[static_cast<std::size_t>(f) * kNumActions +
                               static_cast<std::size_t>(d)]);
        }
        os << "\n";
    }
}

AnnotationSequence load_annotation_csv(const std::string& path, double fps) {
    std::ifstream is(path);
    if (!is) {
        throw DataError("cannot open annotation file: " + path);
    }
    std::string line;
    if (!std::getline(is, line)) {
        throw DataError("empty annotation file: " + path);
    }
    // Header must be the 16 action names in layout order.
    {
        std::istringstream hs(line);
        std::string cell;
        for (int d = 0; d < kNumActions; ++d) {
            if (!std::getline(hs, cell, ',') ||
                cell != action_name(static_cast<ActionCategory>(d))) {
                throw DataError("annotation CSV header mismatch at column " +
                                std::to_string(d) + " in " + path);
            }
        }
    }
    AnnotationSequence a;
    a.fps = fps;
    int row = 0;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ls(line);
        std::string cell;
        for (int d = 0; d < kNumActions; ++d) {
            if (!std::getline(ls, cell, ',')) {
                throw DataError("ragged annotation row " + std::to_string(row) + " in " + path);
            }
            if (cell != "0" && cell != "1") {
                throw DataError("non-binary cell '" + cell + "' at row " + std::to_string(row) +
                                " column " + std::to_string(d) + " in " + path);
            }
            a.values.push_back(cell == "1" ? 1 : 0);
        }
        ++row;
    }
    a.num_frames = row;
    return a;
}

} // namespace timeliner
