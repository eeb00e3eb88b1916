// timeliner: frame-level facial action timelines from motion-descriptor
// tables, plus the evaluation suite and the synthetic oracle.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "timeliner/annotator.hpp"
#include "timeliner/config.hpp"
#include "timeliner/errors.hpp"
#include "timeliner/kernels.hpp"
#include "timeliner/metrics.hpp"
#include "timeliner/synth.hpp"
#include "timeliner/ticc.hpp"

namespace fs = std::filesystem;
using namespace timeliner;

namespace {

// one process per output directory
class OutputLock {
public:
    explicit OutputLock(const fs::path& dir) : path_(dir / ".timeliner.lock") {
        fs::create_directories(dir);
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            throw DataError("output directory is locked (" + path_.string() +
                            " exists); remove the stale lock if no other run is active");
        }
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
    }
    ~OutputLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            ::unlink(path_.c_str());
        }
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    fs::path path_;
    int fd_ = -1;
};

void write_text(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) {
        throw DataError("cannot open for writing: " + path.string());
    }
    os << content;
}

std::string region_file_key(RegionId r) {
    std::string s(region_name(r));
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

struct CommonOpts {
    std::string config_path;
    std::string manifest;
    std::string output_dir;
    std::optional<std::uint64_t> seed;
    bool json = false;
};

RunConfig resolve_config(const CommonOpts& opts, bool needs_seed) {
    RunConfig cfg;
    bool seed_explicit = false;
    if (!opts.config_path.empty()) {
        cfg = RunConfig::from_file(opts.config_path);
        seed_explicit = true; // a config file pins the run, seed included
    }
    if (!opts.manifest.empty()) {
        cfg.manifest = opts.manifest;
    }
    if (!opts.output_dir.empty()) {
        cfg.output_dir = opts.output_dir;
    }
    if (opts.seed) {
        cfg.seed = *opts.seed;
        seed_explicit = true;
    }
    if (needs_seed && !seed_explicit) {
        throw UsageError("this command is randomized: pass --seed or a --config with a seed");
    }
    for (auto& rc : cfg.pipeline.ticc_regions) {
        rc.ticc.seed = cfg.seed;
    }
    return cfg;
}

std::map<RegionId, TiccModel> load_models(const RunConfig& cfg) {
    std::map<RegionId, TiccModel> models;
    for (const auto& rc : cfg.pipeline.ticc_regions) {
        const fs::path p = fs::path(cfg.model_dir) / (region_file_key(rc.region) + ".json");
        if (fs::exists(p)) {
            models[rc.region] = load_model_json(p.string());
        }
    }
    return models;
}

void save_models(const RunConfig& cfg, const PipelineResult& result) {
    fs::create_directories(cfg.model_dir);
    for (const auto& [region, model] : result.models) {
        save_model_json(model,
                        (fs::path(cfg.model_dir) / (region_file_key(region) + ".json")).string());
    }
}

std::map<RegionId, ClusterLabelMap> load_label_maps(const RunConfig& cfg) {
    std::map<RegionId, ClusterLabelMap> maps;
    for (const auto& rc : cfg.pipeline.ticc_regions) {
        const fs::path p = fs::path(cfg.label_dir) / (region_file_key(rc.region) + ".json");
        if (fs::exists(p)) {
            maps[rc.region] = load_label_map(p.string());
        }
    }
    return maps;
}

void write_label_skeletons(const RunConfig& cfg, const PipelineResult& result,
                           bool overwrite) {
    fs::create_directories(cfg.label_dir);
    for (const auto& analysis : result.analyses) {
        const fs::path p =
            fs::path(cfg.label_dir) / (region_file_key(analysis.region) + ".json");
        if (fs::exists(p) && !overwrite) {
            continue;
        }
        const TiccModel* model = nullptr;
        for (const auto& [region, m] : result.models) {
            if (region == analysis.region) {
                model = &m;
            }
        }
        ClusterLabelMap skeleton;
        skeleton.region = analysis.region;
        std::ostringstream prov;
        prov << "skeleton; inspect report.html and replace Neutral with actions.";
        for (int c = 0; c < model->cluster_count(); ++c) {
            skeleton.labels[c] = c == analysis.null_cluster ? ClusterLabel::make_null()
                                                            : ClusterLabel::make_neutral();
            const auto reps = representative_intervals(analysis.frame_labels,
                                                       analysis.concat, c, 2, 5);
            prov << " cluster " << c << ":";
            if (reps.empty()) {
                prov << " (no runs)";
            }
            for (const auto& rep : reps) {
                prov << " " << rep.clip_id << "[" << rep.start << "," << rep.end << ")";
            }
            prov << ";";
        }
        skeleton.provenance = prov.str();
        save_label_map(skeleton, p.string());
    }
}

void write_annotations(const RunConfig& cfg, const Corpus& corpus,
                       const PipelineResult& result) {
    const fs::path ann_dir = fs::path(cfg.output_dir) / "annotations";
    const fs::path tl_dir = fs::path(cfg.output_dir) / "timelines";
    fs::create_directories(ann_dir);
    fs::create_directories(tl_dir);
    for (const auto& clip : corpus.clips) {
        const auto& annotation = result.annotations.at(clip.clip_id);
        save_annotation_csv(annotation, (ann_dir / (clip.clip_id + ".csv")).string());
        save_timeline_json(frames_to_timeline(annotation),
                           (tl_dir / (clip.clip_id + ".json")).string());
    }
}

/// Pooled per-region scores: confusion counts accumulate over all clips by
/// concatenating the frame streams.
std::map<std::string, RegionF1> pooled_region_scores(
    const std::vector<std::pair<AnnotationSequence, AnnotationSequence>>& pairs) {
    AnnotationSequence pred_all = AnnotationSequence::zeros(0);
    AnnotationSequence gt_all = AnnotationSequence::zeros(0);
    for (const auto& [pred, gt] : pairs) {
        pred_all.values.insert(pred_all.values.end(), pred.values.begin(),
                               pred.values.end());
        gt_all.values.insert(gt_all.values.end(), gt.values.begin(), gt.values.end());
        pred_all.num_frames += pred.num_frames;
        gt_all.num_frames += gt.num_frames;
    }
    std::map<std::string, RegionF1> out;
    for (int r = 0; r < kNumRegions; ++r) {
        const auto region = static_cast<RegionId>(r);
        out[std::string(region_name(region))] = macro_f1(pred_all, gt_all, region);
    }
    return out;
}

std::string svg_curves(const std::vector<double>& xs,
                       const std::vector<std::pair<std::string, std::vector<double>>>& series,
                       const std::string& x_label, const std::string& y_label) {
    const int W = 520, H = 300, pad = 45;
    double xlo = xs.front(), xhi = xs.back();
    if (xhi - xlo < 1e-12) {
        xhi = xlo + 1.0;
    }
    double ylo = 1e300, yhi = -1e300;
    for (const auto& [name, ys] : series) {
        for (double y : ys) {
            ylo = std::min(ylo, y);
            yhi = std::max(yhi, y);
        }
    }
    if (yhi - ylo < 1e-12) {
        yhi = ylo + 1.0;
    }
    const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"};
    std::ostringstream os;
    os << "<svg width=\"" << W << "\" height=\"" << H
       << "\" xmlns=\"http://www.w3.org/2000/svg\" style=\"background:#fff\">";
    os << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad
       << "\" y2=\"" << H - pad << "\" stroke=\"#333\"/>";
    os << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\""
       << H - pad << "\" stroke=\"#333\"/>";
    os << "<text x=\"" << W / 2 << "\" y=\"" << H - 8 << "\" font-size=\"12\">" << x_label
       << "</text>";
    os << "<text x=\"12\" y=\"" << H / 2 << "\" font-size=\"12\" transform=\"rotate(-90 12 "
       << H / 2 << ")\">" << y_label << "</text>";
    auto sx = [&](double x) { return pad + (W - 2.0 * pad) * (x - xlo) / (xhi - xlo); };
    auto sy = [&](double y) {
        return H - pad - (H - 2.0 * pad) * (y - ylo) / (yhi - ylo);
    };
    for (std::size_t s = 0; s < series.size(); ++s) {
        os << "<polyline fill=\"none\" stroke=\"" << palette[s % 5]
           << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < xs.size(); ++i) {
            os << sx(xs[i]) << "," << sy(series[s].second[i]) << " ";
        }
        os << "\"/>";
        os << "<text x=\"" << W - pad + 4 << "\" y=\""
           << sy(series[s].second.back()) << "\" font-size=\"11\" fill=\"" << palette[s % 5]
           << "\">" << series[s].first << "</text>";
    }
    // axis extremes
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", ylo);
    os << "<text x=\"4\" y=\"" << H - pad << "\" font-size=\"10\">" << buf << "</text>";
    std::snprintf(buf, sizeof(buf), "%.3g", yhi);
    os << "<text x=\"4\" y=\"" << pad + 4 << "\" font-size=\"10\">" << buf << "</text>";
    std::snprintf(buf, sizeof(buf), "%.3g", xlo);
    os << "<text x=\"" << pad << "\" y=\"" << H - pad + 14 << "\" font-size=\"10\">" << buf
       << "</text>";
    std::snprintf(buf, sizeof(buf), "%.3g", xhi);
    os << "<text x=\"" << W - pad << "\" y=\"" << H - pad + 14 << "\" font-size=\"10\">"
       << buf << "</text>";
    os << "</svg>\n";
    return os.str();
}

PipelineConfig synth_tuned_pipeline(const RunConfig& cfg) {
    // planted synthetic motions need one cluster per action plus neutral; the
    // eye aperture gets extra room so smile-coupled squint bleed settles into
    // its own neutral-labeled clusters (picked by sweeping K on synth corpora)
    PipelineConfig pcfg = cfg.pipeline;
    for (auto& rc : pcfg.ticc_regions) {
        rc.ticc.num_clusters = static_cast<int>(rc.candidates.size()) + 2 +
                               (rc.region == RegionId::Eye ? 2 : 0);
        rc.ticc.seed = cfg.seed;
    }
    return pcfg;
}

SynthConfig synth_config_from(const RunConfig& cfg) {
    SynthConfig scfg = SynthConfig::defaults();
    scfg.seed = cfg.seed;
    scfg.sigma_base = cfg.synth.sigma_base;
    scfg.fps = cfg.synth.fps;
    return scfg;
}

std::map<RegionId, ClusterLabelMap> auto_label_maps(
    const PipelineConfig& pcfg, const PipelineResult& pass1,
    const std::map<std::string, const Timeline*>& gt) {
    std::map<RegionId, ClusterLabelMap> maps;
    for (const auto& analysis : pass1.analyses) {
        const TiccRegionConfig* rc = nullptr;
        for (const auto& candidate : pcfg.ticc_regions) {
            if (candidate.region == analysis.region) {
                rc = &candidate;
            }
        }
        int cluster_count = 0;
        for (const auto& [region, model] : pass1.models) {
            if (region == analysis.region) {
                cluster_count = model.cluster_count();
            }
        }
        maps[analysis.region] =
            label_map_from_reference(*rc, analysis.frame_labels, cluster_count,
                                     analysis.null_cluster, analysis.concat, gt);
    }
    return maps;
}

// ---- commands ----

int cmd_ingest(const CommonOpts& opts) {
    const RunConfig cfg = resolve_config(opts, false);
    if (cfg.manifest.empty()) {
        throw UsageError("ingest: provide --manifest or a config with paths.manifest");
    }
    const Corpus corpus = load_corpus(cfg.manifest);
    long frames = 0;
    for (const auto& clip : corpus.clips) {
        frames += clip.data.rows();
    }
    if (opts.json) {
        nlohmann::json doc = {{"clips", corpus.clips.size()},
                              {"frames", frames},
                              {"fps", corpus.fps},
                              {"channels", corpus.clips.empty()
                                               ? std::vector<std::string>{}
                                               : corpus.clips[0].channel_names}};
        std::cout << doc.dump(2) << "\n";
    } else {
        std::cout << "corpus ok: " << corpus.clips.size() << " clips, " << frames
                  << " frames at " << corpus.fps << " fps\n";
        if (!corpus.clips.empty()) {
            std::cout << "channels:";
            for (const auto& name : corpus.clips[0].channel_names) {
                std::cout << " " << name;
            }
            std::cout << "\n";
        }
    }
    return 0;
}

int cmd_fit(const CommonOpts& opts) {
    const RunConfig cfg = resolve_config(opts, true);
    if (cfg.manifest.empty()) {
        throw UsageError("fit: provide --manifest or a config with paths.manifest");
    }
    OutputLock lock{fs::path(cfg.output_dir)};
    const Corpus corpus = load_corpus(cfg.manifest);
    const PipelineResult result = run_pipeline(corpus, cfg.pipeline, {});
    save_models(cfg, result);
    write_text(fs::path(cfg.output_dir) / "report.html",
               inspection_report_html(result.report));
    write_text(fs::path(cfg.output_dir) / "run_config.toml", cfg.to_toml());
    for (const auto& w : result.warnings) {
        std::cerr << "warning: " << w << "\n";
    }
    std::cout << "fitted " << result.models.size() << " region models into "
              << cfg.model_dir << "\n";
    return 0;
}

int cmd_labels_init(const CommonOpts& opts, bool overwrite) {
    const RunConfig cfg = resolve_config(opts, true);
    if (cfg.manifest.empty()) {
        throw UsageError("labels init: provide --manifest or a config with paths.manifest");
    }
    OutputLock lock{fs::path(cfg.output_dir)};
    const Corpus corpus = load_corpus(cfg.manifest);
    auto models = load_models(cfg);
    const PipelineResult result =
        run_pipeline(corpus, cfg.pipeline, {}, models.empty() ? nullptr : &models);
    if (models.empty()) {
        save_models(cfg, result);
    }
    write_text(fs::path(cfg.output_dir) / "report.html",
               inspection_report_html(result.report));
    write_label_skeletons(cfg, result, overwrite);
    std::cout << "label skeletons in " << cfg.label_dir << "; edit them against "
              << (fs::path(cfg.output_dir) / "report.html").string() << "\n";
    return 0;
}

int cmd_labels_apply(const CommonOpts& opts) {
    const RunConfig cfg = resolve_config(opts, false);
    const auto models = load_models(cfg);
    if (models.empty()) {
        throw DataError("labels apply: no fitted models under " + cfg.model_dir);
    }
    const auto maps = load_label_maps(cfg);
    bool complete = true;
    for (const auto& rc : cfg.pipeline.ticc_regions) {
        const auto model_it = models.find(rc.region);
        const auto map_it = maps.find(rc.region);
        const std::string name(region_name(rc.region));
        if (model_it == models.end()) {
            std::cout << name << ": no model\n";
            complete = false;
            continue;
        }
        if (map_it == maps.end()) {
            std::cout << name << ": no label map\n";
            complete = false;
            continue;
        }
        int missing = 0;
        for (int c = 0; c < model_it->second.cluster_count(); ++c) {
            if (!map_it->second.labels.count(c)) {
                ++missing;
            }
        }
        if (missing > 0) {
            std::cout << name << ": " << missing << " clusters unlabeled\n";
            complete = false;
        } else {
            std::cout << name << ": ok (" << model_it->second.cluster_count()
                      << " clusters labeled)\n";
        }
    }
    if (!complete) {
        throw DataError("label maps are incomplete");
    }
    return 0;
}

int cmd_annotate(const CommonOpts& opts) {
    const RunConfig cfg = resolve_config(opts, true);
    if (cfg.manifest.empty()) {
        throw UsageError("annotate: provide --manifest or a config with paths.manifest");
    }
    OutputLock lock{fs::path(cfg.output_dir)};
    const Corpus corpus = load_corpus(cfg.manifest);
    auto models = load_models(cfg);
    const auto maps = load_label_maps(cfg);
    const PipelineResult result =
        run_pipeline(corpus, cfg.pipeline, maps, models.empty() ? nullptr : &models);
    if (models.empty()) {
        save_models(cfg, result);
    }
    write_text(fs::path(cfg.output_dir) / "report.html",
               inspection_report_html(result.report));
    write_text(fs::path(cfg.output_dir) / "run_config.toml", cfg.to_toml());
    for (const auto& w : result.warnings) {
        std::cerr << "warning: " << w << "\n";
    }
    if (result.labels_required) {
        write_label_skeletons(cfg, result, false);
        throw DataError("labels required: edit the skeletons in " + cfg.label_dir +
                        " against " + (fs::path(cfg.output_dir) / "report.html").string());
    }
    write_annotations(cfg, corpus, result);
    std::cout << "annotated " << result.annotations.size() << " clips into "
              << cfg.output_dir << "\n";
    return 0;
}

int cmd_report(const CommonOpts& opts) {
    const RunConfig cfg = resolve_config(opts, true);
    if (cfg.manifest.empty()) {
        throw UsageError("report: provide --manifest or a config with paths.manifest");
    }
    OutputLock lock{fs::path(cfg.output_dir)};
    const Corpus corpus = load_corpus(cfg.manifest);
    auto models = load_models(cfg);
    const PipelineResult result =
        run_pipeline(corpus, cfg.pipeline, {}, models.empty() ? nullptr : &models);
    write_text(fs::path(cfg.output_dir) / "report.html",
               inspection_report_html(result.report));
    std::cout << (fs::path(cfg.output_dir) / "report.html").string() << "\n";
    return 0;
}

int cmd_synth(const CommonOpts& opts) {
    const RunConfig cfg = resolve_config(opts, true);
    OutputLock lock{fs::path(cfg.output_dir)};
    const SynthCorpus synth = synth_corpus(cfg.synth.clips,
                                           {cfg.synth.len_min, cfg.synth.len_max},
                                           cfg.synth.action_rate, synth_config_from(cfg));
    const fs::path corpus_dir = fs::path(cfg.output_dir) / "corpus";
    const fs::path gt_dir = fs::path(cfg.output_dir) / "gt";
    fs::create_directories(corpus_dir);
    fs::create_directories(gt_dir);
    std::vector<std::string> clip_paths;
    for (std::size_t i = 0; i < synth.corpus.clips.size(); ++i) {
        const auto& clip = synth.corpus.clips[i];
        const std::string file = clip.clip_id + ".csv";
        save_descriptor_csv(clip, (corpus_dir / file).string());
        clip_paths.push_back(file);
        save_timeline_json(synth.ground_truth[i],
                           (gt_dir / (clip.clip_id + ".json")).string());
    }
    save_corpus_manifest(synth.corpus, clip_paths, (corpus_dir / "manifest.json").string());
    std::cout << "synthetic corpus: " << (corpus_dir / "manifest.json").string()
              << " (ground truth in " << gt_dir.string() << ")\n";
    return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& pred_dir, const std::string& gt_dir,
             const std::string& gen_coeffs, const std::string& ref_coeffs) {
    const RunConfig cfg = resolve_config(opts, false);
    OutputLock lock{fs::path(cfg.output_dir)};

    std::vector<fs::path> gt_files;
    for (const auto& entry : fs::directory_iterator(gt_dir)) {
        if (entry.path().extension() == ".json") {
            gt_files.push_back(entry.path());
        }
    }
    std::sort(gt_files.begin(), gt_files.end());
    if (gt_files.empty()) {
        throw DataError("eval: no ground-truth timelines in " + gt_dir);
    }

    std::vector<std::pair<AnnotationSequence, AnnotationSequence>> pairs;
    double tas_total = 0.0;
    long frames = 0;
    for (const auto& gt_path : gt_files) {
        const Timeline gt = load_timeline_json(gt_path.string());
        const fs::path pred_path =
            fs::path(pred_dir) / (gt_path.stem().string() + ".csv");
        if (!fs::exists(pred_path)) {
            throw DataError("eval: missing prediction " + pred_path.string());
        }
        AnnotationSequence pred = load_annotation_csv(pred_path.string(), gt.fps);
        tas_total += tas(gt, pred);
        frames += pred.num_frames;
        pairs.emplace_back(std::move(pred), timeline_to_frames(gt));
    }

    MetricsReport report;
    report.clip_count = static_cast<int>(pairs.size());
    report.frame_count = frames;
    report.tas_mean = tas_total / static_cast<double>(pairs.size());
    const auto pooled = pooled_region_scores(pairs);
    for (const auto& [region, score] : pooled) {
        report.region_macro_f1[region] = score.macro_f1;
        if (score.eye_close_f1 >= 0.0) {
            report.eye_close_f1 = score.eye_close_f1;
        }
    }
    report.config_hash = cfg.hash();
    report.provenance = "pred=" + pred_dir + " gt=" + gt_dir;

    if (!gen_coeffs.empty() && !ref_coeffs.empty()) {
        const Corpus gen = load_corpus(gen_coeffs);
        const Corpus ref = load_corpus(ref_coeffs);
        auto pool = [](const Corpus& c) {
            Eigen::Index rows = 0;
            for (const auto& clip : c.clips) {
                rows += clip.data.rows();
            }
            Mat all(rows, c.clips[0].data.cols());
            Eigen::Index at = 0;
            for (const auto& clip : c.clips) {
                all.middleRows(at, clip.data.rows()) = clip.data;
                at += clip.data.rows();
            }
            return all;
        };
        auto pool_delta = [](const Corpus& c) {
            std::vector<Mat> deltas;
            for (const auto& clip : c.clips) {
                if (clip.data.rows() >= 2) {
                    deltas.push_back(delta_series(clip.data));
                }
            }
            Eigen::Index rows = 0;
            for (const auto& d : deltas) {
                rows += d.rows();
            }
            Mat all(rows, deltas[0].cols());
            Eigen::Index at = 0;
            for (const auto& d : deltas) {
                all.middleRows(at, d.rows()) = d;
                at += d.rows();
            }
            return all;
        };
        const Mat gen_points = pool(gen);
        const Mat ref_points = pool(ref);
        const FidResult fm = fid(gen_points, ref_points);
        const FidResult dfm = fid(pool_delta(gen), pool_delta(ref));
        report.fid_fm = fm.value;
        report.fid_dfm = dfm.value;
        report.snd_value = snd(fm.value, dfm.value);
        report.fid_regularized = fm.regularized || dfm.regularized;
        report.fid_points_generated = gen_points.rows();
        report.fid_points_reference = ref_points.rows();
        std::vector<Mat> gen_samples, ref_samples;
        for (const auto& clip : gen.clips) {
            gen_samples.push_back(clip.data);
        }
        for (const auto& clip : ref.clips) {
            ref_samples.push_back(clip.data);
        }
        report.var_generated = variance_metric(gen_samples);
        report.var_reference = variance_metric(ref_samples);
    }

    write_text(fs::path(cfg.output_dir) / "metrics.json", metrics_report_to_json(report));
    write_text(fs::path(cfg.output_dir) / "metrics.txt", metrics_report_table(report));
    if (opts.json) {
        std::cout << metrics_report_to_json(report) << "\n";
    } else {
        std::cout << metrics_report_table(report);
    }
    return 0;
}

struct SweepRow {
    int k = 0;
    double beta = 0.0;
    double macro = 0.0;
    long switches = 0;
};

SweepRow run_region_sweep_point(const Corpus& corpus,
                                const std::map<std::string, const Timeline*>& gt,
                                TiccRegionConfig rc, int null_len, double null_value) {
    std::vector<Mat> mats;
    std::vector<std::string> ids;
    for (const auto& clip : corpus.clips) {
        mats.push_back(select_channels(clip, rc.channels));
        ids.push_back(clip.clip_id);
    }
    const ConcatenatedSeries concat = concatenate_with_null(mats, ids, null_len, null_value);
    const bool has_nulls = corpus.clips.size() > 1 && null_len > 0;
    const FitResult fr = fit(concat.data, rc.ticc, has_nulls ? &concat.null_mask : nullptr);

    SweepRow row;
    row.k = rc.ticc.num_clusters;
    row.beta = rc.ticc.beta;
    for (std::size_t i = 1; i < fr.path.labels.size(); ++i) {
        if (fr.path.labels[i] != fr.path.labels[i - 1]) {
            ++row.switches;
        }
    }

    const auto frame_labels = expand_path_to_frames(
        fr.path.labels, static_cast<int>(concat.data.rows()), rc.ticc.window);
    int null_cluster = -1;
    if (has_nulls) {
        null_cluster =
            identify_null_cluster(frame_labels, concat.null_mask, fr.model.cluster_count());
    }
    const ClusterLabelMap map = label_map_from_reference(
        rc, frame_labels, fr.model.cluster_count(), null_cluster, concat, gt);
    const auto labels = apply_label_map(frame_labels, map);

    // region annotations per clip vs planted truth, pooled
    std::vector<std::pair<AnnotationSequence, AnnotationSequence>> pairs;
    std::map<std::string, AnnotationSequence> preds;
    for (const auto& clip : corpus.clips) {
        preds[clip.clip_id] =
            AnnotationSequence::zeros(static_cast<int>(clip.data.rows()), clip.fps);
    }
    for (Eigen::Index g = 0; g < concat.data.rows(); ++g) {
        const auto& ref = concat.index_map[static_cast<std::size_t>(g)];
        if (ref.clip_index < 0) {
            continue;
        }
        const auto& label = labels[static_cast<std::size_t>(g)];
        if (label.kind == ClusterLabel::Kind::Action) {
            preds[ids[static_cast<std::size_t>(ref.clip_index)]].set(ref.frame, label.action,
                                                                     1);
        }
    }
    for (const auto& clip : corpus.clips) {
        pairs.emplace_back(preds[clip.clip_id], timeline_to_frames(*gt.at(clip.clip_id)));
    }
    row.macro = pooled_region_scores(pairs)
                    .at(std::string(region_name(rc.region)))
                    .macro_f1;
    return row;
}

int cmd_sweep(const CommonOpts& opts, const std::string& region_name_arg,
              const std::string& k_range, const std::string& beta_list,
              const std::string& gt_dir) {
    const RunConfig cfg = resolve_config(opts, true);
    if (cfg.manifest.empty()) {
        throw UsageError("sweep: provide --manifest or a config with paths.manifest");
    }
    OutputLock lock{fs::path(cfg.output_dir)};
    const Corpus corpus = load_corpus(cfg.manifest);

    std::map<std::string, Timeline> gt_store;
    std::map<std::string, const Timeline*> gt;
    for (const auto& clip : corpus.clips) {
        const fs::path p = fs::path(gt_dir) / (clip.clip_id + ".json");
        if (!fs::exists(p)) {
            throw DataError("sweep: missing ground truth " + p.string());
        }
        gt_store[clip.clip_id] = load_timeline_json(p.string());
        gt[clip.clip_id] = &gt_store[clip.clip_id];
    }

    const TiccRegionConfig* base = nullptr;
    for (const auto& rc : cfg.pipeline.ticc_regions) {
        if (region_file_key(rc.region) == region_name_arg) {
            base = &rc;
        }
    }
    if (!base) {
        throw UsageError("sweep: unknown TICC region '" + region_name_arg +
                         "' (use brow, eye, or mouth)");
    }

    // "--k 2..6" and "--beta 0,1,5"
    const auto dots = k_range.find("..");
    if (dots == std::string::npos) {
        throw UsageError("sweep: --k expects a range like 2..8");
    }
    const int k_lo = std::stoi(k_range.substr(0, dots));
    const int k_hi = std::stoi(k_range.substr(dots + 2));
    if (k_lo < 1 || k_hi < k_lo) {
        throw UsageError("sweep: bad --k range");
    }
    std::vector<double> betas;
    std::istringstream bs(beta_list);
    std::string cell;
    while (std::getline(bs, cell, ',')) {
        betas.push_back(std::stod(cell));
    }
    if (betas.empty()) {
        throw UsageError("sweep: --beta expects a comma-separated list");
    }

    std::vector<SweepRow> rows;
    for (double beta : betas) {
        for (int k = k_lo; k <= k_hi; ++k) {
            TiccRegionConfig rc = *base;
            rc.ticc.num_clusters = k;
            rc.ticc.beta = beta;
            rc.ticc.seed = cfg.seed;
            rows.push_back(run_region_sweep_point(corpus, gt, rc, cfg.pipeline.null_len,
                                                  cfg.pipeline.null_value));
            std::cerr << "sweep " << region_name_arg << " k=" << k << " beta=" << beta
                      << " -> macro_f1=" << rows.back().macro
                      << " switches=" << rows.back().switches << "\n";
        }
    }

    std::ostringstream csv;
    csv << "region,k,beta,macro_f1,switches\n";
    for (const auto& row : rows) {
        csv << region_name_arg << "," << row.k << "," << row.beta << "," << row.macro << ","
            << row.switches << "\n";
    }
    write_text(fs::path(cfg.output_dir) / "sweep.csv", csv.str());

    std::vector<double> xs;
    for (int k = k_lo; k <= k_hi; ++k) {
        xs.push_back(k);
    }
    std::vector<std::pair<std::string, std::vector<double>>> curves;
    std::size_t at = 0;
    for (double beta : betas) {
        std::vector<double> ys;
        for (int k = k_lo; k <= k_hi; ++k) {
            ys.push_back(rows[at++].macro);
        }
        char label[32];
        std::snprintf(label, sizeof(label), "beta=%g", beta);
        curves.emplace_back(label, std::move(ys));
    }
    write_text(fs::path(cfg.output_dir) / "sweep_macro_f1.svg",
               svg_curves(xs, curves, "clusters", "macro-F1"));
    std::cout << (fs::path(cfg.output_dir) / "sweep.csv").string() << "\n";
    return 0;
}

int cmd_roundtrip(const CommonOpts& opts) {
    const RunConfig cfg = resolve_config(opts, true);
    OutputLock lock{fs::path(cfg.output_dir)};

    const SynthCorpus synth = synth_corpus(cfg.synth.clips,
                                           {cfg.synth.len_min, cfg.synth.len_max},
                                           cfg.synth.action_rate, synth_config_from(cfg));
    const PipelineConfig pcfg =
        opts.config_path.empty() ? synth_tuned_pipeline(cfg) : cfg.pipeline;

    std::map<std::string, const Timeline*> gt;
    for (std::size_t i = 0; i < synth.corpus.clips.size(); ++i) {
        gt[synth.corpus.clips[i].clip_id] = &synth.ground_truth[i];
    }

    const PipelineResult pass1 = run_pipeline(synth.corpus, pcfg, {});
    const auto maps = auto_label_maps(pcfg, pass1, gt);
    std::map<RegionId, TiccModel> models;
    for (const auto& [region, model] : pass1.models) {
        models[region] = model;
    }
    const PipelineResult result = run_pipeline(synth.corpus, pcfg, maps, &models);
    if (result.labels_required) {
        throw ConvergenceError("roundtrip: labeling pass failed");
    }

    double tas_total = 0.0;
    std::vector<std::pair<AnnotationSequence, AnnotationSequence>> pairs;
    for (std::size_t i = 0; i < synth.corpus.clips.size(); ++i) {
        const auto& id = synth.corpus.clips[i].clip_id;
        const auto& annotation = result.annotations.at(id);
        tas_total += tas(synth.ground_truth[i], annotation);
        pairs.emplace_back(annotation, timeline_to_frames(synth.ground_truth[i]));
    }
    const double tas_mean = tas_total / static_cast<double>(synth.corpus.clips.size());

    MetricsReport report;
    report.clip_count = static_cast<int>(synth.corpus.clips.size());
    report.tas_mean = tas_mean;
    for (const auto& [region, score] : pooled_region_scores(pairs)) {
        report.region_macro_f1[region] = score.macro_f1;
        if (score.eye_close_f1 >= 0.0) {
            report.eye_close_f1 = score.eye_close_f1;
        }
        report.frame_count = 0;
    }
    for (const auto& [id, annotation] : result.annotations) {
        report.frame_count += annotation.num_frames;
    }
    report.config_hash = cfg.hash();
    report.provenance =
        "roundtrip seed " + std::to_string(cfg.seed) + ", " +
        std::to_string(cfg.synth.clips) + " synthetic clips";

    write_annotations(cfg, synth.corpus, result);
    write_text(fs::path(cfg.output_dir) / "metrics.json", metrics_report_to_json(report));
    write_text(fs::path(cfg.output_dir) / "metrics.txt", metrics_report_table(report));
    write_text(fs::path(cfg.output_dir) / "run_config.toml", cfg.to_toml());

    if (opts.json) {
        std::cout << metrics_report_to_json(report) << "\n";
    } else {
        std::printf("TAS %.4f over %d clips\n", tas_mean, report.clip_count);
        for (const auto& [region, score] : report.region_macro_f1) {
            std::printf("macro_f1[%s] %.4f\n", region.c_str(), score);
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"frame-level facial action timeline annotation and evaluation"};
    app.require_subcommand(1);
    app.fallthrough(); // global options may follow the subcommand

    CommonOpts opts;
    app.add_option("-c,--config", opts.config_path, "TOML run configuration");
    app.add_option("--manifest", opts.manifest, "corpus manifest JSON");
    app.add_option("-o,--output-dir", opts.output_dir, "output directory");
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "random seed");
    app.add_flag("--json", opts.json, "machine-readable output on stdout");

    auto* ingest_cmd = app.add_subcommand("ingest", "load and validate a corpus");
    auto* fit_cmd = app.add_subcommand("fit", "fit per-region TICC models");
    auto* labels_cmd = app.add_subcommand("labels", "cluster label map workflow");
    bool overwrite_skeletons = false;
    auto* labels_init = labels_cmd->add_subcommand("init", "emit label map skeletons");
    labels_init->add_flag("--overwrite", overwrite_skeletons, "replace existing maps");
    auto* labels_apply =
        labels_cmd->add_subcommand("apply", "check label maps against fitted models");
    labels_cmd->require_subcommand(1);
    auto* annotate_cmd = app.add_subcommand("annotate", "run the full annotation pipeline");
    auto* report_cmd = app.add_subcommand("report", "write the cluster inspection report");
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic oracle corpus");
    auto* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
    std::string pred_dir, gt_dir, gen_coeffs, ref_coeffs;
    eval_cmd->add_option("--pred", pred_dir, "directory of predicted annotation CSVs")
        ->required();
    eval_cmd->add_option("--gt", gt_dir, "directory of ground-truth timeline JSONs")
        ->required();
    eval_cmd->add_option("--gen-coeffs", gen_coeffs,
                         "manifest of generated coefficient series (enables FID/Var)");
    eval_cmd->add_option("--ref-coeffs", ref_coeffs,
                         "manifest of reference coefficient series");
    auto* sweep_cmd = app.add_subcommand("sweep", "grid over cluster count and beta");
    std::string sweep_region = "brow", sweep_k = "2..8", sweep_beta = "5", sweep_gt;
    sweep_cmd->add_option("--region", sweep_region, "brow, eye, or mouth");
    sweep_cmd->add_option("--k", sweep_k, "cluster range, e.g. 4..14");
    sweep_cmd->add_option("--beta", sweep_beta, "comma-separated beta values");
    sweep_cmd->add_option("--gt", sweep_gt, "directory of planted timeline JSONs")
        ->required();
    auto* roundtrip_cmd =
        app.add_subcommand("roundtrip", "synth -> annotate -> TAS in one shot");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e); // --help
        }
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }
    if (seed_opt->count() > 0) {
        opts.seed = seed_value;
    }

    try {
        if (ingest_cmd->parsed()) {
            return cmd_ingest(opts);
        }
        if (fit_cmd->parsed()) {
            return cmd_fit(opts);
        }
        if (labels_cmd->parsed()) {
            if (labels_init->parsed()) {
                return cmd_labels_init(opts, overwrite_skeletons);
            }
            if (labels_apply->parsed()) {
                return cmd_labels_apply(opts);
            }
        }
        if (annotate_cmd->parsed()) {
            return cmd_annotate(opts);
        }
        if (report_cmd->parsed()) {
            return cmd_report(opts);
        }
        if (synth_cmd->parsed()) {
            return cmd_synth(opts);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(opts, pred_dir, gt_dir, gen_coeffs, ref_coeffs);
        }
        if (sweep_cmd->parsed()) {
            return cmd_sweep(opts, sweep_region, sweep_k, sweep_beta, sweep_gt);
        }
        if (roundtrip_cmd->parsed()) {
            return cmd_roundtrip(opts);
        }
        std::cerr << "usage error: no subcommand\n";
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const ConvergenceError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    }
}
