// SPDX-License-Identifier: Apache-2.0
#pragma once

// End-to-end flow over files: view selection, palette, extraction,
// refinement and evaluation, with every intermediate written to disk.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "coregs/harness.hpp"
#include "coregs/io.hpp"
#include "coregs/palette.hpp"
#include "coregs/poi.hpp"
#include "coregs/report.hpp"
#include "coregs/trainer.hpp"

namespace coregs {

struct PipelineOptions {
    std::filesystem::path cameras;   // camera JSON (images + segmaps)
    std::filesystem::path splats;    // labeled PLY
    std::filesystem::path out_dir;
    std::int64_t class_id = 1;
    double min_mask_fraction = 0.001;
    int lattice = 16;
    double downscale = 0.5;
    IsolationMode isolation = IsolationMode::kMaxMin;
    bool warmup = false;              // run init_iters of full-frame training first
    bool extract_by_projection = false;
    RefineConfig cfg;
};

namespace detail {

inline std::string indexed(const char* stem, std::size_t i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%03zu%s", stem, i, ext);
    return buf;
}

}  // namespace detail

/// Final masked metrics of the refined splats over p* against the composited
/// targets, averaged over the retained views.
template <typename T>
MetricReport evaluate_refined(const SplatScene<T>& scene, const std::vector<TrainingView<T>>& views,
                              const PoiSelection& sel, const ColorRGB& p_star, const RasterSettings& rs) {
    MetricReport avg;
    avg.masked_psnr = 0.0;
    avg.masked_ssim = 0.0;
    for (std::size_t k = 0; k < views.size(); ++k) {
        const auto img = render(scene, views[k].camera, p_star, rs).image;
        const auto m = evaluate(img, views[k].target, &sel.masks[k]);
        avg.psnr += m.psnr;
        avg.ssim += m.ssim;
        *avg.masked_psnr += *m.masked_psnr;
        *avg.masked_ssim += *m.masked_ssim;
        avg.pixels += m.pixels;
        avg.masked_pixels += m.masked_pixels;
    }
    const double n = static_cast<double>(views.size());
    avg.psnr /= n;
    avg.ssim /= n;
    *avg.masked_psnr /= n;
    *avg.masked_ssim /= n;
    return avg;
}

template <typename T>
json run_pipeline(const PipelineOptions& opt, std::ostream* progress = nullptr) {
    opt.cfg.validate();
    namespace fs = std::filesystem;
    detail::Stopwatch total;
    json stages = json::object();
    const auto stage = [&](const char* name, auto&& fn) {
        if (progress) *progress << "[" << name << "]\n";
        detail::Stopwatch sw;
        try {
            fn();
        } catch (...) {
            if (progress) *progress << "stage " << name << " failed\n";
            throw;
        }
        stages[name] = sw.seconds();
    };
    RasterSettings rs = opt.cfg.raster;
    rs.workers = opt.cfg.workers;

    Dataset<T> ds;
    SplatScene<T> scene;
    PlyInfo ply;
    stage("load", [&] {
        ds = load_dataset<T>(opt.cameras);
        scene = load_splats<T>(opt.splats, &ply);
        fs::create_directories(opt.out_dir);
        fs::create_directories(opt.out_dir / "masks");
        fs::create_directories(opt.out_dir / "targets");
        fs::create_directories(opt.out_dir / "renders");
    });
    for (const auto& w : ply.warnings)
        if (progress) *progress << "warning: " << w << "\n";

    PoiSelection sel;
    stage("select_views", [&] {
        sel = select_views(ds.segmap_list(), opt.class_id, opt.min_mask_fraction);
        save_json(to_json(sel), opt.out_dir / "selection.json");
        for (std::size_t k = 0; k < sel.views.size(); ++k)
            save_mask(sel.masks[k], opt.out_dir / "masks" / detail::indexed("mask", sel.views[k], ".png"));
    });

    ColorSet colors;
    stage("collect_colors", [&] {
        std::vector<ImageBuffer<T>> retained;
        for (const auto v : sel.views) retained.push_back(ds.images[v]);
        colors = collect_colors(retained, opt.downscale);
    });

    FurthestColor palette;
    stage("furthest_color", [&] {
        palette = furthest_color(colors, CandidatePalette::lattice(opt.lattice), opt.isolation, opt.cfg.workers);
        json j = to_json(palette, opt.lattice, opt.isolation);
        j["colors"] = colors.colors.size();
        j["d_remove"] = removal_distance(palette.d_avg, opt.cfg.t_r);
        save_json(j, opt.out_dir / "palette.json");
    });

    if (opt.warmup && opt.cfg.init_iters > 0) {
        stage("warmup", [&] {
            std::vector<TrainingView<T>> full;
            for (std::size_t v = 0; v < ds.cameras.size(); ++v) full.push_back({ds.cameras[v], ds.images[v]});
            TrainLog wl;
            scene = warmup_train(scene, std::span<const TrainingView<T>>(full), opt.cfg, ColorRGB(0, 0, 0), &wl);
            write_train_log(wl, opt.out_dir / "warmup_log.jsonl");
            save_splats(scene, opt.out_dir / "warmup.ply");
        });
    }

    SplatScene<T> poi;
    std::vector<TrainingView<T>> views;
    stage("extract_poi", [&] {
        if (opt.extract_by_projection) {
            std::vector<CameraModel> cams;
            for (const auto v : sel.views) cams.push_back(ds.cameras[v]);
            poi = extract_poi_by_projection(scene, std::span<const CameraModel>(cams), sel);
        } else {
            poi = extract_poi(scene, opt.class_id);
        }
        save_splats(poi, opt.out_dir / "poi_init.ply");
        views = make_refine_views(std::span<const CameraModel>(ds.cameras), std::span<const ImageBuffer<T>>(ds.images),
                                  sel, palette.p_star);
        for (std::size_t k = 0; k < views.size(); ++k)
            save_image(views[k].target, opt.out_dir / "targets" / detail::indexed("target", sel.views[k], ".png"));
    });

    MetricReport initial;
    stage("initial_metrics", [&] { initial = evaluate_refined(poi, views, sel, palette.p_star, rs); });

    RefineResult<T> result;
    stage("refine", [&] {
        result = refine(poi, views, palette, opt.cfg);
        save_splats(result.scene, opt.out_dir / "refined.ply");
    });

    stage("metrics", [&] {
        result.log.final_metrics = evaluate_refined(result.scene, views, sel, palette.p_star, rs);
        for (std::size_t k = 0; k < views.size(); ++k)
            save_image(render(result.scene, views[k].camera, palette.p_star, rs).image,
                       opt.out_dir / "renders" / detail::indexed("render", sel.views[k], ".png"));
        save_json(json{{"initial", to_json(initial)}, {"final", to_json(*result.log.final_metrics)}},
                  opt.out_dir / "metrics.json");
        write_train_log(result.log, opt.out_dir / "train_log.jsonl");
    });

    std::size_t removed = 0;
    for (const auto& f : result.log.filter_passes) removed += f.flagged;
    json s{{"schema", "coregs.pipeline_summary/1"},
           {"precision", sizeof(T) == 4 ? 32 : 64},
           {"class_id", opt.class_id},
           {"config", to_json(opt.cfg)},
           {"warmup", opt.warmup},
           {"views", {{"total", ds.cameras.size()}, {"retained", sel.views.size()}}},
           {"palette",
            {{"p_star", to_json(palette.p_star)},
             {"d_avg", palette.d_avg},
             {"d_remove", removal_distance(palette.d_avg, opt.cfg.t_r)},
             {"colors", colors.colors.size()}}},
           {"splats",
            {{"input", scene.size()}, {"poi", poi.size()}, {"final", result.scene.size()}, {"filtered", removed}}},
           {"filter_passes", result.log.filter_passes.size()},
           {"iterations", result.log.losses.size()},
           {"final_loss", result.log.losses.empty() ? json(nullptr) : json(result.log.losses.back())},
           {"metrics", {{"initial", to_json(initial)}, {"final", to_json(*result.log.final_metrics)}}},
           {"phase_seconds", result.log.phase_seconds},
           {"stage_seconds", stages}};
    s["total_seconds"] = total.seconds();
    save_json(s, opt.out_dir / "summary.json");
    return s;
}

//------------------------------------------------------------------------------
// Synthetic dataset directories

struct SynthOutput {
    std::filesystem::path cameras;
    std::filesystem::path splats;
    std::filesystem::path truth_splats;
    std::filesystem::path ids;
};

/// Writes cameras.json, images/, segmaps/, the coarse scene with floaters
/// (scene.ply), the ground truth (truth.ply) and ground_truth.json.
template <typename T>
SynthOutput save_synth_dataset(const HarnessScenario<T>& s, const SynthSpec& spec, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "segmaps");
    std::vector<CameraEntry> entries;
    for (std::size_t v = 0; v < s.truth.views.size(); ++v) {
        const auto& view = s.truth.views[v];
        CameraEntry e;
        e.camera = view.camera;
        e.image = "images/" + detail::indexed("view", v, ".png");
        e.segmap = "segmaps/" + detail::indexed("view", v, ".png");
        save_image(view.image, dir / e.image);
        save_segmap(view.segmap, dir / *e.segmap);
        entries.push_back(e);
    }
    SynthOutput out{dir / "cameras.json", dir / "scene.ply", dir / "truth.ply", dir / "ground_truth.json"};
    save_cameras(entries, out.cameras);
    save_splats(s.coarse, out.splats);
    save_splats(s.truth.scene, out.truth_splats);
    save_json(json{{"spec", to_json(spec)},
                   {"poi_class", kPoiClass},
                   {"poi_ids", s.truth.poi_ids},
                   {"background_ids", s.truth.background_ids},
                   {"floater_ids", s.floater_ids},
                   {"floater_offset", s.floater_offset},
                   {"p_star", to_json(s.palette.p_star)},
                   {"d_avg", s.palette.d_avg}},
              out.ids);
    return out;
}

}  // namespace coregs
