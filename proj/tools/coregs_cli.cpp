// SPDX-License-Identifier: Apache-2.0
// Command-line front end: palette, extract, filter, refine, render, metrics,
// synth, experiment and the end-to-end pipeline.

#include <CLI/CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "coregs/filter.hpp"
#include "coregs/harness.hpp"
#include "coregs/io.hpp"
#include "coregs/metrics.hpp"
#include "coregs/palette.hpp"
#include "coregs/pipeline.hpp"
#include "coregs/poi.hpp"
#include "coregs/report.hpp"
#include "coregs/trainer.hpp"

namespace fs = std::filesystem;
using namespace coregs;

namespace {

struct Common {
    std::uint64_t seed = 0;
    unsigned workers = 1;
    int precision = 32;
};

struct RefineFlags {
    int init_iters = 3000;
    int total_iters = 30000;
    int filter_period = 1000;
    double t_r = 0.5;
    double lambda = 0.2;
    std::string views = "all";
    std::string aggregate = "any";
    bool densify = false;
    double lr_position = LearningRates{}.position_init;
    double lr_sh = LearningRates{}.sh;
    double lr_opacity = LearningRates{}.opacity;
    double lr_scale = LearningRates{}.scale;
    double lr_rotation = LearningRates{}.rotation;
};

int parse_view_stride(const std::string& s) {
    if (s == "all") return 1;
    if (s.rfind("stride:", 0) == 0) {
        const int k = std::stoi(s.substr(7));
        if (k < 1) throw InvalidInput("--views stride must be >= 1");
        return k;
    }
    throw InvalidInput("--views must be 'all' or 'stride:k', got '" + s + "'");
}

FlagAggregation parse_aggregation(const std::string& s) {
    if (s == "any") return FlagAggregation::kAnyView;
    if (s == "all") return FlagAggregation::kAllViews;
    throw InvalidInput("--aggregate must be 'any' or 'all'");
}

ColorRGB parse_color(const std::vector<double>& v) {
    if (v.size() != 3) throw InvalidInput("a color needs three components");
    return {v[0], v[1], v[2]};
}

void add_common(CLI::App* app, Common& c) {
    app->add_option("--seed", c.seed, "RNG seed")->envname("CORE_GS_SEED");
    app->add_option("--workers", c.workers, "worker threads (0 = hardware)")->envname("CORE_GS_WORKERS");
    app->add_option("--precision", c.precision, "floating point width")
        ->check(CLI::IsMember({32, 64}))
        ->envname("CORE_GS_PRECISION");
}

void add_refine_flags(CLI::App* app, RefineFlags& f) {
    app->add_option("--init-iters", f.init_iters, "iterations spent before refinement")->envname("CORE_GS_INIT_ITERS");
    app->add_option("--total-iters", f.total_iters, "total iterations (refinement = total - init)")
        ->envname("CORE_GS_TOTAL_ITERS");
    app->add_option("--filter-period", f.filter_period, "iterations between color filter passes")
        ->envname("CORE_GS_FILTER_PERIOD");
    app->add_option("--t-r", f.t_r, "removal threshold; d_remove = t_r * d_avg")->envname("CORE_GS_T_R");
    app->add_option("--lambda", f.lambda, "SSIM weight in the loss")->envname("CORE_GS_LAMBDA");
    app->add_option("--views", f.views, "filter views: all | stride:k")->envname("CORE_GS_VIEWS");
    app->add_option("--aggregate", f.aggregate, "flag if close in any | all evaluated views");
    app->add_flag("--densify", f.densify, "enable clone / split / opacity pruning");
    app->add_option("--lr-position", f.lr_position);
    app->add_option("--lr-sh", f.lr_sh);
    app->add_option("--lr-opacity", f.lr_opacity);
    app->add_option("--lr-scale", f.lr_scale);
    app->add_option("--lr-rotation", f.lr_rotation);
}

RefineConfig make_config(const RefineFlags& f, const Common& c) {
    RefineConfig cfg;
    cfg.init_iters = f.init_iters;
    cfg.total_iters = f.total_iters;
    cfg.filter_period = f.filter_period;
    cfg.t_r = f.t_r;
    cfg.lambda = f.lambda;
    cfg.filter_view_stride = parse_view_stride(f.views);
    cfg.filter_aggregation = parse_aggregation(f.aggregate);
    cfg.densify.enabled = f.densify;
    cfg.lr.position_init = f.lr_position;
    cfg.lr.sh = f.lr_sh;
    cfg.lr.opacity = f.lr_opacity;
    cfg.lr.scale = f.lr_scale;
    cfg.lr.rotation = f.lr_rotation;
    cfg.seed = c.seed;
    cfg.workers = resolve_workers(c.workers);
    return cfg;
}

void emit(const json& j, const std::string& out) {
    if (out.empty() || out == "-") std::cout << j.dump(2) << "\n";
    else save_json(j, out);
}

template <typename Fn>
int dispatch(int precision, Fn&& fn) {
    if (precision == 64) fn(double{});
    else fn(float{});
    return 0;
}

FurthestColor palette_from_file(const fs::path& p) {
    const auto j = json::parse(detail::read_file(p));
    const auto c = j.at("p_star");
    return {ColorRGB(c[0].get<double>(), c[1].get<double>(), c[2].get<double>()), j.at("d_avg").get<double>()};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Point-of-interest refinement for Gaussian splat scenes"};
    app.require_subcommand(1);
    Common common;
    RefineFlags rf;

    // palette
    auto* palette = app.add_subcommand("palette", "furthest color p* and d_avg of a dataset");
    std::string pal_cams, pal_out;
    std::int64_t pal_class = -1;
    int pal_lattice = 16;
    double pal_downscale = 0.5, pal_min_frac = 0.001;
    std::string pal_mode = "max_min";
    palette->add_option("--cameras", pal_cams, "camera JSON")->required();
    palette->add_option("--class-id", pal_class, "restrict to views retained for this class (-1 = all views)");
    palette->add_option("--lattice", pal_lattice, "candidates per channel");
    palette->add_option("--downscale", pal_downscale);
    palette->add_option("--min-mask-fraction", pal_min_frac);
    palette->add_option("--isolation", pal_mode)->check(CLI::IsMember({"max_min", "mean_min"}));
    palette->add_option("--out", pal_out, "output JSON (default stdout)");
    add_common(palette, common);

    // extract
    auto* extract = app.add_subcommand("extract", "keep the splats of one class");
    std::string ex_in, ex_out, ex_cams;
    std::int64_t ex_class = 1;
    bool ex_complement = false;
    extract->add_option("--splats", ex_in)->required();
    extract->add_option("--class-id", ex_class)->required();
    extract->add_option("--out", ex_out)->required();
    extract->add_option("--by-projection", ex_cams, "camera JSON with segmaps: select by projected mask majority");
    extract->add_flag("--complement", ex_complement, "write the other splats instead");
    add_common(extract, common);

    // filter
    auto* filter = app.add_subcommand("filter", "remove splats whose color is close to p*");
    std::string fi_in, fi_out, fi_cams, fi_palette, fi_report;
    std::vector<double> fi_pstar;
    double fi_davg = -1.0;
    filter->add_option("--splats", fi_in)->required();
    filter->add_option("--cameras", fi_cams)->required();
    filter->add_option("--palette", fi_palette, "palette JSON with p_star and d_avg");
    filter->add_option("--p-star", fi_pstar, "p* as r g b")->expected(3);
    filter->add_option("--d-avg", fi_davg);
    filter->add_option("--t-r", rf.t_r)->envname("CORE_GS_T_R");
    filter->add_option("--views", rf.views, "all | stride:k")->envname("CORE_GS_VIEWS");
    filter->add_option("--aggregate", rf.aggregate, "any | all");
    filter->add_option("--out", fi_out)->required();
    filter->add_option("--report", fi_report, "removal report JSON");
    add_common(filter, common);

    // refine
    auto* refine_cmd = app.add_subcommand("refine", "refine one class against p*-composited targets");
    std::string re_in, re_cams, re_out, re_log, re_summary, re_palette;
    std::int64_t re_class = 1;
    refine_cmd->add_option("--splats", re_in, "labeled PLY")->required();
    refine_cmd->add_option("--cameras", re_cams, "camera JSON with segmaps")->required();
    refine_cmd->add_option("--class-id", re_class)->required();
    refine_cmd->add_option("--palette", re_palette, "reuse a palette JSON instead of recomputing");
    refine_cmd->add_option("--out", re_out, "refined PLY")->required();
    refine_cmd->add_option("--log", re_log, "TrainLog JSON lines");
    refine_cmd->add_option("--summary", re_summary, "summary JSON");
    add_refine_flags(refine_cmd, rf);
    add_common(refine_cmd, common);

    // render
    auto* render_cmd = app.add_subcommand("render", "render a splat file from dataset cameras");
    std::string rd_in, rd_cams, rd_out;
    std::vector<double> rd_bg{0, 0, 0};
    int rd_view = -1;
    render_cmd->add_option("--splats", rd_in)->required();
    render_cmd->add_option("--cameras", rd_cams)->required();
    render_cmd->add_option("--out", rd_out, "output directory")->required();
    render_cmd->add_option("--view", rd_view, "single view index (-1 = all)");
    render_cmd->add_option("--background", rd_bg, "r g b")->expected(3);
    add_common(render_cmd, common);

    // metrics
    auto* metrics_cmd = app.add_subcommand("metrics", "PSNR / SSIM of two images");
    std::string me_a, me_b, me_mask, me_out;
    metrics_cmd->add_option("a", me_a)->required();
    metrics_cmd->add_option("b", me_b)->required();
    metrics_cmd->add_option("--mask", me_mask, "8-bit mask PNG, nonzero = inside");
    metrics_cmd->add_option("--out", me_out);
    add_common(metrics_cmd, common);

    // synth
    auto* synth = app.add_subcommand("synth", "write a synthetic dataset directory");
    SynthSpec spec;
    std::string sy_out;
    const auto add_spec = [&](CLI::App* a) {
        a->add_option("--poi-splats", spec.n_poi_splats);
        a->add_option("--background-splats", spec.n_background_splats);
        a->add_option("--floaters", spec.n_floaters);
        a->add_option("--floater-offset", spec.floater_color_offset, "RGB distance from p* (negative: 0.4 * d_avg)");
        a->add_option("--cameras", spec.n_cameras);
        a->add_option("--width", spec.width);
        a->add_option("--height", spec.height);
        a->add_option("--sh-degree", spec.sh_degree);
    };
    add_spec(synth);
    synth->add_option("--out", sy_out, "output directory")->required();
    add_common(synth, common);

    // experiment
    auto* experiment = app.add_subcommand("experiment", "full-scene training vs point-of-interest refinement");
    std::string xp_out;
    bool xp_no_full = false;
    add_spec(experiment);
    add_refine_flags(experiment, rf);
    experiment->add_flag("--poi-only", xp_no_full, "skip the full-scene row");
    experiment->add_option("--out", xp_out, "output prefix for .json and .csv")->required();
    add_common(experiment, common);

    // pipeline
    auto* pipeline = app.add_subcommand("pipeline", "select views, palette, extract, refine, evaluate");
    PipelineOptions po;
    std::string pi_cams, pi_splats, pi_out;
    pipeline->add_option("--cameras", pi_cams)->required();
    pipeline->add_option("--splats", pi_splats)->required();
    pipeline->add_option("--class-id", po.class_id)->required();
    pipeline->add_option("--out", pi_out, "output directory")->required();
    pipeline->add_option("--min-mask-fraction", po.min_mask_fraction);
    pipeline->add_option("--lattice", po.lattice);
    pipeline->add_flag("--warmup", po.warmup, "train init_iters on full frames before extraction");
    pipeline->add_flag("--extract-by-projection", po.extract_by_projection);
    add_refine_flags(pipeline, rf);
    add_common(pipeline, common);

    CLI11_PARSE(app, argc, argv);

    try {
        if (palette->parsed()) {
            return dispatch(common.precision, [&](auto tag) {
                using T = decltype(tag);
                const auto ds = load_dataset<T>(pal_cams);
                std::vector<ImageBuffer<T>> imgs;
                json j;
                if (pal_class >= 0) {
                    const auto sel = select_views(ds.segmap_list(), pal_class, pal_min_frac);
                    for (const auto v : sel.views) imgs.push_back(ds.images[v]);
                    j["retained_views"] = sel.views;
                } else {
                    imgs = ds.images;
                }
                const auto colors = collect_colors(imgs, pal_downscale);
                const auto mode = pal_mode == "mean_min" ? IsolationMode::kMeanMin : IsolationMode::kMaxMin;
                const auto fc = furthest_color(colors, CandidatePalette::lattice(pal_lattice), mode,
                                               resolve_workers(common.workers));
                j.update(to_json(fc, pal_lattice, mode));
                j["colors"] = colors.colors.size();
                emit(j, pal_out);
            });
        }
        if (extract->parsed()) {
            return dispatch(common.precision, [&](auto tag) {
                using T = decltype(tag);
                const auto scene = load_splats<T>(ex_in);
                SplatScene<T> out;
                if (!ex_cams.empty()) {
                    const auto ds = load_dataset<T>(ex_cams);
                    const auto sel = select_views(ds.segmap_list(), ex_class);
                    std::vector<CameraModel> cams;
                    for (const auto v : sel.views) cams.push_back(ds.cameras[v]);
                    out = extract_poi_by_projection(scene, std::span<const CameraModel>(cams), sel);
                } else {
                    out = ex_complement ? extract_complement(scene, ex_class) : extract_poi(scene, ex_class);
                }
                save_splats(out, ex_out);
                std::cout << json{{"input", scene.size()}, {"output", out.size()}}.dump() << "\n";
            });
        }
        if (filter->parsed()) {
            return dispatch(common.precision, [&](auto tag) {
                using T = decltype(tag);
                FurthestColor fc;
                if (!fi_palette.empty()) fc = palette_from_file(fi_palette);
                if (!fi_pstar.empty()) fc.p_star = parse_color(fi_pstar);
                if (fi_davg >= 0.0) fc.d_avg = fi_davg;
                if (fi_palette.empty() && (fi_pstar.empty() || fi_davg < 0.0))
                    throw InvalidInput("filter needs --palette or both --p-star and --d-avg");
                const auto scene = load_splats<T>(fi_in);
                const auto cams = load_cameras(fi_cams);
                std::vector<CameraModel> models;
                for (const auto& c : cams) models.push_back(c.camera);
                FilterConfig cfg;
                cfg.t_r = rf.t_r;
                cfg.view_stride = parse_view_stride(rf.views);
                cfg.aggregation = parse_aggregation(rf.aggregate);
                cfg.workers = resolve_workers(common.workers);
                const auto report = flag_artifacts(scene, models, fc.p_star, removal_distance(fc.d_avg, cfg.t_r), cfg);
                const auto out = prune(scene, report);
                save_splats(out, fi_out);
                json j = to_json(report);
                j["input"] = scene.size();
                j["remaining"] = out.size();
                if (!fi_report.empty()) save_json(j, fi_report);
                std::cout << json{{"flagged", report.flagged.size()}, {"remaining", out.size()}}.dump() << "\n";
            });
        }
        if (refine_cmd->parsed()) {
            return dispatch(common.precision, [&](auto tag) {
                using T = decltype(tag);
                const auto cfg = make_config(rf, common);
                cfg.validate();
                const auto ds = load_dataset<T>(re_cams);
                const auto scene = load_splats<T>(re_in);
                const auto sel = select_views(ds.segmap_list(), re_class);
                FurthestColor fc;
                if (!re_palette.empty()) {
                    fc = palette_from_file(re_palette);
                } else {
                    std::vector<ImageBuffer<T>> imgs;
                    for (const auto v : sel.views) imgs.push_back(ds.images[v]);
                    fc = furthest_color(collect_colors(imgs), CandidatePalette::lattice(16), IsolationMode::kMaxMin,
                                        cfg.workers);
                }
                const auto poi = extract_poi(scene, re_class);
                const auto views = make_refine_views(std::span<const CameraModel>(ds.cameras),
                                                     std::span<const ImageBuffer<T>>(ds.images), sel, fc.p_star);
                const auto res = refine(poi, views, fc, cfg);
                save_splats(res.scene, re_out);
                if (!re_log.empty()) write_train_log(res.log, fs::path(re_log));
                const json s{{"iterations", res.log.losses.size()},
                             {"filter_passes", res.log.filter_passes.size()},
                             {"splats", {{"input", poi.size()}, {"final", res.scene.size()}}},
                             {"p_star", to_json(fc.p_star)},
                             {"d_avg", fc.d_avg},
                             {"phase_seconds", res.log.phase_seconds}};
                emit(s, re_summary);
            });
        }
        if (render_cmd->parsed()) {
            return dispatch(common.precision, [&](auto tag) {
                using T = decltype(tag);
                const auto scene = load_splats<T>(rd_in);
                const auto cams = load_cameras(rd_cams);
                fs::create_directories(rd_out);
                RasterSettings rs;
                rs.workers = resolve_workers(common.workers);
                for (std::size_t v = 0; v < cams.size(); ++v) {
                    if (rd_view >= 0 && v != std::size_t(rd_view)) continue;
                    save_image(render(scene, cams[v].camera, parse_color(rd_bg), rs).image,
                               fs::path(rd_out) / detail::indexed("render", v, ".png"));
                }
            });
        }
        if (metrics_cmd->parsed()) {
            return dispatch(common.precision, [&](auto tag) {
                using T = decltype(tag);
                const auto a = load_image<T>(me_a);
                const auto b = load_image<T>(me_b);
                std::optional<MaskBuffer> mask;
                if (!me_mask.empty()) mask = load_mask(me_mask);
                emit(to_json(evaluate(a, b, mask ? &*mask : nullptr)), me_out);
            });
        }
        if (synth->parsed()) {
            return dispatch(common.precision, [&](auto tag) {
                using T = decltype(tag);
                spec.seed = common.seed;
                RasterSettings rs;
                rs.workers = resolve_workers(common.workers);
                const auto s = build_scenario<T>(spec, rs);
                const auto out = save_synth_dataset(s, spec, sy_out);
                std::cout << json{{"cameras", out.cameras.string()}, {"splats", out.splats.string()},
                                  {"p_star", to_json(s.palette.p_star)}, {"d_avg", s.palette.d_avg}}
                                 .dump()
                          << "\n";
            });
        }
        if (experiment->parsed()) {
            return dispatch(common.precision, [&](auto tag) {
                using T = decltype(tag);
                spec.seed = common.seed;
                const auto cfg = make_config(rf, common);
                const auto rep = run_experiment<T>(spec, cfg, !xp_no_full);
                save_json(to_json(rep), xp_out + ".json");
                std::ofstream(xp_out + ".csv") << to_csv(rep);
                std::cout << to_csv(rep);
            });
        }
        if (pipeline->parsed()) {
            return dispatch(common.precision, [&](auto tag) {
                using T = decltype(tag);
                po.cameras = pi_cams;
                po.splats = pi_splats;
                po.out_dir = pi_out;
                po.cfg = make_config(rf, common);
                const auto s = run_pipeline<T>(po, &std::cerr);
                std::cout << json{{"summary", (fs::path(pi_out) / "summary.json").string()},
                                  {"final", s["metrics"]["final"]},
                                  {"total_seconds", s["total_seconds"]}}
                                 .dump()
                          << "\n";
            });
        }
    } catch (const PoiNotFound& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const InvalidInput& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
