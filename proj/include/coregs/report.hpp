// SPDX-License-Identifier: Apache-2.0
#pragma once

// JSON / CSV views of the result types.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "coregs/filter.hpp"
#include "coregs/harness.hpp"
#include "coregs/metrics.hpp"
#include "coregs/palette.hpp"
#include "coregs/trainer.hpp"

namespace coregs {

using json = nlohmann::json;

inline json to_json(const ColorRGB& c) { return json::array({c.r, c.g, c.b}); }

inline json to_json(const MetricReport& m) {
    json j{{"psnr", m.psnr}, {"ssim", m.ssim}, {"pixels", m.pixels}, {"psnr_cap", kPsnrCap}};
    if (m.masked_psnr) {
        j["masked_psnr"] = *m.masked_psnr;
        j["masked_ssim"] = *m.masked_ssim;
        j["masked_pixels"] = m.masked_pixels;
    }
    return j;
}

inline json to_json(const FurthestColor& f, int lattice, IsolationMode mode) {
    return {{"p_star", to_json(f.p_star)},
            {"d_avg", f.d_avg},
            {"lattice", lattice},
            {"isolation", mode == IsolationMode::kMaxMin ? "max_min" : "mean_min"}};
}

inline json to_json(const RemovalReport& r) {
    return {{"flagged", r.flagged}, {"views", r.views}, {"per_view_counts", r.per_view_counts}, {"d_remove", r.d_remove}};
}

inline json to_json(const PoiSelection& s) {
    return {{"class_id", s.class_id},
            {"min_mask_fraction", s.min_mask_fraction},
            {"retained_views", s.views},
            {"fractions", s.fractions}};
}

inline json to_json(const RefineConfig& c) {
    return {{"init_iters", c.init_iters},
            {"total_iters", c.total_iters},
            {"refine_iters", c.refine_iters()},
            {"filter_period", c.filter_period},
            {"t_r", c.t_r},
            {"lambda", c.lambda},
            {"seed", c.seed},
            {"filter_view_stride", c.filter_view_stride},
            {"filter_aggregation", c.filter_aggregation == FlagAggregation::kAnyView ? "any_view" : "all_views"},
            {"densify", c.densify.enabled},
            {"lr",
             {{"position_init", c.lr.position_init},
              {"position_final", c.lr.position_final},
              {"sh", c.lr.sh},
              {"opacity", c.lr.opacity},
              {"scale", c.lr.scale},
              {"rotation", c.lr.rotation}}}};
}

/// One JSON object per line: every iteration's loss, then filter and
/// densification passes, then the phase timings.
inline void write_train_log(const TrainLog& log, std::ostream& os) {
    for (std::size_t i = 0; i < log.losses.size(); ++i)
        os << json{{"type", "loss"}, {"iteration", i + 1}, {"loss", log.losses[i]}}.dump() << "\n";
    for (const auto& f : log.filter_passes)
        os << json{{"type", "filter"}, {"iteration", f.iteration}, {"flagged", f.flagged}, {"remaining", f.remaining}}.dump()
           << "\n";
    for (const auto& d : log.densify_passes)
        os << json{{"type", "densify"}, {"iteration", d.iteration}, {"cloned", d.cloned}, {"split", d.split},
                   {"pruned", d.pruned}, {"remaining", d.remaining}}
                  .dump()
           << "\n";
    os << json{{"type", "phases"}, {"seconds", log.phase_seconds}}.dump() << "\n";
    if (log.final_metrics) os << json{{"type", "final_metrics"}, {"metrics", to_json(*log.final_metrics)}}.dump() << "\n";
}

inline void write_train_log(const TrainLog& log, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    write_train_log(log, os);
}

inline json to_json(const ExperimentRow& r) {
    return {{"name", r.name},
            {"iterations", r.iterations},
            {"wall_seconds", r.wall_seconds},
            {"seconds_per_iter", r.seconds_per_iter},
            {"splats_initial", r.splats_initial},
            {"splats_final", r.splats_final},
            {"masked_psnr_initial", r.masked_psnr_initial},
            {"masked_ssim_initial", r.masked_ssim_initial},
            {"masked_psnr", r.masked_psnr},
            {"masked_ssim", r.masked_ssim},
            {"floaters_removed", r.floaters_removed},
            {"floaters_remaining", r.floaters_remaining}};
}

inline json to_json(const SynthSpec& s) {
    return {{"seed", s.seed},
            {"n_poi_splats", s.n_poi_splats},
            {"n_background_splats", s.n_background_splats},
            {"n_floaters", s.n_floaters},
            {"floater_color_offset", s.floater_color_offset},
            {"n_cameras", s.n_cameras},
            {"width", s.width},
            {"height", s.height},
            {"sh_degree", s.sh_degree}};
}

inline json to_json(const ExperimentReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows) rows.push_back(to_json(row));
    json j{{"spec", to_json(r.spec)},
           {"p_star", to_json(r.p_star)},
           {"d_avg", r.d_avg},
           {"d_remove", r.d_remove},
           {"floater_offset", r.floater_offset},
           {"rows", rows}};
    if (r.rows.size() == 2 && r.rows[0].seconds_per_iter > 0.0)
        j["time_ratio"] = r.rows[1].seconds_per_iter / r.rows[0].seconds_per_iter;
    return j;
}

inline std::string to_csv(const ExperimentReport& r) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "name,iterations,wall_seconds,seconds_per_iter,splats_initial,splats_final,masked_psnr_initial,"
          "masked_ssim_initial,masked_psnr,masked_ssim,floaters_removed,floaters_remaining\n";
    for (const auto& x : r.rows)
        os << x.name << ',' << x.iterations << ',' << x.wall_seconds << ',' << x.seconds_per_iter << ','
           << x.splats_initial << ',' << x.splats_final << ',' << x.masked_psnr_initial << ',' << x.masked_ssim_initial
           << ',' << x.masked_psnr << ',' << x.masked_ssim << ',' << x.floaters_removed << ',' << x.floaters_remaining
           << '\n';
    return os.str();
}

}  // namespace coregs
