// SPDX-License-Identifier: Apache-2.0
// Library walk-through on a small synthetic scene: pick the background color,
// cut out the object, refine it and print before/after quality.

#include <iostream>

#include "coregs/harness.hpp"
#include "coregs/palette.hpp"
#include "coregs/poi.hpp"
#include "coregs/trainer.hpp"

int main() {
    using namespace coregs;

    SynthSpec spec;
    spec.n_poi_splats = 200;
    spec.n_background_splats = 500;
    spec.n_floaters = 20;
    spec.n_cameras = 8;
    spec.width = spec.height = 64;
    const auto s = build_scenario<float>(spec);

    // p* from the views that see the object.
    const auto sel = select_views(s.truth.segmaps(), kPoiClass);
    std::vector<ImageBuffer<float>> seen;
    for (const auto v : sel.views) seen.push_back(s.truth.views[v].image);
    const auto palette = furthest_color(collect_colors(seen, 0.5), CandidatePalette::lattice(16));
    std::cout << "p* = (" << palette.p_star.r << ", " << palette.p_star.g << ", " << palette.p_star.b
              << "), d_avg = " << palette.d_avg << "\n";

    const auto poi = extract_poi(s.coarse, kPoiClass);
    const auto views = make_refine_views(std::span<const CameraModel>(s.truth.cameras()),
                                         std::span<const ImageBuffer<float>>(s.truth.images()), sel, palette.p_star);

    RefineConfig cfg;
    cfg.init_iters = 0;
    cfg.total_iters = 300;
    cfg.filter_period = 100;
    const auto res = refine(poi, views, palette, cfg);

    const auto reference = reference_images(s, true, palette.p_star, RasterSettings{});
    const auto [psnr0, ssim0] = masked_quality(poi, s, reference, palette.p_star, RasterSettings{});
    const auto [psnr1, ssim1] = masked_quality(res.scene, s, reference, palette.p_star, RasterSettings{});
    std::size_t removed = 0;
    for (const auto& f : res.log.filter_passes) removed += f.flagged;
    std::cout << "splats " << poi.size() << " -> " << res.scene.size() << " (" << removed << " removed by color)\n"
              << "masked PSNR " << psnr0 << " -> " << psnr1 << " dB, masked SSIM " << ssim0 << " -> " << ssim1 << "\n";
    return psnr1 > psnr0 ? 0 : 1;
}
