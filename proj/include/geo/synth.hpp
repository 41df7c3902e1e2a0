#pragma once

#include "geo/image.hpp"
#include "geo/lsd.hpp"
#include "geo/manifest.hpp"
#include "geo/vpfield.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace geo::synth {

// Wireframe scene: three pencils of segments aimed at the vanishing points
// of a box corridor (forward, lateral, vertical), drawn as anti-aliased
// dark bars on white. eps_vp deflects each bar's direction about its
// midpoint by a uniform draw in [-eps, eps]; eps_shadow jitters each
// object/shadow pair's cast azimuth the same way. An image is "real"
// exactly when both eps are zero.
struct SceneSpec {
    int width = 320, height = 240;
    vp::CameraHypothesis camera{360.0, 0.15, 0.03};
    int n_lines = 18;
    int n_shadow_pairs = 4;
    double light_azimuth = 0.7; // radians, image frame (y down)
    double eps_vp = 0.0;        // radians
    double eps_shadow = 0.0;    // radians
    std::uint64_t seed = 42;
    double bar_width = 3.0;
    double bar_value = 0.1;
};

struct ShadowTruth {
    double azimuth = 0; // after jitter
    double length = 0;  // cast length in pixels
    double height = 0;  // object height in pixels
};

struct SceneTruth {
    std::vector<lsd::LineSegment> segments; // rendered bar axes
    std::vector<int> pencil;                // 0 forward, 1 lateral, 2 vertical
    std::vector<double> deflection;         // radians actually applied
    vp::Vec3 vps[3];                        // pencil targets for the clean camera
    int skipped_lines = 0;                  // could not be placed inside the frame
    int skipped_pairs = 0;                  // rasterized to an empty mask
    std::vector<ShadowTruth> shadows;
};

struct Scene {
    GrayImage image;
    std::vector<std::pair<BinaryMask, BinaryMask>> mask_pairs; // object, shadow
    SceneTruth truth;
};

// Deterministic for a given spec; jobs only parallelizes rasterization
// rows, which is bitwise identical to the serial path.
Scene render(const SceneSpec& spec, int jobs = 1);

// Bar rasterizer used by render, exposed for the kernel equality tests and
// the benchmark. Coverage is sampled on a 4x4 subpixel grid.
void rasterize_bars(GrayImage& img, const std::vector<lsd::LineSegment>& bars,
                    double bar_width, double bar_value, int jobs = 1);

struct CorpusParams {
    std::string out_dir;
    int n_real = 0, n_gen = 0;
    double eps_vp = 0.15;
    double eps_shadow = 0.5235987755982988; // 30 degrees
    std::uint64_t seed = 42;
    int width = 320, height = 240;
    int jobs = 1;
};

// Scene spec, label, and prequalifier score for corpus item `index`; the
// per-image seed is params.seed XOR index. Real images (index < n_real)
// carry zero eps. The score follows the oracle rule
// clamp(0.5 + (real ? +u : -u), 0, 1) with u uniform in [0, 0.45].
struct CorpusItem {
    std::string id;
    SceneSpec spec;
    int label = 0;
    double score = 0.5;
};

CorpusItem corpus_item(const CorpusParams& params, int index);

// Renders every item to out_dir (images/, masks/, manifest.txt) and
// returns the manifest entries. Images are independent, so generation
// parallelizes across them without changing any byte.
std::vector<ManifestEntry> make_corpus(const CorpusParams& params);

} // namespace geo::synth
