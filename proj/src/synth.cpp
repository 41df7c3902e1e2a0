#include "geo/synth.hpp"

#include "geo/common.hpp"
#include "geo/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <mutex>

namespace geo::synth {

namespace {

struct BarGeom {
    double x1, y1, ax, ay, len, halfw;
    double xmin, xmax, ymin, ymax;
};

double clampd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

// squared distance from a point to a segment
double point_seg_dist2(double px, double py, const lsd::LineSegment& s) {
    double dx = s.x2 - s.x1, dy = s.y2 - s.y1;
    double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((px - s.x1) * dx + (py - s.y1) * dy) / len2 : 0.0;
    t = clampd(t, 0.0, 1.0);
    double qx = s.x1 + t * dx - px, qy = s.y1 + t * dy - py;
    return qx * qx + qy * qy;
}

int orientation(double ax, double ay, double bx, double by, double cx, double cy) {
    double v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
    return (v > 0) - (v < 0);
}

bool segs_cross(const lsd::LineSegment& a, const lsd::LineSegment& b) {
    int o1 = orientation(a.x1, a.y1, a.x2, a.y2, b.x1, b.y1);
    int o2 = orientation(a.x1, a.y1, a.x2, a.y2, b.x2, b.y2);
    int o3 = orientation(b.x1, b.y1, b.x2, b.y2, a.x1, a.y1);
    int o4 = orientation(b.x1, b.y1, b.x2, b.y2, a.x2, a.y2);
    return o1 != o2 && o3 != o4 && o1 && o2 && o3 && o4;
}

double seg_seg_dist(const lsd::LineSegment& a, const lsd::LineSegment& b) {
    if (segs_cross(a, b))
        return 0.0;
    double d2 = point_seg_dist2(a.x1, a.y1, b);
    d2 = std::min(d2, point_seg_dist2(a.x2, a.y2, b));
    d2 = std::min(d2, point_seg_dist2(b.x1, b.y1, a));
    d2 = std::min(d2, point_seg_dist2(b.x2, b.y2, a));
    return std::sqrt(d2);
}

// pixel-center-inside test against a convex quad given in order
void fill_quad(BinaryMask& mask, const double qx[4], const double qy[4]) {
    double xmin = qx[0], xmax = qx[0], ymin = qy[0], ymax = qy[0];
    for (int i = 1; i < 4; ++i) {
        xmin = std::min(xmin, qx[i]);
        xmax = std::max(xmax, qx[i]);
        ymin = std::min(ymin, qy[i]);
        ymax = std::max(ymax, qy[i]);
    }
    int x0 = std::max(0, static_cast<int>(std::floor(xmin)));
    int x1 = std::min(mask.width - 1, static_cast<int>(std::ceil(xmax)));
    int y0 = std::max(0, static_cast<int>(std::floor(ymin)));
    int y1 = std::min(mask.height - 1, static_cast<int>(std::ceil(ymax)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            double px = x + 0.5, py = y + 0.5;
            bool pos = false, neg = false;
            for (int i = 0; i < 4; ++i) {
                int j = (i + 1) & 3;
                double c = (qx[j] - qx[i]) * (py - qy[i]) - (qy[j] - qy[i]) * (px - qx[i]);
                pos |= c > 0;
                neg |= c < 0;
            }
            if (!(pos && neg))
                mask.at(x, y) = 1;
        }
}

} // namespace

void rasterize_bars(GrayImage& img, const std::vector<lsd::LineSegment>& bars,
                    double bar_width, double bar_value, int jobs) {
    if (img.width <= 0 || img.height <= 0)
        throw error("rasterize_bars: empty image");
    if (bar_width <= 0)
        throw error("rasterize_bars: bar width must be positive");

    std::vector<BarGeom> geoms;
    geoms.reserve(bars.size());
    for (const auto& b : bars) {
        double dx = b.x2 - b.x1, dy = b.y2 - b.y1;
        double len = std::hypot(dx, dy);
        if (len <= 0)
            continue;
        BarGeom g;
        g.x1 = b.x1;
        g.y1 = b.y1;
        g.ax = dx / len;
        g.ay = dy / len;
        g.len = len;
        g.halfw = bar_width / 2.0;
        g.xmin = std::min(b.x1, b.x2) - g.halfw - 1.0;
        g.xmax = std::max(b.x1, b.x2) + g.halfw + 1.0;
        g.ymin = std::min(b.y1, b.y2) - g.halfw - 1.0;
        g.ymax = std::max(b.y1, b.y2) + g.halfw + 1.0;
        geoms.push_back(g);
    }

    const int w = img.width;
    parallel_for(static_cast<std::size_t>(img.height), jobs, [&](std::size_t yi) {
        int y = static_cast<int>(yi);
        double* row = img.pixels.data() + static_cast<std::size_t>(y) * w;
        for (const auto& g : geoms) {
            if (y + 1.0 <= g.ymin || y >= g.ymax)
                continue;
            int x0 = std::max(0, static_cast<int>(std::floor(g.xmin)));
            int x1 = std::min(w - 1, static_cast<int>(std::ceil(g.xmax)));
            for (int x = x0; x <= x1; ++x) {
                // 4x4 subpixel coverage of cell [x,x+1) x [y,y+1)
                int hits = 0;
                for (int sj = 0; sj < 4; ++sj) {
                    double py = y + (sj + 0.5) * 0.25;
                    for (int si = 0; si < 4; ++si) {
                        double px = x + (si + 0.5) * 0.25;
                        double rx = px - g.x1, ry = py - g.y1;
                        double t = rx * g.ax + ry * g.ay;
                        if (t < 0 || t > g.len)
                            continue;
                        double s = ry * g.ax - rx * g.ay;
                        if (std::fabs(s) <= g.halfw)
                            ++hits;
                    }
                }
                if (hits) {
                    double val = 1.0 - (hits / 16.0) * (1.0 - bar_value);
                    if (val < row[x])
                        row[x] = val;
                }
            }
        }
    });
}

Scene render(const SceneSpec& spec, int jobs) {
    if (spec.width < 16 || spec.height < 16)
        throw error("render: image dimensions must be at least 16x16");
    if (spec.n_lines < 2)
        throw error("render: need at least 2 lines");
    if (spec.eps_vp < 0 || spec.eps_shadow < 0)
        throw error("render: epsilon must be nonnegative");
    if (spec.camera.focal <= 0)
        throw error("render: focal length must be positive");
    if (spec.n_shadow_pairs < 0)
        throw error("render: negative shadow pair count");

    Scene scene;
    scene.image = GrayImage(spec.width, spec.height, 1.0);
    Rng rng(spec.seed);

    // box-corridor axis directions in camera coordinates (y down, z forward)
    const double p = spec.camera.pitch, r = spec.camera.roll, f = spec.camera.focal;
    const double cx = 0.5 * spec.width, cy = 0.5 * spec.height;
    const vp::Vec3 dirs[3] = {
        {-std::sin(r) * std::sin(p), std::cos(r) * std::sin(p), std::cos(p)}, // forward
        {std::cos(r), std::sin(r), 0.0},                                      // lateral
        {std::sin(r) * std::cos(p), -std::cos(r) * std::cos(p), std::sin(p)}, // up
    };
    for (int k = 0; k < 3; ++k)
        scene.truth.vps[k] = {f * dirs[k].x + cx * dirs[k].z, f * dirs[k].y + cy * dirs[k].z,
                              dirs[k].z};

    const double margin = 8.0;
    const double min_gap = spec.bar_width + 6.0;
    for (int i = 0; i < spec.n_lines; ++i) {
        int k = i % 3;
        const vp::Vec3& v = scene.truth.vps[k];
        bool ideal = std::fabs(v.z) < 1e-12 * std::max(std::fabs(v.x), std::fabs(v.y));
        bool placed = false;
        for (int attempt = 0; attempt < 60 && !placed; ++attempt) {
            double axp = rng.uniform(margin + 40.0, spec.width - margin - 40.0);
            double ayp = rng.uniform(margin + 30.0, spec.height - margin - 30.0);
            double len = rng.uniform(60.0, 140.0);
            double defl = rng.uniform(-spec.eps_vp, spec.eps_vp);
            double dx, dy;
            if (ideal) {
                dx = v.x;
                dy = v.y;
            } else {
                dx = v.x / v.z - axp;
                dy = v.y / v.z - ayp;
            }
            double n = std::hypot(dx, dy);
            if (n < 1e-9)
                continue; // anchor fell on the vanishing point
            dx /= n;
            dy /= n;
            double cd = std::cos(defl), sd = std::sin(defl);
            double rx = dx * cd - dy * sd, ry = dx * sd + dy * cd;
            lsd::LineSegment seg{axp - 0.5 * len * rx, ayp - 0.5 * len * ry,
                                 axp + 0.5 * len * rx, ayp + 0.5 * len * ry,
                                 spec.bar_width, 0.0};
            if (std::min(seg.x1, seg.x2) < margin || std::max(seg.x1, seg.x2) > spec.width - margin ||
                std::min(seg.y1, seg.y2) < margin || std::max(seg.y1, seg.y2) > spec.height - margin)
                continue;
            bool clear = true;
            for (const auto& other : scene.truth.segments)
                if (seg_seg_dist(seg, other) < min_gap) {
                    clear = false;
                    break;
                }
            if (!clear)
                continue;
            scene.truth.segments.push_back(seg);
            scene.truth.pencil.push_back(k);
            scene.truth.deflection.push_back(defl);
            placed = true;
        }
        if (!placed)
            scene.truth.skipped_lines += 1;
    }

    rasterize_bars(scene.image, scene.truth.segments, spec.bar_width, spec.bar_value, jobs);
    // snap to the 8 bit grid so the in-memory image equals a PGM round trip
    for (auto& px : scene.image.pixels)
        px = std::lround(px * 255.0) / 255.0;

    // Shadow pairs. One scene-level sun elevation fixes the length/height
    // ratio; only the azimuth carries the per-pair jitter. The cast
    // parallelogram is centered on the ray from the object's base so the
    // measured base-to-centroid azimuth matches the construction exactly up
    // to rasterization.
    double ratio = rng.uniform(1.1, 1.9);
    for (int j = 0; j < spec.n_shadow_pairs; ++j) {
        bool placed = false;
        for (int attempt = 0; attempt < 60 && !placed; ++attempt) {
            int bxc = static_cast<int>(rng.uniform(0.1 * spec.width, 0.9 * spec.width));
            int byc = static_cast<int>(rng.uniform(0.55 * spec.height, 0.85 * spec.height));
            int wobj = 5 + static_cast<int>(rng.below(5));   // 5..9
            int hobj = 30 + static_cast<int>(rng.below(29)); // 30..58
            double jitter = rng.uniform(-spec.eps_shadow, spec.eps_shadow);
            double alpha = spec.light_azimuth + jitter;
            double len = ratio * hobj;

            int ox0 = bxc - wobj / 2, ox1 = ox0 + wobj - 1;
            int oy1 = byc, oy0 = byc - hobj + 1;
            if (ox0 < 1 || ox1 > spec.width - 2 || oy0 < 1 || oy1 > spec.height - 2)
                continue;

            // base band the measurement will use: bottom 10% of object rows
            int band = std::max(1, static_cast<int>(std::ceil(0.1 * hobj)));
            double base_x = 0.5 * (ox0 + ox1);
            double base_y = oy1 - 0.5 * (band - 1);

            double ca = std::cos(alpha), sa = std::sin(alpha);
            double t0 = 4.0;
            double sx = base_x + t0 * ca, sy = base_y + t0 * sa;
            double hw = 0.5 * wobj + 1.0;
            double qx[4] = {sx - hw, sx + hw, sx + hw + len * ca, sx - hw + len * ca};
            double qy[4] = {sy, sy, sy + len * sa, sy + len * sa};
            bool inside = true;
            for (int c = 0; c < 4; ++c)
                inside &= qx[c] >= 1 && qx[c] <= spec.width - 2 && qy[c] >= 1 &&
                          qy[c] <= spec.height - 2;
            if (!inside)
                continue;

            BinaryMask obj(spec.width, spec.height);
            for (int y = oy0; y <= oy1; ++y)
                for (int x = ox0; x <= ox1; ++x)
                    obj.at(x, y) = 1;
            BinaryMask shadow(spec.width, spec.height);
            fill_quad(shadow, qx, qy);
            if (obj.count() == 0 || shadow.count() == 0)
                continue;

            scene.mask_pairs.emplace_back(std::move(obj), std::move(shadow));
            scene.truth.shadows.push_back({alpha, len, static_cast<double>(hobj)});
            placed = true;
        }
        if (!placed)
            scene.truth.skipped_pairs += 1;
    }

    return scene;
}

CorpusItem corpus_item(const CorpusParams& params, int index) {
    if (params.n_real < 0 || params.n_gen < 0 || params.n_real + params.n_gen <= 0)
        throw error("corpus_item: counts must be nonnegative and sum positive");
    if (index < 0 || index >= params.n_real + params.n_gen)
        throw error("corpus_item: index " + std::to_string(index) + " out of range");

    CorpusItem item;
    char buf[16];
    std::snprintf(buf, sizeof buf, "img%05d", index);
    item.id = buf;
    bool real = index < params.n_real;
    item.label = real ? 1 : 0;

    SceneSpec spec;
    spec.width = params.width;
    spec.height = params.height;
    spec.seed = params.seed ^ static_cast<std::uint64_t>(index);
    spec.eps_vp = real ? 0.0 : params.eps_vp;
    spec.eps_shadow = real ? 0.0 : params.eps_shadow;

    // scene parameters come from a stream separate from the render stream
    Rng r(spec.seed ^ 0xc7d9a2f4513b8e61ull);
    spec.camera.focal = r.uniform(300.0, 420.0);
    spec.camera.pitch = r.uniform(0.08, 0.24);
    spec.camera.roll = r.uniform(-0.06, 0.06);
    spec.light_azimuth = r.uniform(0.35, 1.15);
    spec.n_lines = 15 + static_cast<int>(r.below(8));
    spec.n_shadow_pairs = 3 + static_cast<int>(r.below(3));

    double u = r.uniform(0.0, 0.45);
    item.score = clampd(0.5 + (real ? u : -u), 0.0, 1.0);
    item.spec = spec;
    return item;
}

std::vector<ManifestEntry> make_corpus(const CorpusParams& params) {
    if (params.n_real < 0 || params.n_gen < 0 || params.n_real + params.n_gen <= 0)
        throw error("make_corpus: counts must be nonnegative and sum positive");
    if (params.out_dir.empty())
        throw error("make_corpus: empty output directory");
    try {
        std::filesystem::create_directories(params.out_dir + "/images");
        std::filesystem::create_directories(params.out_dir + "/masks");
    } catch (const std::filesystem::filesystem_error& e) {
        throw error(std::string("make_corpus: ") + e.what());
    }

    const int n = params.n_real + params.n_gen;
    std::vector<ManifestEntry> entries(static_cast<std::size_t>(n));
    std::atomic<bool> failed{false};
    std::mutex err_mutex;
    std::string err_msg;

    parallel_for(static_cast<std::size_t>(n), params.jobs, [&](std::size_t i) {
        if (failed.load(std::memory_order_relaxed))
            return;
        try {
            CorpusItem item = corpus_item(params, static_cast<int>(i));
            Scene scene = render(item.spec, 1);

            ManifestEntry e;
            e.id = item.id;
            e.label = item.label;
            e.prequalifier_score = item.score;
            e.image_path = "images/" + item.id + ".pgm";
            write_gray(params.out_dir + "/" + e.image_path, scene.image);
            for (std::size_t k = 0; k < scene.mask_pairs.size(); ++k) {
                std::string obj = "masks/" + item.id + "_obj" + std::to_string(k) + ".pgm";
                std::string sh = "masks/" + item.id + "_sh" + std::to_string(k) + ".pgm";
                write_mask(params.out_dir + "/" + obj, scene.mask_pairs[k].first);
                write_mask(params.out_dir + "/" + sh, scene.mask_pairs[k].second);
                e.mask_pairs.emplace_back(obj, sh);
            }
            entries[i] = std::move(e);
        } catch (const std::exception& ex) {
            std::lock_guard<std::mutex> lock(err_mutex);
            if (!failed.exchange(true))
                err_msg = ex.what();
        }
    });
    if (failed)
        throw error(err_msg);

    write_manifest(params.out_dir + "/manifest.txt", entries);
    return entries;
}

} // namespace geo::synth
