#include "geo/cues.hpp"

#include "geo/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace geo::cues {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
} // namespace

const std::vector<std::string>& schema() {
    static const std::vector<std::string> names = {
        "line_present",
        "line_count",
        "line_len_mean",
        "line_len_max",
        "line_orient_mean",
        "line_orient_concentration",
        "vp_present",
        "vp_count",
        "vp_inlier_fraction",
        "vp_median_residual",
        "field_present",
        "lat_mean",
        "lat_std",
        "grav_x_mean",
        "grav_y_mean",
        "grav_change",
        "shadow_present",
        "shadow_n_pairs",
        "shadow_feasible",
        "shadow_circ_variance",
        "shadow_length_dispersion",
        "shadow_interval_width",
    };
    return names;
}

Fragment line_stats(const std::vector<lsd::LineSegment>& segments) {
    Fragment f;
    if (segments.empty()) {
        f.values = {{"line_present", 0.0}};
        return f;
    }
    const std::size_t n = segments.size();

    struct Entry {
        double angle, len, x1, y1, x2, y2;
    };
    std::vector<Entry> es(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = segments[i];
        es[i] = {lsd::segment_angle(s), lsd::segment_length(s), s.x1, s.y1, s.x2, s.y2};
    }
    // total order before summing: identical multisets of segments then give
    // identical partial sums, bit for bit
    std::sort(es.begin(), es.end(), [](const Entry& a, const Entry& b) {
        return std::tie(a.angle, a.len, a.x1, a.y1, a.x2, a.y2) <
               std::tie(b.angle, b.len, b.x1, b.y1, b.x2, b.y2);
    });

    double sum_len = 0, max_len = 0, sc = 0, ss = 0;
    for (const auto& e : es) {
        sum_len += e.len;
        max_len = std::max(max_len, e.len);
        // doubled angles put the axial mean on the circle
        sc += std::cos(2.0 * e.angle);
        ss += std::sin(2.0 * e.angle);
    }
    double mean_orient = 0.5 * std::atan2(ss, sc);
    if (mean_orient < 0)
        mean_orient += kPi;
    if (mean_orient >= kPi)
        mean_orient -= kPi;

    f.values = {
        {"line_present", 1.0},
        {"line_count", static_cast<double>(n)},
        {"line_len_mean", sum_len / static_cast<double>(n)},
        {"line_len_max", max_len},
        {"line_orient_mean", mean_orient},
        {"line_orient_concentration", std::hypot(sc, ss) / static_cast<double>(n)},
    };
    return f;
}

Fragment vp_stats(const vp::VpConsistency& consistency, bool has_vps) {
    Fragment f;
    if (!has_vps) {
        f.values = {{"vp_present", 0.0}};
        return f;
    }
    f.values = {
        {"vp_present", 1.0},
        {"vp_count", static_cast<double>(consistency.n_clusters)},
        {"vp_inlier_fraction", consistency.inlier_fraction},
        {"vp_median_residual", consistency.median_residual_deg},
    };
    return f;
}

Fragment field_stats(const vp::PerspectiveField& field) {
    Fragment f;
    const std::size_t n = field.cells.size();
    if (n == 0) {
        f.values = {{"field_present", 0.0}};
        return f;
    }
    double lat_sum = 0, ux_sum = 0, uy_sum = 0;
    for (const auto& c : field.cells) {
        lat_sum += c.latitude;
        ux_sum += c.ux;
        uy_sum += c.uy;
    }
    double lat_mean = lat_sum / static_cast<double>(n);
    double var = 0;
    for (const auto& c : field.cells) {
        double d = c.latitude - lat_mean;
        var += d * d;
    }
    var /= static_cast<double>(n);

    // mean difference of up vectors between 4-neighbour cells
    double change = 0;
    std::size_t pairs = 0;
    for (int y = 0; y < field.gh; ++y) {
        for (int x = 0; x + 1 < field.gw; ++x) {
            const auto& a = field.at(x, y);
            const auto& b = field.at(x + 1, y);
            change += std::hypot(a.ux - b.ux, a.uy - b.uy);
            ++pairs;
        }
    }
    for (int y = 0; y + 1 < field.gh; ++y) {
        for (int x = 0; x < field.gw; ++x) {
            const auto& a = field.at(x, y);
            const auto& b = field.at(x, y + 1);
            change += std::hypot(a.ux - b.ux, a.uy - b.uy);
            ++pairs;
        }
    }
    if (pairs > 0)
        change /= static_cast<double>(pairs);

    f.values = {
        {"field_present", 1.0},
        {"lat_mean", lat_mean},
        {"lat_std", std::sqrt(var)},
        {"grav_x_mean", ux_sum / static_cast<double>(n)},
        {"grav_y_mean", uy_sum / static_cast<double>(n)},
        {"grav_change", change},
    };
    return f;
}

Fragment shadow_stats(const shadow::ShadowVerdict& verdict) {
    Fragment f;
    if (verdict.n_pairs == 0) {
        f.values = {{"shadow_present", 0.0}};
        return f;
    }
    f.values = {
        {"shadow_present", 1.0},
        {"shadow_n_pairs", static_cast<double>(verdict.n_pairs)},
        {"shadow_feasible", verdict.feasible ? 1.0 : 0.0},
        {"shadow_circ_variance", verdict.circ_variance},
        {"shadow_length_dispersion", verdict.length_dispersion},
        {"shadow_interval_width", verdict.interval ? verdict.interval->width : 0.0},
    };
    return f;
}

std::vector<double> assemble(const std::vector<Fragment>& fragments) {
    const auto& names = schema();
    std::vector<double> out(names.size(), 0.0);
    std::set<std::string> seen;
    for (const auto& frag : fragments) {
        for (const auto& [name, value] : frag.values) {
            auto it = std::find(names.begin(), names.end(), name);
            if (it == names.end())
                throw error("assemble: feature '" + name + "' is not in the schema");
            if (!seen.insert(name).second)
                throw error("assemble: feature '" + name + "' set twice");
            out[static_cast<std::size_t>(it - names.begin())] = value;
        }
    }
    return out;
}

ExtractResult extract_one(const GrayImage& img,
                          const std::vector<std::pair<BinaryMask, BinaryMask>>& mask_pairs,
                          const ExtractOptions& opt) {
    ExtractResult r;
    std::vector<Fragment> frags;

    if (opt.lines || opt.fields) {
        r.segments = lsd::detect_segments(img, opt.lsd);
    }
    if (opt.lines) {
        frags.push_back(line_stats(r.segments));
    }
    if (opt.fields) {
        if (r.segments.size() >= 2)
            r.vps = vp::estimate_vps(r.segments, opt.vp);
        if (!r.segments.empty())
            r.consistency = vp::vp_consistency(r.segments, r.vps, opt.vp.inlier_tol_deg);
        frags.push_back(vp_stats(r.consistency, !r.vps.empty()));
        r.camera = vp::camera_from_vps(r.vps, img.width, img.height);
        r.field = vp::perspective_field(r.camera, img.width, img.height, opt.grid_w, opt.grid_h);
        frags.push_back(field_stats(r.field));
    }
    if (opt.shadows) {
        for (const auto& [obj, sh] : mask_pairs) {
            if (obj.width != img.width || obj.height != img.height)
                throw error("extract_one: mask dimensions do not match the image");
            r.pairs.push_back(shadow::derive_pair(obj, sh));
        }
        if (!r.pairs.empty())
            r.verdict = shadow::feasibility(r.pairs, opt.shadow_half_width_deg);
        r.verdict.n_pairs = static_cast<int>(r.pairs.size());
        frags.push_back(shadow_stats(r.verdict));
    }

    r.features = assemble(frags);
    return r;
}

} // namespace geo::cues
