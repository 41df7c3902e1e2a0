#include "geo/vpfield.hpp"

#include "geo/common.hpp"
#include "geo/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace geo::vp {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kDeg = 180.0 / kPi;
} // namespace

Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

double dot(const Vec3& a, const Vec3& b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}

Vec3 normalized(const Vec3& v) {
    double n = std::sqrt(dot(v, v));
    if (n == 0.0)
        throw error("normalized: zero homogeneous vector");
    return {v.x / n, v.y / n, v.z / n};
}

Vec3 line_of(double x1, double y1, double x2, double y2) {
    if (x1 == x2 && y1 == y2)
        throw error("line_of: coincident endpoints");
    return normalized(cross({x1, y1, 1.0}, {x2, y2, 1.0}));
}

Vec3 line_of(const lsd::LineSegment& s) {
    return line_of(s.x1, s.y1, s.x2, s.y2);
}

Vec3 intersect(const Vec3& l1, const Vec3& l2) {
    Vec3 p = cross(l1, l2);
    double n = std::sqrt(dot(p, p));
    if (n < 1e-12)
        throw error("intersect: lines are identical");
    return {p.x / n, p.y / n, p.z / n};
}

namespace {

// acute angle between segment direction and the direction from the segment
// midpoint toward the (possibly ideal) point v; both finite and infinite
// cases collapse to the same homogeneous expression
double residual_deg_raw(double mx, double my, double dx, double dy, const Vec3& v) {
    double ex = v.x - v.z * mx;
    double ey = v.y - v.z * my;
    double crossv = dx * ey - dy * ex;
    double dotv = dx * ex + dy * ey;
    if (crossv == 0.0 && dotv == 0.0)
        return 0.0; // point sits on the midpoint, any direction fits
    return std::atan2(std::fabs(crossv), std::fabs(dotv)) * kDeg;
}

// eigenvector for the smallest eigenvalue of a symmetric 3x3 matrix,
// cyclic Jacobi with a fixed sweep budget
Vec3 smallest_eigvec3(double a[3][3]) {
    double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (int sweep = 0; sweep < 32; ++sweep) {
        double off = std::fabs(a[0][1]) + std::fabs(a[0][2]) + std::fabs(a[1][2]);
        double diag = std::fabs(a[0][0]) + std::fabs(a[1][1]) + std::fabs(a[2][2]);
        if (off <= 1e-15 * std::max(diag, 1e-300))
            break;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (a[p][q] == 0.0)
                    continue;
                double tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                double t = (tau >= 0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;
                for (int k = 0; k < 3; ++k) {
                    double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (int k = 0; k < 3; ++k) {
                    double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    int best = 0;
    for (int i = 1; i < 3; ++i)
        if (a[i][i] < a[best][best])
            best = i;
    return {v[0][best], v[1][best], v[2][best]};
}

} // namespace

double vp_residual_deg(const lsd::LineSegment& s, const Vec3& vp) {
    double mx = 0.5 * (s.x1 + s.x2);
    double my = 0.5 * (s.y1 + s.y2);
    double dx = s.x2 - s.x1;
    double dy = s.y2 - s.y1;
    return residual_deg_raw(mx, my, dx, dy, vp);
}

std::vector<VanishingPoint> estimate_vps(const std::vector<lsd::LineSegment>& segments,
                                         const VpParams& params) {
    const int n = static_cast<int>(segments.size());
    for (int i = 0; i < n; ++i)
        if (segments[i].x1 == segments[i].x2 && segments[i].y1 == segments[i].y2)
            throw error("estimate_vps: zero-length segment at index " + std::to_string(i));

    if (n < 2)
        throw error("estimate_vps: need at least 2 segments, got " + std::to_string(n));

    std::vector<VanishingPoint> found;
    const int need = std::max(2, params.min_support);

    // condition coordinates: center of the endpoint bounding box, isotropic
    // scale; angles (and therefore inlier sets) are unaffected
    double xmin = segments[0].x1, xmax = xmin, ymin = segments[0].y1, ymax = ymin;
    for (const auto& s : segments) {
        xmin = std::min({xmin, s.x1, s.x2});
        xmax = std::max({xmax, s.x1, s.x2});
        ymin = std::min({ymin, s.y1, s.y2});
        ymax = std::max({ymax, s.y1, s.y2});
    }
    const double ox = 0.5 * (xmin + xmax);
    const double oy = 0.5 * (ymin + ymax);
    const double S = std::max({(xmax - xmin) / 2.0, (ymax - ymin) / 2.0, 1.0});

    struct CondSeg {
        double mx, my, dx, dy, len2;
        Vec3 line;
    };
    std::vector<CondSeg> cs(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto& s = segments[i];
        double x1 = (s.x1 - ox) / S, y1 = (s.y1 - oy) / S;
        double x2 = (s.x2 - ox) / S, y2 = (s.y2 - oy) / S;
        cs[i].mx = 0.5 * (x1 + x2);
        cs[i].my = 0.5 * (y1 + y2);
        cs[i].dx = x2 - x1;
        cs[i].dy = y2 - y1;
        cs[i].len2 = cs[i].dx * cs[i].dx + cs[i].dy * cs[i].dy;
        cs[i].line = normalized(cross({x1, y1, 1.0}, {x2, y2, 1.0}));
    }

    Rng rng(params.seed);
    std::vector<int> remaining(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        remaining[i] = i;

    auto collect_inliers = [&](const Vec3& v, std::vector<int>& ids) {
        ids.clear();
        for (int idx : remaining) {
            const auto& c = cs[idx];
            if (residual_deg_raw(c.mx, c.my, c.dx, c.dy, v) <= params.inlier_tol_deg)
                ids.push_back(idx);
        }
    };

    std::vector<int> ids, ids_refit;
    while (static_cast<int>(found.size()) < params.max_vps &&
           static_cast<int>(remaining.size()) >= need) {
        std::size_t m = remaining.size();
        int best_count = 0;
        Vec3 best_v{};
        for (int it = 0; it < params.iters; ++it) {
            std::size_t i = rng.below(m);
            std::size_t j = rng.below(m - 1);
            if (j >= i)
                ++j;
            Vec3 v = cross(cs[remaining[i]].line, cs[remaining[j]].line);
            double nv = std::sqrt(dot(v, v));
            if (nv < 1e-12)
                continue; // parallel or identical supporting lines
            v = {v.x / nv, v.y / nv, v.z / nv};
            int count = 0;
            for (int idx : remaining) {
                const auto& c = cs[idx];
                if (residual_deg_raw(c.mx, c.my, c.dx, c.dy, v) <= params.inlier_tol_deg)
                    ++count;
            }
            if (count > best_count) {
                best_count = count;
                best_v = v;
            }
        }
        if (best_count < need)
            break;

        collect_inliers(best_v, ids);
        // least-squares refit: minimize sum of len^2 (l.v)^2 over unit v
        double M[3][3] = {};
        for (int idx : ids) {
            const Vec3& l = cs[idx].line;
            double w = cs[idx].len2;
            double lv[3] = {l.x, l.y, l.z};
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    M[r][c] += w * lv[r] * lv[c];
        }
        Vec3 refit = smallest_eigvec3(M);
        double rn = std::sqrt(dot(refit, refit));
        if (rn > 0) {
            refit = {refit.x / rn, refit.y / rn, refit.z / rn};
            collect_inliers(refit, ids_refit);
            if (ids_refit.size() >= ids.size()) {
                best_v = refit;
                ids.swap(ids_refit);
            }
        }

        VanishingPoint out;
        // undo conditioning: x = xc*S + ox etc., scale-free in homogeneous form
        out.p = normalized({best_v.x * S + ox * best_v.z, best_v.y * S + oy * best_v.z, best_v.z});
        out.inlier_ids = ids; // ascending because `remaining` stays sorted
        out.support = static_cast<int>(ids.size());
        found.push_back(std::move(out));

        std::vector<int> next;
        next.reserve(remaining.size() - ids.size());
        std::size_t k = 0;
        for (int idx : remaining) {
            if (k < ids.size() && ids[k] == idx)
                ++k;
            else
                next.push_back(idx);
        }
        remaining.swap(next);
    }
    return found;
}

CameraHypothesis camera_from_vps(const std::vector<VanishingPoint>& vps, int width, int height) {
    if (width <= 0 || height <= 0)
        throw error("camera_from_vps: bad image dimensions");
    CameraHypothesis cam;
    cam.focal = width;
    if (vps.empty())
        return cam;

    const double cx = width / 2.0, cy = height / 2.0;
    struct Cand {
        bool finite;
        double x = 0, y = 0;   // pixel position when finite
        double dirx = 0, diry = 0; // direction from the principal point
        double dist = 0;
        int support = 0;
    };
    std::vector<Cand> cands;
    for (const auto& vp : vps) {
        Cand c;
        c.support = vp.support;
        double a = vp.p.x, b = vp.p.y, w = vp.p.z;
        if (std::fabs(w) >= 1e-8) {
            c.finite = true;
            c.x = a / w;
            c.y = b / w;
            c.dirx = c.x - cx;
            c.diry = c.y - cy;
            c.dist = std::hypot(c.dirx, c.diry);
        } else {
            c.finite = false;
            c.dirx = a;
            c.diry = b;
            c.dist = std::numeric_limits<double>::infinity();
        }
        cands.push_back(c);
    }

    // the vertical pencil's VP: direction from the principal point within
    // 45 degrees of the image vertical, farthest away (the zenith point is
    // remote for the moderate pitches we model)
    int vert = -1;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        const auto& c = cands[i];
        if (std::fabs(c.diry) < std::fabs(c.dirx))
            continue;
        if (vert < 0 || c.dist > cands[static_cast<std::size_t>(vert)].dist)
            vert = static_cast<int>(i);
    }

    // focal from the first pair of finite VPs whose principal-point offsets
    // give a positive radicand (orthogonal pencils make it f^2)
    double focal = 0;
    for (std::size_t i = 0; i + 1 < cands.size() && focal == 0; ++i) {
        if (!cands[i].finite)
            continue;
        for (std::size_t j = i + 1; j < cands.size(); ++j) {
            if (!cands[j].finite)
                continue;
            double rad = -(cands[i].dirx * cands[j].dirx + cands[i].diry * cands[j].diry);
            if (rad > 0) {
                focal = std::sqrt(rad);
                break;
            }
        }
    }
    if (focal > 0)
        cam.focal = focal;

    if (vert >= 0) {
        const auto& c = cands[static_cast<std::size_t>(vert)];
        // direction of world up in camera coordinates, up to sign
        double gx, gy, gz;
        if (c.finite) {
            gx = c.dirx / cam.focal;
            gy = c.diry / cam.focal;
            gz = 1.0;
        } else {
            gx = c.dirx;
            gy = c.diry;
            gz = 0.0;
        }
        double n = std::sqrt(gx * gx + gy * gy + gz * gz);
        gx /= n;
        gy /= n;
        gz /= n;
        if (gy > 0) { // projected up must point toward smaller image y
            gx = -gx;
            gy = -gy;
            gz = -gz;
        }
        cam.roll = std::atan2(gx, -gy);
        cam.pitch = std::atan2(gz, std::hypot(gx, gy));
        return cam;
    }

    // no vertical pencil: place the horizon through the finite VPs
    std::vector<std::size_t> fin;
    for (std::size_t i = 0; i < cands.size(); ++i)
        if (cands[i].finite)
            fin.push_back(i);
    if (fin.size() >= 2) {
        const auto& u = cands[fin[0]];
        const auto& w = cands[fin[1]];
        Vec3 horizon = cross({u.x, u.y, 1.0}, {w.x, w.y, 1.0});
        // K^T l points along world up in camera coordinates
        double gx = cam.focal * horizon.x;
        double gy = cam.focal * horizon.y;
        double gz = cx * horizon.x + cy * horizon.y + horizon.z;
        double n = std::sqrt(gx * gx + gy * gy + gz * gz);
        if (n > 0) {
            gx /= n;
            gy /= n;
            gz /= n;
            if (gy > 0) {
                gx = -gx;
                gy = -gy;
                gz = -gz;
            }
            cam.roll = std::atan2(gx, -gy);
            cam.pitch = std::atan2(gz, std::hypot(gx, gy));
        }
    } else if (fin.size() == 1) {
        // single horizontal VP: assume zero roll, read pitch off the
        // horizon height at the principal column
        cam.pitch = std::atan2(cands[fin[0]].y - cy, cam.focal);
    }
    return cam;
}

PerspectiveCell perspective_at(const CameraHypothesis& cam, int width, int height,
                               double u, double v) {
    if (cam.focal <= 0)
        throw error("perspective_at: focal must be positive");
    const double cx = width / 2.0, cy = height / 2.0;
    const double sp = std::sin(cam.pitch), cp = std::cos(cam.pitch);
    const double sr = std::sin(cam.roll), cr = std::cos(cam.roll);
    // world up expressed in camera coordinates
    const double gx = sr * cp, gy = -cr * cp, gz = sp;

    const double dx = (u - cx) / cam.focal;
    const double dy = (v - cy) / cam.focal;
    const double dn = std::sqrt(dx * dx + dy * dy + 1.0);

    PerspectiveCell cell;
    double s = (dx * gx + dy * gy + gz) / dn;
    cell.latitude = std::asin(std::clamp(s, -1.0, 1.0));

    // image direction of a differential world-up motion along the ray
    double ux = gx - dx * gz;
    double uy = gy - dy * gz;
    double n = std::hypot(ux, uy);
    if (n < 1e-12) {
        cell.ux = 0.0;
        cell.uy = -1.0; // zenith/nadir pixel, conventional up
    } else {
        cell.ux = ux / n;
        cell.uy = uy / n;
    }
    return cell;
}

PerspectiveField perspective_field(const CameraHypothesis& cam, int width, int height,
                                   int gw, int gh, int jobs) {
    if (gw <= 0 || gh <= 0)
        throw error("perspective_field: grid dimensions must be positive");
    PerspectiveField f;
    f.gw = gw;
    f.gh = gh;
    f.cells.resize(static_cast<std::size_t>(gw) * gh);
    parallel_for(f.cells.size(), jobs, [&](std::size_t i) {
        int cxi = static_cast<int>(i) % gw;
        int cyi = static_cast<int>(i) / gw;
        double u = (cxi + 0.5) * width / static_cast<double>(gw);
        double v = (cyi + 0.5) * height / static_cast<double>(gh);
        f.cells[i] = perspective_at(cam, width, height, u, v);
    });
    return f;
}

VpConsistency vp_consistency(const std::vector<lsd::LineSegment>& segments,
                             const std::vector<VanishingPoint>& vps,
                             double inlier_tol_deg) {
    if (segments.empty())
        throw error("vp_consistency: no segments");
    VpConsistency c;
    c.n_clusters = static_cast<int>(vps.size());
    if (vps.empty())
        return c;

    std::vector<double> residuals;
    residuals.reserve(segments.size());
    std::size_t inliers = 0;
    for (const auto& s : segments) {
        double best = 90.0;
        for (const auto& vp : vps)
            best = std::min(best, vp_residual_deg(s, vp.p));
        residuals.push_back(best);
        if (best <= inlier_tol_deg)
            ++inliers;
    }
    std::sort(residuals.begin(), residuals.end());
    std::size_t n = residuals.size();
    c.median_residual_deg = (n % 2 == 1) ? residuals[n / 2]
                                         : 0.5 * (residuals[n / 2 - 1] + residuals[n / 2]);
    c.inlier_fraction = static_cast<double>(inliers) / static_cast<double>(n);
    return c;
}

} // namespace geo::vp
