#include "geo/lsd.hpp"

#include "geo/common.hpp"
#include "geo/parallel.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace geo::lsd {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kNotDef = -1024.0; // angle marker for invalid pixels

struct Point {
    int x, y;
};

// Oriented rectangle fitted to a region of aligned pixels. (x1,y1)-(x2,y2)
// runs along the main axis, (dx,dy) is that axis, prec/p the angular
// tolerance currently attached to the rectangle.
struct Rect {
    double x1, y1, x2, y2;
    double width;
    double cx, cy;
    double theta;
    double dx, dy;
    double prec;
    double p;
};

double dist(double x1, double y1, double x2, double y2) {
    return std::sqrt((x2 - x1) * (x2 - x1) + (y2 - y1) * (y2 - y1));
}

// absolute angle difference, treating directions as mod 2pi values
double angle_diff(double a, double b) {
    a -= b;
    while (a <= -kPi) a += 2 * kPi;
    while (a > kPi) a -= 2 * kPi;
    return a < 0 ? -a : a;
}

double angle_diff_signed(double a, double b) {
    a -= b;
    while (a <= -kPi) a += 2 * kPi;
    while (a > kPi) a -= 2 * kPi;
    return a;
}

bool is_aligned(double pixel_angle, double theta, double prec) {
    if (pixel_angle == kNotDef)
        return false;
    double t = theta - pixel_angle;
    if (t < 0)
        t = -t;
    if (t > 1.5 * kPi) {
        t -= 2 * kPi;
        if (t < 0)
            t = -t;
    }
    return t <= prec;
}

// log10 of the binomial tail P[K >= k] for K ~ B(n,p), plus logNT. The sum
// stops once the truncation error cannot move the result by more than 10%,
// same bound the a-contrario literature uses.
double nfa(int n, int k, double p, double logNT) {
    assert(n >= 0 && k >= 0 && k <= n && p > 0.0 && p < 1.0);
    if (n == 0 || k == 0)
        return logNT;
    if (n == k)
        return logNT + n * std::log10(p);

    double p_term = p / (1.0 - p);
    double log1term = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                      k * std::log(p) + (n - k) * std::log(1.0 - p);
    double term = std::exp(log1term);
    if (term == 0.0)
        return k > n * p ? log1term / 2.302585092994046 + logNT : logNT;

    double bin_tail = term;
    for (int i = k + 1; i <= n; ++i) {
        double bin_term = (n - i + 1) / static_cast<double>(i);
        double mult_term = bin_term * p_term;
        term *= mult_term;
        bin_tail += term;
        if (bin_term < 1.0) {
            // geometric bound on the remaining terms
            double err = term * ((1.0 - std::pow(mult_term, n - i + 1.0)) / (1.0 - mult_term) - 1.0);
            if (err < 0.1 * std::fabs(std::log10(bin_tail) + logNT) * bin_tail)
                break;
        }
    }
    return logNT + std::log10(bin_tail);
}

struct Workspace {
    const GradientField* grad;
    std::vector<std::uint8_t> used;
    double logNT;
};

// 8-connected growth of pixels aligned with the running region angle.
// Neighbors are visited row-major so ties fall to the lowest raster index.
void region_grow(Workspace& ws, int sx, int sy, double prec,
                 std::vector<Point>& region, double& reg_angle) {
    const GradientField& g = *ws.grad;
    region.clear();
    region.push_back({sx, sy});
    std::size_t seed_idx = static_cast<std::size_t>(sy) * g.width + sx;
    reg_angle = g.angle[seed_idx];
    double sumdx = std::cos(reg_angle);
    double sumdy = std::sin(reg_angle);
    ws.used[seed_idx] = 1;

    for (std::size_t i = 0; i < region.size(); ++i) {
        for (int yy = region[i].y - 1; yy <= region[i].y + 1; ++yy) {
            for (int xx = region[i].x - 1; xx <= region[i].x + 1; ++xx) {
                if (xx < 0 || yy < 0 || xx >= g.width || yy >= g.height)
                    continue;
                std::size_t idx = static_cast<std::size_t>(yy) * g.width + xx;
                if (ws.used[idx] || !is_aligned(g.angle[idx], reg_angle, prec))
                    continue;
                ws.used[idx] = 1;
                region.push_back({xx, yy});
                sumdx += std::cos(g.angle[idx]);
                sumdy += std::sin(g.angle[idx]);
                reg_angle = std::atan2(sumdy, sumdx);
            }
        }
    }
}

// principal axis of the magnitude-weighted region, flipped if needed to
// stay within prec of the region angle
double get_theta(const std::vector<Point>& region, double cx, double cy,
                 const GradientField& g, double reg_angle, double prec) {
    double Ixx = 0, Iyy = 0, Ixy = 0;
    for (const auto& pt : region) {
        double m = g.magnitude[static_cast<std::size_t>(pt.y) * g.width + pt.x];
        Ixx += m * (pt.y - cy) * (pt.y - cy);
        Iyy += m * (pt.x - cx) * (pt.x - cx);
        Ixy -= m * (pt.x - cx) * (pt.y - cy);
    }
    if (Ixx == 0.0 && Iyy == 0.0 && Ixy == 0.0)
        return reg_angle;
    double lambda = 0.5 * (Ixx + Iyy - std::sqrt((Ixx - Iyy) * (Ixx - Iyy) + 4.0 * Ixy * Ixy));
    double theta = std::fabs(Ixx) > std::fabs(Iyy) ? std::atan2(lambda - Ixx, Ixy)
                                                   : std::atan2(Ixy, lambda - Iyy);
    if (angle_diff(theta, reg_angle) > prec)
        theta += kPi;
    return theta;
}

Rect region2rect(const std::vector<Point>& region, const GradientField& g,
                 double reg_angle, double prec, double p) {
    double sum = 0, cx = 0, cy = 0;
    for (const auto& pt : region) {
        double m = g.magnitude[static_cast<std::size_t>(pt.y) * g.width + pt.x];
        cx += pt.x * m;
        cy += pt.y * m;
        sum += m;
    }
    assert(sum > 0.0);
    cx /= sum;
    cy /= sum;

    double theta = get_theta(region, cx, cy, g, reg_angle, prec);
    double dx = std::cos(theta);
    double dy = std::sin(theta);
    double l_min = 0, l_max = 0, w_min = 0, w_max = 0;
    for (const auto& pt : region) {
        double l = (pt.x - cx) * dx + (pt.y - cy) * dy;
        double w = -(pt.x - cx) * dy + (pt.y - cy) * dx;
        l_min = std::min(l_min, l);
        l_max = std::max(l_max, l);
        w_min = std::min(w_min, w);
        w_max = std::max(w_max, w);
    }

    Rect r;
    r.x1 = cx + l_min * dx;
    r.y1 = cy + l_min * dy;
    r.x2 = cx + l_max * dx;
    r.y2 = cy + l_max * dy;
    r.width = std::max(w_max - w_min, 1.0);
    r.cx = cx;
    r.cy = cy;
    r.theta = theta;
    r.dx = dx;
    r.dy = dy;
    r.prec = prec;
    r.p = p;
    return r;
}

// counts pixels inside the rectangle and how many align with its axis
double rect_nfa(const Rect& r, const Workspace& ws) {
    const GradientField& g = *ws.grad;
    double half = r.width / 2.0;
    double len = dist(r.x1, r.y1, r.x2, r.y2);
    double px = -r.dy, py = r.dx;

    double xs[4] = {r.x1 + px * half, r.x1 - px * half, r.x2 + px * half, r.x2 - px * half};
    double ys[4] = {r.y1 + py * half, r.y1 - py * half, r.y2 + py * half, r.y2 - py * half};
    int xmin = std::max(0, static_cast<int>(std::floor(*std::min_element(xs, xs + 4))));
    int xmax = std::min(g.width - 1, static_cast<int>(std::ceil(*std::max_element(xs, xs + 4))));
    int ymin = std::max(0, static_cast<int>(std::floor(*std::min_element(ys, ys + 4))));
    int ymax = std::min(g.height - 1, static_cast<int>(std::ceil(*std::max_element(ys, ys + 4))));

    int pts = 0, aligned = 0;
    for (int y = ymin; y <= ymax; ++y) {
        for (int x = xmin; x <= xmax; ++x) {
            double t = (x - r.x1) * r.dx + (y - r.y1) * r.dy;
            double s = (x - r.x1) * px + (y - r.y1) * py;
            if (t < 0.0 || t > len || s < -half || s > half)
                continue;
            ++pts;
            if (is_aligned(g.angle[static_cast<std::size_t>(y) * g.width + x], r.theta, r.prec))
                ++aligned;
        }
    }
    return nfa(pts, aligned, r.p, ws.logNT);
}

// Tries finer angular precision, then thinner rectangles, then trimming
// either lateral side, keeping whichever variant lowers log_nfa the most.
double rect_improve(Rect& rect, const Workspace& ws, double target) {
    const double delta = 0.5;
    const double delta_2 = delta / 2.0;

    double log_nfa = rect_nfa(rect, ws);
    if (log_nfa <= target)
        return log_nfa;

    Rect r = rect;
    for (int n = 0; n < 5; ++n) {
        r.p /= 2.0;
        r.prec = r.p * kPi;
        double ln = rect_nfa(r, ws);
        if (ln < log_nfa) {
            log_nfa = ln;
            rect = r;
        }
    }
    if (log_nfa <= target)
        return log_nfa;

    r = rect;
    for (int n = 0; n < 5; ++n) {
        if (r.width - delta >= 0.5) {
            r.width -= delta;
            double ln = rect_nfa(r, ws);
            if (ln < log_nfa) {
                log_nfa = ln;
                rect = r;
            }
        }
    }
    if (log_nfa <= target)
        return log_nfa;

    r = rect;
    for (int n = 0; n < 5; ++n) {
        if (r.width - delta >= 0.5) {
            r.x1 += -r.dy * delta_2;
            r.y1 += r.dx * delta_2;
            r.x2 += -r.dy * delta_2;
            r.y2 += r.dx * delta_2;
            r.width -= delta;
            double ln = rect_nfa(r, ws);
            if (ln < log_nfa) {
                log_nfa = ln;
                rect = r;
            }
        }
    }
    if (log_nfa <= target)
        return log_nfa;

    r = rect;
    for (int n = 0; n < 5; ++n) {
        if (r.width - delta >= 0.5) {
            r.x1 -= -r.dy * delta_2;
            r.y1 -= r.dx * delta_2;
            r.x2 -= -r.dy * delta_2;
            r.y2 -= r.dx * delta_2;
            r.width -= delta;
            double ln = rect_nfa(r, ws);
            if (ln < log_nfa) {
                log_nfa = ln;
                rect = r;
            }
        }
    }
    if (log_nfa <= target)
        return log_nfa;

    r = rect;
    for (int n = 0; n < 5; ++n) {
        r.p /= 2.0;
        r.prec = r.p * kPi;
        double ln = rect_nfa(r, ws);
        if (ln < log_nfa) {
            log_nfa = ln;
            rect = r;
        }
    }
    return log_nfa;
}

bool reduce_region_radius(Workspace& ws, std::vector<Point>& region, double& density,
                          Rect& rect, double reg_angle, double prec, double p,
                          double density_th) {
    const GradientField& g = *ws.grad;
    double xc = region[0].x;
    double yc = region[0].y;
    double rad = std::max(dist(xc, yc, rect.x1, rect.y1), dist(xc, yc, rect.x2, rect.y2));

    while (density < density_th) {
        rad *= 0.75;
        for (std::size_t i = 0; i < region.size(); ++i) {
            if (dist(xc, yc, region[i].x, region[i].y) > rad) {
                ws.used[static_cast<std::size_t>(region[i].y) * g.width + region[i].x] = 0;
                region[i] = region.back();
                region.pop_back();
                --i;
            }
        }
        if (region.size() < 2)
            return false;
        rect = region2rect(region, g, reg_angle, prec, p);
        density = region.size() / (dist(rect.x1, rect.y1, rect.x2, rect.y2) * rect.width);
    }
    return true;
}

// When the rectangle is too sparse, retry with a tolerance estimated from
// the angle spread near the seed, then shrink the region radius if needed.
bool refine(Workspace& ws, std::vector<Point>& region, double& reg_angle,
            double prec, double p, Rect& rect, double density_th) {
    const GradientField& g = *ws.grad;
    double density = region.size() / (dist(rect.x1, rect.y1, rect.x2, rect.y2) * rect.width);
    if (density >= density_th)
        return true;

    int xc = region[0].x;
    int yc = region[0].y;
    double ang_c = g.angle[static_cast<std::size_t>(yc) * g.width + xc];
    double sum = 0, s_sum = 0;
    int n = 0;
    for (const auto& pt : region) {
        ws.used[static_cast<std::size_t>(pt.y) * g.width + pt.x] = 0;
        if (dist(xc, yc, pt.x, pt.y) < rect.width) {
            double ang_d = angle_diff_signed(g.angle[static_cast<std::size_t>(pt.y) * g.width + pt.x], ang_c);
            sum += ang_d;
            s_sum += ang_d * ang_d;
            ++n;
        }
    }
    assert(n > 0);
    double mean_angle = sum / n;
    double tau = 2.0 * std::sqrt((s_sum - 2.0 * mean_angle * sum) / n + mean_angle * mean_angle);

    region_grow(ws, xc, yc, tau, region, reg_angle);
    if (region.size() < 2)
        return false;

    rect = region2rect(region, g, reg_angle, prec, p);
    density = region.size() / (dist(rect.x1, rect.y1, rect.x2, rect.y2) * rect.width);
    if (density < density_th)
        return reduce_region_radius(ws, region, density, rect, reg_angle, prec, p, density_th);
    return true;
}

} // namespace

double log10_binomial_tail(int n, int k, double p) {
    return nfa(n, k, p, 0.0);
}

double segment_length(const LineSegment& s) {
    return dist(s.x1, s.y1, s.x2, s.y2);
}

double segment_angle(const LineSegment& s) {
    double a = std::atan2(s.y2 - s.y1, s.x2 - s.x1);
    if (a < 0)
        a += kPi;
    if (a >= kPi)
        a -= kPi;
    return a;
}

GradientField compute_gradient(const GrayImage& img, double rho, int jobs) {
    GradientField g;
    g.width = img.width;
    g.height = img.height;
    std::size_t n = img.pixels.size();
    g.magnitude.assign(n, 0.0);
    g.angle.assign(n, kNotDef);
    g.valid.assign(n, 0);

    parallel_for(static_cast<std::size_t>(std::max(0, img.height - 1)), jobs, [&](std::size_t yy) {
        int y = static_cast<int>(yy);
        for (int x = 0; x < img.width - 1; ++x) {
            std::size_t adr = static_cast<std::size_t>(y) * img.width + x;
            // 2x2 stencil centered between four pixels
            double com1 = img.pixels[adr + img.width + 1] - img.pixels[adr];
            double com2 = img.pixels[adr + 1] - img.pixels[adr + img.width];
            double gx = com1 + com2;
            double gy = com1 - com2;
            double norm = std::sqrt((gx * gx + gy * gy) / 4.0);
            g.magnitude[adr] = norm;
            if (norm > rho) {
                g.angle[adr] = std::atan2(gx, -gy); // level-line direction
                g.valid[adr] = 1;
            }
        }
    });
    return g;
}

GrayImage gaussian_downsample(const GrayImage& img, double scale, double sigma_scale) {
    if (scale <= 0.0 || scale > 1.0)
        throw error("gaussian_downsample: scale must be in (0,1]");
    int nw = static_cast<int>(std::ceil(img.width * scale));
    int nh = static_cast<int>(std::ceil(img.height * scale));
    double sigma = scale < 1.0 ? sigma_scale / scale : sigma_scale;
    // kernel reaches where the Gaussian falls below 10^-3
    int h = static_cast<int>(std::ceil(sigma * std::sqrt(2.0 * 3.0 * std::log(10.0))));
    int ksize = 1 + 2 * h;
    std::vector<double> kernel(ksize);

    auto fill_kernel = [&](double mean) {
        double s = 0;
        for (int i = 0; i < ksize; ++i) {
            double v = (i - mean) / sigma;
            kernel[i] = std::exp(-0.5 * v * v);
            s += kernel[i];
        }
        for (auto& k : kernel)
            k /= s;
    };
    // symmetric boundary: reflect indices back into range
    auto mirror = [](int j, int size) {
        while (j < 0)
            j += 2 * size;
        while (j >= 2 * size)
            j -= 2 * size;
        return j >= size ? 2 * size - 1 - j : j;
    };

    GrayImage aux(nw, img.height);
    for (int x = 0; x < nw; ++x) {
        double xx = x / scale;
        int xc = static_cast<int>(std::floor(xx + 0.5));
        fill_kernel(h + xx - xc);
        for (int y = 0; y < img.height; ++y) {
            double sum = 0;
            for (int i = 0; i < ksize; ++i)
                sum += img.at(mirror(xc - h + i, img.width), y) * kernel[i];
            aux.at(x, y) = sum;
        }
    }

    GrayImage out(nw, nh);
    for (int y = 0; y < nh; ++y) {
        double yy = y / scale;
        int yc = static_cast<int>(std::floor(yy + 0.5));
        fill_kernel(h + yy - yc);
        for (int x = 0; x < nw; ++x) {
            double sum = 0;
            for (int i = 0; i < ksize; ++i)
                sum += aux.at(x, mirror(yc - h + i, img.height)) * kernel[i];
            out.at(x, y) = sum;
        }
    }
    return out;
}

std::vector<LineSegment> detect_segments(const GrayImage& img, const LsdParams& params) {
    if (img.width < 4 || img.height < 4)
        throw error("detect_segments: image too small");
    if (params.angle_tol_deg <= 0.0 || params.angle_tol_deg >= 180.0)
        throw error("detect_segments: angle_tol_deg out of range");

    GrayImage scaled_storage;
    const GrayImage* work = &img;
    if (params.scale < 1.0) {
        scaled_storage = gaussian_downsample(img, params.scale, params.sigma_scale);
        work = &scaled_storage;
    }

    GradientField grad = compute_gradient(*work, params.rho, 1);
    const double prec = kPi * params.angle_tol_deg / 180.0;
    const double p = params.angle_tol_deg / 180.0;
    // number of tests: rectangle positions/sizes times precision levels
    const double logNT = 2.5 * (std::log10(static_cast<double>(work->width)) +
                                std::log10(static_cast<double>(work->height))) +
                         std::log10(11.0);
    const int min_reg_size = static_cast<int>(-logNT / std::log10(p));

    // seeds ordered by descending gradient magnitude; raster order within a
    // bin keeps ties deterministic
    double max_grad = 0;
    for (std::size_t i = 0; i < grad.magnitude.size(); ++i)
        if (grad.valid[i] && grad.magnitude[i] > max_grad)
            max_grad = grad.magnitude[i];
    std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(params.n_bins));
    if (max_grad > 0) {
        for (std::size_t i = 0; i < grad.magnitude.size(); ++i) {
            if (!grad.valid[i])
                continue;
            int b = static_cast<int>(grad.magnitude[i] * params.n_bins / max_grad);
            b = std::min(b, params.n_bins - 1);
            bins[static_cast<std::size_t>(b)].push_back(static_cast<std::uint32_t>(i));
        }
    }

    Workspace ws;
    ws.grad = &grad;
    ws.used.assign(grad.magnitude.size(), 0);
    ws.logNT = logNT;

    std::vector<LineSegment> out;
    std::vector<Point> region;
    region.reserve(1024);

    for (int b = params.n_bins - 1; b >= 0; --b) {
        for (std::uint32_t idx : bins[static_cast<std::size_t>(b)]) {
            if (ws.used[idx])
                continue;
            int sx = static_cast<int>(idx % grad.width);
            int sy = static_cast<int>(idx / grad.width);
            double reg_angle;
            region_grow(ws, sx, sy, prec, region, reg_angle);
            if (static_cast<int>(region.size()) < min_reg_size)
                continue;

            Rect rect = region2rect(region, grad, reg_angle, prec, p);
            if (!refine(ws, region, reg_angle, prec, p, rect, params.density_th))
                continue;

            double log_nfa = rect_improve(rect, ws, params.log_nfa_max);
            if (log_nfa > params.log_nfa_max)
                continue;

            LineSegment s;
            // half-pixel shift: the 2x2 gradient lives on pixel corners
            s.x1 = rect.x1 + 0.5;
            s.y1 = rect.y1 + 0.5;
            s.x2 = rect.x2 + 0.5;
            s.y2 = rect.y2 + 0.5;
            s.width = rect.width;
            s.log_nfa = log_nfa;
            if (params.scale < 1.0) {
                s.x1 /= params.scale;
                s.y1 /= params.scale;
                s.x2 /= params.scale;
                s.y2 /= params.scale;
                s.width /= params.scale;
            }
            s.x1 = std::clamp(s.x1, 0.0, static_cast<double>(img.width));
            s.x2 = std::clamp(s.x2, 0.0, static_cast<double>(img.width));
            s.y1 = std::clamp(s.y1, 0.0, static_cast<double>(img.height));
            s.y2 = std::clamp(s.y2, 0.0, static_cast<double>(img.height));
            if (segment_length(s) < params.min_length)
                continue;
            out.push_back(s);
        }
    }
    // longest first; stable so equal lengths keep detection order
    std::stable_sort(out.begin(), out.end(), [](const LineSegment& a, const LineSegment& b) {
        return segment_length(a) > segment_length(b);
    });
    return out;
}

} // namespace geo::lsd
