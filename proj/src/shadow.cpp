#include "geo/shadow.hpp"

#include "geo/common.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace geo::shadow {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kTwoPi = 2.0 * kPi;

double wrap_2pi(double a) {
    a = std::fmod(a, kTwoPi);
    if (a < 0)
        a += kTwoPi;
    return a;
}

} // namespace

ShadowPair derive_pair(const BinaryMask& object, const BinaryMask& shadow) {
    if (object.width != shadow.width || object.height != shadow.height)
        throw error("derive_pair: object and shadow mask dimensions differ");
    if (object.bits == shadow.bits)
        throw error("derive_pair: object and shadow masks are identical");

    // rows occupied by the object, then the lowest 10% of them as the base band
    std::vector<int> rows;
    for (int y = 0; y < object.height; ++y) {
        bool any = false;
        for (int x = 0; x < object.width; ++x)
            if (object.at(x, y)) {
                any = true;
                break;
            }
        if (any)
            rows.push_back(y);
    }
    if (rows.empty())
        throw error("derive_pair: object mask is empty");

    int band = std::max(1, static_cast<int>(std::ceil(0.1 * static_cast<double>(rows.size()))));

    long long bx = 0, by = 0, bn = 0;
    for (std::size_t r = rows.size() - static_cast<std::size_t>(band); r < rows.size(); ++r) {
        int y = rows[r];
        for (int x = 0; x < object.width; ++x) {
            if (object.at(x, y)) {
                bx += x;
                by += y;
                ++bn;
            }
        }
    }

    long long sx = 0, sy = 0, sn = 0;
    for (int y = 0; y < shadow.height; ++y)
        for (int x = 0; x < shadow.width; ++x)
            if (shadow.at(x, y)) {
                sx += x;
                sy += y;
                ++sn;
            }
    if (sn == 0)
        throw error("derive_pair: shadow mask is empty");

    ShadowPair p;
    p.base_x = static_cast<double>(bx) / static_cast<double>(bn);
    p.base_y = static_cast<double>(by) / static_cast<double>(bn);
    p.centroid_x = static_cast<double>(sx) / static_cast<double>(sn);
    p.centroid_y = static_cast<double>(sy) / static_cast<double>(sn);

    // centroid difference over the common denominator bn*sn; the numerators
    // are integers, so whole-pixel translations cancel exactly
    __int128 dxn = static_cast<__int128>(sx) * bn - static_cast<__int128>(bx) * sn;
    __int128 dyn = static_cast<__int128>(sy) * bn - static_cast<__int128>(by) * sn;
    p.azimuth = std::atan2(static_cast<double>(dyn), static_cast<double>(dxn));

    // object height and shadow extent along the azimuth, both as pixel
    // counts (max - min + 1)
    double height = static_cast<double>(rows.back() - rows.front() + 1);
    double ca = std::cos(p.azimuth), sa = std::sin(p.azimuth);
    double tmin = 0, tmax = 0;
    bool first = true;
    for (int y = 0; y < shadow.height; ++y) {
        for (int x = 0; x < shadow.width; ++x) {
            if (!shadow.at(x, y))
                continue;
            double t = x * ca + y * sa;
            if (first) {
                tmin = tmax = t;
                first = false;
            } else {
                tmin = std::min(tmin, t);
                tmax = std::max(tmax, t);
            }
        }
    }
    p.length_ratio = (tmax - tmin + 1.0) / height;
    return p;
}

ShadowVerdict feasibility(const std::vector<ShadowPair>& pairs, double half_width_deg) {
    if (pairs.empty())
        throw error("feasibility: empty pair list");
    if (!(half_width_deg > 0.0 && half_width_deg < 90.0))
        throw error("feasibility: half_width_deg must lie in (0, 90)");

    const double hw = half_width_deg * kPi / 180.0;

    ShadowVerdict v;
    v.n_pairs = static_cast<int>(pairs.size());

    // each wedge spans under half the circle, so intersecting them one by
    // one keeps a single arc (or empties out)
    ArcInterval cur{wrap_2pi(pairs[0].azimuth - hw), 2.0 * hw};
    bool alive = true;
    for (std::size_t i = 1; i < pairs.size() && alive; ++i) {
        double bstart = wrap_2pi(pairs[i].azimuth - hw);
        double bw = 2.0 * hw;
        double delta = wrap_2pi(bstart - cur.start);
        double lo, hi;
        if (delta <= cur.width) {
            lo = delta;
            hi = std::min(cur.width, delta + bw);
        } else if (delta + bw >= kTwoPi) {
            lo = 0.0;
            hi = std::min(cur.width, delta + bw - kTwoPi);
        } else {
            alive = false;
            break;
        }
        cur.start = wrap_2pi(cur.start + lo);
        cur.width = hi - lo;
    }
    v.feasible = alive;
    if (alive)
        v.interval = cur;

    // circular variance of the azimuths, summed in list order
    double sc = 0, ss = 0;
    for (const auto& p : pairs) {
        sc += std::cos(p.azimuth);
        ss += std::sin(p.azimuth);
    }
    v.circ_variance = 1.0 - std::hypot(sc, ss) / static_cast<double>(pairs.size());

    // coefficient of variation of the length ratios (population std)
    if (pairs.size() >= 2) {
        double mean = 0;
        for (const auto& p : pairs)
            mean += p.length_ratio;
        mean /= static_cast<double>(pairs.size());
        if (mean > 0) {
            double var = 0;
            for (const auto& p : pairs) {
                double d = p.length_ratio - mean;
                var += d * d;
            }
            var /= static_cast<double>(pairs.size());
            v.length_dispersion = std::sqrt(var) / mean;
        }
    }
    return v;
}

} // namespace geo::shadow
