#pragma once

#include "geo/image.hpp"

#include <optional>
#include <vector>

namespace geo::shadow {

// One object/shadow mask pair reduced to a direction and a length ratio.
// azimuth is atan2 of the exact centroid difference (shadow centroid minus
// object base point); the difference is carried as integer pixel sums over
// a common denominator, so translating both masks by whole pixels leaves
// the azimuth bit-identical.
struct ShadowPair {
    double base_x = 0, base_y = 0;       // centroid of the object's bottom row band
    double centroid_x = 0, centroid_y = 0; // shadow mask centroid
    double azimuth = 0;                  // radians in (-pi, pi]
    double length_ratio = 0;             // shadow extent along azimuth / object height
};

// base point: centroid of the set pixels in the lowest 10% of the object's
// occupied rows (at least one row). Extents count pixels, max - min + 1.
// Errors: empty object mask, empty shadow mask, size mismatch, identical
// masks (degenerate pair).
ShadowPair derive_pair(const BinaryMask& object, const BinaryMask& shadow);

// Arc on the circle, start in [0, 2pi), may wrap.
struct ArcInterval {
    double start = 0;
    double width = 0;
};

struct ShadowVerdict {
    int n_pairs = 0;
    bool feasible = false;
    std::optional<ArcInterval> interval; // widest surviving arc, empty if infeasible
    double circ_variance = 0;            // 1 - |mean unit vector|
    double length_dispersion = 0;        // population std / mean of length ratios
};

// A single light direction must sit within half_width of every azimuth.
// Wedges are intersected exactly on the circle; with half_width < 90 deg
// each wedge spans under half the circle, so the intersection is a single
// arc. half_width outside (0, 90) degrees is an error, as is an empty pair
// list.
ShadowVerdict feasibility(const std::vector<ShadowPair>& pairs, double half_width_deg = 25.0);

} // namespace geo::shadow
