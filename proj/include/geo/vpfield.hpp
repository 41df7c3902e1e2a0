#pragma once

#include "geo/lsd.hpp"

#include <cstdint>
#include <vector>

namespace geo::vp {

// Homogeneous 2D point or line.
struct Vec3 {
    double x = 0, y = 0, z = 0;
};

Vec3 cross(const Vec3& a, const Vec3& b);
double dot(const Vec3& a, const Vec3& b);
// scales to unit Euclidean 3-norm (error on the zero vector)
Vec3 normalized(const Vec3& v);

// Homogeneous line through two points; error if they coincide.
Vec3 line_of(double x1, double y1, double x2, double y2);
Vec3 line_of(const lsd::LineSegment& s);
// Intersection of two lines, possibly a point at infinity; error if the
// lines are identical (cross product vanishes).
Vec3 intersect(const Vec3& l1, const Vec3& l2);

// Acute angle in degrees between a segment's direction and the direction
// from its midpoint toward vp (finite or at infinity). Range [0, 90].
double vp_residual_deg(const lsd::LineSegment& s, const Vec3& vp);

struct VanishingPoint {
    Vec3 p;                      // unit-normalized homogeneous point
    std::vector<int> inlier_ids; // ascending indices into the segment list
    int support = 0;
};

struct VpParams {
    int iters = 2000;
    double inlier_tol_deg = 2.0;
    int min_support = 5;
    int max_vps = 3;
    std::uint64_t seed = 42;
};

// Sequential RANSAC: hypothesize from two sampled segments, score by the
// angular residual above, refit the best hypothesis on its inliers via the
// smallest eigenvector of the weighted line scatter, remove inliers, and
// repeat. Coordinates are conditioned internally (centered on the segment
// bounding box, isotropically scaled), which leaves angular residuals
// untouched.
std::vector<VanishingPoint> estimate_vps(const std::vector<lsd::LineSegment>& segments,
                                         const VpParams& params = {});

// Principal point is assumed at the image center. Angles in radians.
struct CameraHypothesis {
    double focal = 0;
    double pitch = 0; // positive looks up (latitude at the principal ray)
    double roll = 0;  // positive tilts the projected up vector toward +x
};

// Focal from a pair of finite VPs of orthogonal pencils,
// f = sqrt(-(v1-pp).(v2-pp)), falling back to the image width when no pair
// gives a positive radicand. Pitch and roll follow from the VP closest to
// the vertical pencil; with no usable VP the identity camera is returned.
CameraHypothesis camera_from_vps(const std::vector<VanishingPoint>& vps, int width, int height);

// Per-cell projected world-up direction (unit) and latitude of the
// back-projected ray, sampled at cell centers.
struct PerspectiveCell {
    double ux = 0, uy = -1;
    double latitude = 0;
};

struct PerspectiveField {
    int gw = 0, gh = 0;
    std::vector<PerspectiveCell> cells; // row-major
    const PerspectiveCell& at(int cx, int cy) const { return cells[static_cast<std::size_t>(cy) * gw + cx]; }
};

// jobs > 1 evaluates cells in parallel with bitwise-identical output.
PerspectiveField perspective_field(const CameraHypothesis& cam, int width, int height,
                                   int gw = 8, int gh = 8, int jobs = 1);

// Up vector and latitude for a single pixel, shared by the field sampler.
PerspectiveCell perspective_at(const CameraHypothesis& cam, int width, int height,
                               double u, double v);

struct VpConsistency {
    double median_residual_deg = 0; // over per-segment best-VP residuals
    double inlier_fraction = 0;
    int n_clusters = 0;
};

VpConsistency vp_consistency(const std::vector<lsd::LineSegment>& segments,
                             const std::vector<VanishingPoint>& vps,
                             double inlier_tol_deg = 2.0);

} // namespace geo::vp
