#pragma once

#include "geo/image.hpp"
#include "geo/lsd.hpp"
#include "geo/shadow.hpp"
#include "geo/vpfield.hpp"

#include <string>
#include <vector>

namespace geo::cues {

// Canonical per-image feature schema. Column order is fixed; every cache
// row and logistic model indexes features by this list.
const std::vector<std::string>& schema();

// A named slice of the schema produced by one cue family.
struct Fragment {
    std::vector<std::pair<std::string, double>> values;
};

// Orientation statistics use the doubled-angle trick so the mean lives in
// [0, pi). Sums run in sorted order (angle, then length, then endpoints),
// which makes every statistic bit-invariant under input permutation.
Fragment line_stats(const std::vector<lsd::LineSegment>& segments);

Fragment vp_stats(const vp::VpConsistency& consistency, bool has_vps);

// grav_change averages the Euclidean difference between horizontally and
// vertically adjacent up vectors; a uniform field gives exactly zero.
Fragment field_stats(const vp::PerspectiveField& field);

Fragment shadow_stats(const shadow::ShadowVerdict& verdict);

// Lays fragments onto the schema. Unset features stay 0 (their presence
// flag says so). A name outside the schema or set twice is an error.
std::vector<double> assemble(const std::vector<Fragment>& fragments);

// Which cue families to compute.
struct ExtractOptions {
    bool lines = true;
    bool fields = true;
    bool shadows = true;
    lsd::LsdParams lsd;
    vp::VpParams vp;
    int grid_w = 8, grid_h = 8;
    double shadow_half_width_deg = 25.0;
};

// Everything derived from one image, kept around for dumps and training.
struct ExtractResult {
    std::vector<lsd::LineSegment> segments;
    std::vector<vp::VanishingPoint> vps;
    vp::CameraHypothesis camera;
    vp::PerspectiveField field;
    vp::VpConsistency consistency;
    std::vector<shadow::ShadowPair> pairs;
    shadow::ShadowVerdict verdict;
    std::vector<double> features; // assembled on the canonical schema
};

ExtractResult extract_one(const GrayImage& img,
                          const std::vector<std::pair<BinaryMask, BinaryMask>>& mask_pairs,
                          const ExtractOptions& opt = {});

} // namespace geo::cues
