#pragma once

#include "geo/image.hpp"

#include <vector>

namespace geo::lsd {

// Detected segment in source-image coordinates. The continuous frame puts
// pixel (i,j) on the square [i,i+1)x[j,j+1), so endpoints live in
// [0,width]x[0,height]. log_nfa is log10 of the expected number of false
// alarms; lower means more significant.
struct LineSegment {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    double width = 0;
    double log_nfa = 0;
};

double segment_length(const LineSegment& s);
// orientation folded to [0,pi)
double segment_angle(const LineSegment& s);

struct LsdParams {
    double rho = 2.0 / 255.0;     // gradient magnitude validity threshold
    double angle_tol_deg = 22.5;  // alignment tolerance for region growing
    double min_length = 10.0;     // discard shorter detections (source px)
    double log_nfa_max = 0.0;     // keep detections with log_nfa <= this
    double scale = 0.8;           // working-image scale
    double sigma_scale = 0.6;     // Gaussian sigma = sigma_scale/scale when scale < 1
    double density_th = 0.7;      // aligned-point density for rectangle refinement
    int n_bins = 1024;            // pseudo-ordering bins for seed selection
};

// Per-pixel gradient magnitude and level-line angle (gradient rotated a
// quarter turn). Pixels with magnitude <= rho, plus the last row and
// column where the 2x2 stencil does not fit, are marked invalid.
struct GradientField {
    int width = 0;
    int height = 0;
    std::vector<double> magnitude;
    std::vector<double> angle;
    std::vector<std::uint8_t> valid;
};

// jobs > 1 computes rows in parallel; output is bitwise identical to the
// serial path because every pixel is written independently.
GradientField compute_gradient(const GrayImage& img, double rho, int jobs = 1);

// log10 of P[K >= k] for K ~ Binomial(n, p). This is the tail bound behind
// every detection decision; accurate to well under a factor of 10^0.1,
// which is all the acceptance threshold needs.
double log10_binomial_tail(int n, int k, double p);

// Gaussian-blur-and-subsample used before detection when scale < 1.
GrayImage gaussian_downsample(const GrayImage& img, double scale, double sigma_scale);

// A-contrario line segment detector. Grows regions of aligned level-line
// pixels, fits rectangles, and keeps those whose NFA stays below the
// threshold. Deterministic: seeds are processed by descending gradient
// magnitude with raster order breaking ties. A single call is serial.
std::vector<LineSegment> detect_segments(const GrayImage& img, const LsdParams& params = {});

} // namespace geo::lsd
