#pragma once

#include "geo/lsd.hpp"
#include "geo/vpfield.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace geo::learn {

struct TrainMeta {
    std::uint64_t seed = 42;
    int epochs = 0;
    double lr = 0;
    double l2 = 0;
    double final_loss = 0;
};

// Fully connected layer, weights row-major [out x in].
struct Dense {
    int in = 0, out = 0;
    std::vector<double> w;
    std::vector<double> b;
};

double sigmoid(double z);

// ---- logistic regression over the feature schema ----

struct LogRegParams {
    double lr = 1e-2;
    double l2 = 1e-4;
    int epochs = 200;
    std::uint64_t seed = 42;
    bool class_balance = true;
};

struct LogRegModel {
    std::vector<std::string> feature_names;
    std::vector<double> mean, stdev; // standardization, stdev 1 for frozen cols
    std::vector<double> w;
    double b = 0;
    std::vector<std::uint8_t> frozen; // zero-variance columns, weight pinned 0
    TrainMeta meta;
};

// Full-batch gradient descent on the class-weighted log loss with an L2
// penalty on the weights (bias unpenalized). Inputs are standardized
// first; zero-variance columns get stdev 1 and a frozen zero weight.
LogRegModel train_logreg(const std::vector<std::vector<double>>& X,
                         const std::vector<int>& y,
                         const std::vector<std::string>& feature_names,
                         const LogRegParams& params = {});

double predict_logreg(const LogRegModel& m, const std::vector<double>& x);

// loss/gradient on already-standardized rows, exposed for the
// finite-difference checks in the test suite
double logreg_loss(const std::vector<std::vector<double>>& Xstd, const std::vector<int>& y,
                   const std::vector<double>& example_weight,
                   const std::vector<double>& w, double b, double l2);
void logreg_grad(const std::vector<std::vector<double>>& Xstd, const std::vector<int>& y,
                 const std::vector<double>& example_weight,
                 const std::vector<double>& w, double b, double l2,
                 std::vector<double>& gw, double& gb);

// ---- permutation-invariant set classifier over line segments ----

// Five features per segment: endpoints over image dimensions and length
// over the diagonal. Endpoints are swapped so the lexicographically
// smaller one comes first; together with the max pooling this makes the
// score bit-invariant under permutation and duplication of segments.
std::array<double, 5> encode_segment(const lsd::LineSegment& s, double width, double height);

struct SetParams {
    double lr = 1e-3;
    double l2 = 1e-4;
    int epochs = 200;
    int batch = 32;
    int cap = 512; // keep this many longest segments
    std::uint64_t seed = 42;
    bool class_balance = true;
    int phi0 = 64, phi1 = 64, head = 32;
};

// phi (5 -> phi0 -> phi1, rectified) per segment, channel-wise max pool,
// then a rectified head (phi1 -> head -> 1 logit).
struct SetNetModel {
    Dense phi0, phi1, head0, head1;
    TrainMeta meta;
};

struct SetExample {
    std::vector<lsd::LineSegment> segments;
    int label = 0; // 1 real, 0 generated
    double width = 0, height = 0;
};

// Glorot-uniform weights (limit sqrt(6/(in+out))), zero biases, drawn in a
// fixed tensor order from the seed.
SetNetModel init_setnet(const SetParams& params, std::uint64_t seed);

// Mini-batch SGD with manual backprop; the max-pool subgradient flows to
// the lowest-index argmax. Batches come from a seeded shuffle per epoch.
SetNetModel train_set(const std::vector<SetExample>& examples, const SetParams& params = {});

// sigmoid(logit); empty segment list is an error
double forward_set(const SetNetModel& m, const std::vector<lsd::LineSegment>& segments,
                   double width, double height, int cap = 512);

// Per-segment attribution: l1 norm of d logit / d (that segment's five
// features). Segments that win no pooling channel get exactly zero.
std::vector<double> saliency_set(const SetNetModel& m, const std::vector<lsd::LineSegment>& segments,
                                 double width, double height, int cap = 512);

// flat parameter vector helpers plus loss/grad, used by gradient checks
std::vector<double> flatten(const SetNetModel& m);
void unflatten(SetNetModel& m, const std::vector<double>& theta);
double set_loss(const SetNetModel& m, const std::vector<SetExample>& examples,
                double l2, const std::vector<double>& example_weight);
std::vector<double> set_loss_grad(const SetNetModel& m, const std::vector<SetExample>& examples,
                                  double l2, const std::vector<double>& example_weight);

// ---- grid classifier over perspective fields ----

struct GridParams {
    double lr = 1e-3;
    double l2 = 1e-4;
    int epochs = 200;
    int batch = 32;
    std::uint64_t seed = 42;
    bool class_balance = true;
    int hidden = 32;
};

// Field flattened cell-major as (ux, uy, latitude) triples into a single
// rectified hidden layer and a logit.
struct GridNetModel {
    int gw = 0, gh = 0;
    Dense l0, l1;
    TrainMeta meta;
};

struct GridExample {
    vp::PerspectiveField field;
    int label = 0;
};

GridNetModel init_gridnet(int gw, int gh, const GridParams& params, std::uint64_t seed);
GridNetModel train_grid(const std::vector<GridExample>& examples, const GridParams& params = {});
// error when the field's grid does not match the model
double forward_grid(const GridNetModel& m, const vp::PerspectiveField& field);

std::vector<double> flatten(const GridNetModel& m);
void unflatten(GridNetModel& m, const std::vector<double>& theta);
double grid_loss(const GridNetModel& m, const std::vector<GridExample>& examples,
                 double l2, const std::vector<double>& example_weight);
std::vector<double> grid_loss_grad(const GridNetModel& m, const std::vector<GridExample>& examples,
                                   double l2, const std::vector<double>& example_weight);

// per-cell attribution, summed |d logit / d input| over the three channels
std::vector<double> saliency_grid(const GridNetModel& m, const vp::PerspectiveField& field);
// |w_j / stdev_j| per feature
std::vector<double> saliency_logreg(const LogRegModel& m);

// ---- serialization ----
// Versioned line-oriented text. Values print with round-trip precision, so
// save followed by load reproduces the model bit-exactly. Loaders check
// the version line, the type tag, and every tensor's element count, and
// name the offender on mismatch.

enum class ModelType { logreg, setnet, gridnet };

ModelType peek_model_type(const std::string& path);
void save_model(const std::string& path, const LogRegModel& m);
void save_model(const std::string& path, const SetNetModel& m);
void save_model(const std::string& path, const GridNetModel& m);
LogRegModel load_logreg(const std::string& path);
SetNetModel load_setnet(const std::string& path);
GridNetModel load_gridnet(const std::string& path);

} // namespace geo::learn
