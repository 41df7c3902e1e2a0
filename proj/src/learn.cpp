#include "geo/learn.hpp"

#include "geo/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace geo::learn {

double sigmoid(double z) {
    if (z >= 0)
        return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

namespace {

// numerically safe binary cross entropy on the logit
double bce(double logit, int y) {
    return std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::fabs(logit)));
}

// y = W x + b
void affine(const Dense& d, const double* x, double* y) {
    for (int o = 0; o < d.out; ++o) {
        const double* row = d.w.data() + static_cast<std::size_t>(o) * d.in;
        double s = d.b[static_cast<std::size_t>(o)];
        for (int i = 0; i < d.in; ++i)
            s += row[i] * x[i];
        y[o] = s;
    }
}

void relu_inplace(double* x, int n) {
    for (int i = 0; i < n; ++i)
        if (x[i] < 0)
            x[i] = 0;
}

Dense make_dense(int in, int out) {
    Dense d;
    d.in = in;
    d.out = out;
    d.w.assign(static_cast<std::size_t>(in) * out, 0.0);
    d.b.assign(static_cast<std::size_t>(out), 0.0);
    return d;
}

// Glorot-uniform draw for one tensor, row-major order
void glorot_init(Dense& d, Rng& rng) {
    double limit = std::sqrt(6.0 / (d.in + d.out));
    for (auto& w : d.w)
        w = rng.uniform(-limit, limit);
}

std::vector<double> balance_weights(const std::vector<int>& y, bool enabled) {
    std::size_t n_real = 0;
    for (int v : y)
        n_real += (v != 0);
    std::size_t n_gen = y.size() - n_real;
    std::vector<double> wt(y.size(), 1.0);
    if (!enabled || n_real == 0 || n_gen == 0)
        return wt;
    double w1 = y.size() / (2.0 * n_real);
    double w0 = y.size() / (2.0 * n_gen);
    for (std::size_t i = 0; i < y.size(); ++i)
        wt[i] = y[i] ? w1 : w0;
    return wt;
}

void append_dense(std::vector<double>& out, const Dense& d) {
    out.insert(out.end(), d.w.begin(), d.w.end());
    out.insert(out.end(), d.b.begin(), d.b.end());
}

std::size_t read_dense(Dense& d, const std::vector<double>& theta, std::size_t at) {
    std::copy(theta.begin() + at, theta.begin() + at + d.w.size(), d.w.begin());
    at += d.w.size();
    std::copy(theta.begin() + at, theta.begin() + at + d.b.size(), d.b.begin());
    return at + d.b.size();
}

double l2_half_norm(const Dense& d) {
    double s = 0;
    for (double w : d.w)
        s += w * w;
    return s;
}

} // namespace

// ---- logistic regression ----

double logreg_loss(const std::vector<std::vector<double>>& Xstd, const std::vector<int>& y,
                   const std::vector<double>& example_weight,
                   const std::vector<double>& w, double b, double l2) {
    double loss = 0;
    for (std::size_t i = 0; i < Xstd.size(); ++i) {
        double z = b;
        for (std::size_t j = 0; j < w.size(); ++j)
            z += w[j] * Xstd[i][j];
        loss += example_weight[i] * bce(z, y[i]);
    }
    loss /= static_cast<double>(Xstd.size());
    double pen = 0;
    for (double wj : w)
        pen += wj * wj;
    return loss + 0.5 * l2 * pen;
}

void logreg_grad(const std::vector<std::vector<double>>& Xstd, const std::vector<int>& y,
                 const std::vector<double>& example_weight,
                 const std::vector<double>& w, double b, double l2,
                 std::vector<double>& gw, double& gb) {
    gw.assign(w.size(), 0.0);
    gb = 0;
    for (std::size_t i = 0; i < Xstd.size(); ++i) {
        double z = b;
        for (std::size_t j = 0; j < w.size(); ++j)
            z += w[j] * Xstd[i][j];
        double d = example_weight[i] * (sigmoid(z) - y[i]);
        for (std::size_t j = 0; j < w.size(); ++j)
            gw[j] += d * Xstd[i][j];
        gb += d;
    }
    double inv = 1.0 / static_cast<double>(Xstd.size());
    for (std::size_t j = 0; j < w.size(); ++j)
        gw[j] = gw[j] * inv + l2 * w[j];
    gb *= inv;
}

LogRegModel train_logreg(const std::vector<std::vector<double>>& X,
                         const std::vector<int>& y,
                         const std::vector<std::string>& feature_names,
                         const LogRegParams& params) {
    if (X.empty())
        throw error("train_logreg: empty training set");
    if (X.size() != y.size())
        throw error("train_logreg: rows and labels differ in length");
    const std::size_t d = feature_names.size();
    for (std::size_t i = 0; i < X.size(); ++i) {
        if (X[i].size() != d)
            throw error("train_logreg: row " + std::to_string(i) + " has wrong width");
        for (double v : X[i])
            if (!std::isfinite(v))
                throw error("train_logreg: non-finite feature in row " + std::to_string(i));
    }
    bool any_pos = false, any_neg = false;
    for (int label : y)
        (label ? any_pos : any_neg) = true;
    if (!any_pos || !any_neg)
        throw error("train_logreg: training data has a single class");

    LogRegModel m;
    m.feature_names = feature_names;
    m.mean.assign(d, 0.0);
    m.stdev.assign(d, 1.0);
    m.frozen.assign(d, 0);
    m.w.assign(d, 0.0);
    m.b = 0;

    for (std::size_t j = 0; j < d; ++j) {
        double s = 0;
        for (const auto& row : X)
            s += row[j];
        m.mean[j] = s / static_cast<double>(X.size());
        double v = 0;
        for (const auto& row : X) {
            double diff = row[j] - m.mean[j];
            v += diff * diff;
        }
        v /= static_cast<double>(X.size());
        if (v > 0)
            m.stdev[j] = std::sqrt(v);
        else
            m.frozen[j] = 1; // constant column: stdev 1, weight stays 0
    }

    std::vector<std::vector<double>> Xstd(X.size(), std::vector<double>(d));
    for (std::size_t i = 0; i < X.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
            Xstd[i][j] = (X[i][j] - m.mean[j]) / m.stdev[j];

    auto wt = balance_weights(y, params.class_balance);

    std::vector<double> gw;
    double gb = 0;
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        logreg_grad(Xstd, y, wt, m.w, m.b, params.l2, gw, gb);
        for (std::size_t j = 0; j < d; ++j) {
            if (m.frozen[j])
                continue;
            m.w[j] -= params.lr * gw[j];
        }
        m.b -= params.lr * gb;
    }

    m.meta.seed = params.seed;
    m.meta.epochs = params.epochs;
    m.meta.lr = params.lr;
    m.meta.l2 = params.l2;
    m.meta.final_loss = logreg_loss(Xstd, y, wt, m.w, m.b, params.l2);
    return m;
}

double predict_logreg(const LogRegModel& m, const std::vector<double>& x) {
    if (x.size() != m.w.size())
        throw error("predict_logreg: expected " + std::to_string(m.w.size()) +
                    " features, got " + std::to_string(x.size()));
    double z = m.b;
    for (std::size_t j = 0; j < x.size(); ++j)
        z += m.w[j] * (x[j] - m.mean[j]) / m.stdev[j];
    return sigmoid(z);
}

std::vector<double> saliency_logreg(const LogRegModel& m) {
    std::vector<double> s(m.w.size());
    for (std::size_t j = 0; j < m.w.size(); ++j)
        s[j] = std::fabs(m.w[j] / m.stdev[j]);
    return s;
}

// ---- set classifier ----

std::array<double, 5> encode_segment(const lsd::LineSegment& s, double width, double height) {
    if (width <= 0 || height <= 0)
        throw error("encode_segment: non-positive image dimensions");
    double x1 = s.x1, y1 = s.y1, x2 = s.x2, y2 = s.y2;
    if (std::tie(x2, y2) < std::tie(x1, y1)) {
        std::swap(x1, x2);
        std::swap(y1, y2);
    }
    double diag = std::hypot(width, height);
    return {x1 / width, y1 / height, x2 / width, y2 / height,
            lsd::segment_length(s) / diag};
}

namespace {

// indices of the `cap` longest segments (ties to the earlier index),
// returned ascending
std::vector<std::size_t> cap_selection(const std::vector<lsd::LineSegment>& segments, int cap) {
    std::vector<std::size_t> idx(segments.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (cap > 0 && segments.size() > static_cast<std::size_t>(cap)) {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return lsd::segment_length(segments[a]) > lsd::segment_length(segments[b]);
        });
        idx.resize(static_cast<std::size_t>(cap));
        std::sort(idx.begin(), idx.end());
    }
    return idx;
}

struct SetTrace {
    std::vector<std::array<double, 5>> x;
    std::vector<double> a0, a1; // rectified activations, n * width each
    std::vector<double> pooled;
    std::vector<int> argmax;
    std::vector<double> h; // rectified head hidden
    double logit = 0;
};

double set_forward(const SetNetModel& m, SetTrace& t) {
    const std::size_t n = t.x.size();
    const int w0 = m.phi0.out, w1 = m.phi1.out;
    t.a0.assign(n * static_cast<std::size_t>(w0), 0.0);
    t.a1.assign(n * static_cast<std::size_t>(w1), 0.0);
    for (std::size_t e = 0; e < n; ++e) {
        double* a0 = t.a0.data() + e * w0;
        double* a1 = t.a1.data() + e * w1;
        affine(m.phi0, t.x[e].data(), a0);
        relu_inplace(a0, w0);
        affine(m.phi1, a0, a1);
        relu_inplace(a1, w1);
    }
    // channel-wise max over elements; first maximum wins on ties
    t.pooled.assign(static_cast<std::size_t>(w1), 0.0);
    t.argmax.assign(static_cast<std::size_t>(w1), 0);
    for (int c = 0; c < w1; ++c) {
        double best = t.a1[static_cast<std::size_t>(c)];
        int bi = 0;
        for (std::size_t e = 1; e < n; ++e) {
            double v = t.a1[e * w1 + c];
            if (v > best) {
                best = v;
                bi = static_cast<int>(e);
            }
        }
        t.pooled[static_cast<std::size_t>(c)] = best;
        t.argmax[static_cast<std::size_t>(c)] = bi;
    }
    t.h.assign(static_cast<std::size_t>(m.head0.out), 0.0);
    affine(m.head0, t.pooled.data(), t.h.data());
    relu_inplace(t.h.data(), m.head0.out);
    double logit = 0;
    affine(m.head1, t.h.data(), &logit);
    t.logit = logit;
    return logit;
}

struct SetGrads {
    Dense phi0, phi1, head0, head1;
};

SetGrads zero_grads(const SetNetModel& m) {
    SetGrads g;
    g.phi0 = make_dense(m.phi0.in, m.phi0.out);
    g.phi1 = make_dense(m.phi1.in, m.phi1.out);
    g.head0 = make_dense(m.head0.in, m.head0.out);
    g.head1 = make_dense(m.head1.in, m.head1.out);
    return g;
}

// accumulates parameter gradients for one example; when gx is non-null it
// receives d logit/d x per element (scaled by dlogit)
void set_backward(const SetNetModel& m, const SetTrace& t, double dlogit,
                  SetGrads& g, std::vector<std::array<double, 5>>* gx) {
    const int w0 = m.phi0.out, w1 = m.phi1.out, hh = m.head0.out;
    const std::size_t n = t.x.size();

    // head
    std::vector<double> g_h(static_cast<std::size_t>(hh), 0.0);
    for (int j = 0; j < hh; ++j) {
        g.head1.w[static_cast<std::size_t>(j)] += dlogit * t.h[static_cast<std::size_t>(j)];
        if (t.h[static_cast<std::size_t>(j)] > 0)
            g_h[static_cast<std::size_t>(j)] = dlogit * m.head1.w[static_cast<std::size_t>(j)];
    }
    g.head1.b[0] += dlogit;

    std::vector<double> g_pooled(static_cast<std::size_t>(w1), 0.0);
    for (int j = 0; j < hh; ++j) {
        double gj = g_h[static_cast<std::size_t>(j)];
        if (gj == 0)
            continue;
        const double* row = m.head0.w.data() + static_cast<std::size_t>(j) * w1;
        double* grow = g.head0.w.data() + static_cast<std::size_t>(j) * w1;
        for (int c = 0; c < w1; ++c) {
            grow[c] += gj * t.pooled[static_cast<std::size_t>(c)];
            g_pooled[static_cast<std::size_t>(c)] += gj * row[c];
        }
        g.head0.b[static_cast<std::size_t>(j)] += gj;
    }

    // route pooling gradients to winning elements
    std::vector<double> g_a1(n * static_cast<std::size_t>(w1), 0.0);
    for (int c = 0; c < w1; ++c) {
        double gc = g_pooled[static_cast<std::size_t>(c)];
        if (gc != 0)
            g_a1[static_cast<std::size_t>(t.argmax[static_cast<std::size_t>(c)]) * w1 + c] = gc;
    }

    std::vector<double> g_z1(static_cast<std::size_t>(w1));
    std::vector<double> g_z0(static_cast<std::size_t>(w0));
    for (std::size_t e = 0; e < n; ++e) {
        const double* a0 = t.a0.data() + e * w0;
        const double* a1 = t.a1.data() + e * w1;
        const double* ga1 = g_a1.data() + e * w1;
        bool any = false;
        for (int c = 0; c < w1; ++c) {
            g_z1[static_cast<std::size_t>(c)] = (a1[c] > 0) ? ga1[c] : 0.0;
            any |= (g_z1[static_cast<std::size_t>(c)] != 0);
        }
        if (!any) {
            if (gx)
                (*gx)[e] = {0, 0, 0, 0, 0};
            continue;
        }
        std::fill(g_z0.begin(), g_z0.end(), 0.0);
        for (int c = 0; c < w1; ++c) {
            double gc = g_z1[static_cast<std::size_t>(c)];
            if (gc == 0)
                continue;
            const double* row = m.phi1.w.data() + static_cast<std::size_t>(c) * w0;
            double* grow = g.phi1.w.data() + static_cast<std::size_t>(c) * w0;
            for (int i = 0; i < w0; ++i) {
                grow[i] += gc * a0[i];
                g_z0[static_cast<std::size_t>(i)] += gc * row[i];
            }
            g.phi1.b[static_cast<std::size_t>(c)] += gc;
        }
        std::array<double, 5> gxe = {0, 0, 0, 0, 0};
        for (int i = 0; i < w0; ++i) {
            double gi = (a0[i] > 0) ? g_z0[static_cast<std::size_t>(i)] : 0.0;
            if (gi == 0)
                continue;
            const double* row = m.phi0.w.data() + static_cast<std::size_t>(i) * 5;
            double* grow = g.phi0.w.data() + static_cast<std::size_t>(i) * 5;
            for (int k = 0; k < 5; ++k) {
                grow[k] += gi * t.x[e][static_cast<std::size_t>(k)];
                gxe[static_cast<std::size_t>(k)] += gi * row[k];
            }
            g.phi0.b[static_cast<std::size_t>(i)] += gi;
        }
        if (gx)
            (*gx)[e] = gxe;
    }
}

void encode_into(SetTrace& t, const std::vector<lsd::LineSegment>& segments,
                 double width, double height, int cap,
                 std::vector<std::size_t>* selected = nullptr) {
    auto idx = cap_selection(segments, cap);
    t.x.clear();
    t.x.reserve(idx.size());
    for (std::size_t i : idx)
        t.x.push_back(encode_segment(segments[i], width, height));
    if (selected)
        *selected = std::move(idx);
}

} // namespace

SetNetModel init_setnet(const SetParams& params, std::uint64_t seed) {
    SetNetModel m;
    m.phi0 = make_dense(5, params.phi0);
    m.phi1 = make_dense(params.phi0, params.phi1);
    m.head0 = make_dense(params.phi1, params.head);
    m.head1 = make_dense(params.head, 1);
    Rng rng(seed);
    glorot_init(m.phi0, rng);
    glorot_init(m.phi1, rng);
    glorot_init(m.head0, rng);
    glorot_init(m.head1, rng);
    m.meta.seed = seed;
    return m;
}

double forward_set(const SetNetModel& m, const std::vector<lsd::LineSegment>& segments,
                   double width, double height, int cap) {
    if (segments.empty())
        throw error("forward_set: empty segment set");
    SetTrace t;
    encode_into(t, segments, width, height, cap);
    return sigmoid(set_forward(m, t));
}

std::vector<double> saliency_set(const SetNetModel& m, const std::vector<lsd::LineSegment>& segments,
                                 double width, double height, int cap) {
    if (segments.empty())
        throw error("saliency_set: empty segment set");
    SetTrace t;
    std::vector<std::size_t> selected;
    encode_into(t, segments, width, height, cap, &selected);
    set_forward(m, t);
    SetGrads g = zero_grads(m);
    std::vector<std::array<double, 5>> gx(t.x.size());
    set_backward(m, t, 1.0, g, &gx);
    std::vector<double> out(segments.size(), 0.0);
    for (std::size_t k = 0; k < selected.size(); ++k) {
        double s = 0;
        for (double v : gx[k])
            s += std::fabs(v);
        out[selected[k]] = s;
    }
    return out;
}

double set_loss(const SetNetModel& m, const std::vector<SetExample>& examples,
                double l2, const std::vector<double>& example_weight) {
    double loss = 0;
    SetTrace t;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        encode_into(t, examples[i].segments, examples[i].width, examples[i].height, 1 << 30);
        loss += example_weight[i] * bce(set_forward(m, t), examples[i].label);
    }
    loss /= static_cast<double>(examples.size());
    loss += 0.5 * l2 * (l2_half_norm(m.phi0) + l2_half_norm(m.phi1) +
                        l2_half_norm(m.head0) + l2_half_norm(m.head1));
    return loss;
}

std::vector<double> set_loss_grad(const SetNetModel& m, const std::vector<SetExample>& examples,
                                  double l2, const std::vector<double>& example_weight) {
    SetGrads g = zero_grads(m);
    SetTrace t;
    double inv = 1.0 / static_cast<double>(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        encode_into(t, examples[i].segments, examples[i].width, examples[i].height, 1 << 30);
        double p = sigmoid(set_forward(m, t));
        set_backward(m, t, inv * example_weight[i] * (p - examples[i].label), g, nullptr);
    }
    auto add_l2 = [&](Dense& gd, const Dense& md) {
        for (std::size_t k = 0; k < gd.w.size(); ++k)
            gd.w[k] += l2 * md.w[k];
    };
    add_l2(g.phi0, m.phi0);
    add_l2(g.phi1, m.phi1);
    add_l2(g.head0, m.head0);
    add_l2(g.head1, m.head1);
    std::vector<double> flat;
    append_dense(flat, g.phi0);
    append_dense(flat, g.phi1);
    append_dense(flat, g.head0);
    append_dense(flat, g.head1);
    return flat;
}

std::vector<double> flatten(const SetNetModel& m) {
    std::vector<double> flat;
    append_dense(flat, m.phi0);
    append_dense(flat, m.phi1);
    append_dense(flat, m.head0);
    append_dense(flat, m.head1);
    return flat;
}

void unflatten(SetNetModel& m, const std::vector<double>& theta) {
    std::size_t at = 0;
    at = read_dense(m.phi0, theta, at);
    at = read_dense(m.phi1, theta, at);
    at = read_dense(m.head0, theta, at);
    at = read_dense(m.head1, theta, at);
    if (at != theta.size())
        throw error("unflatten: parameter vector length mismatch");
}

SetNetModel train_set(const std::vector<SetExample>& examples, const SetParams& params) {
    if (examples.empty())
        throw error("train_set: empty training set");
    bool any_pos = false, any_neg = false;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (examples[i].segments.empty())
            throw error("train_set: example " + std::to_string(i) + " has no segments");
        (examples[i].label ? any_pos : any_neg) = true;
    }
    if (!any_pos || !any_neg)
        throw error("train_set: training data has a single class");

    SetNetModel m = init_setnet(params, params.seed);

    std::vector<int> labels(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i)
        labels[i] = examples[i].label;
    auto wt = balance_weights(labels, params.class_balance);

    // encode once; the cap keeps the longest segments
    std::vector<SetTrace> traces(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i)
        encode_into(traces[i], examples[i].segments, examples[i].width, examples[i].height,
                    params.cap);

    Rng rng(params.seed + 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    SetGrads g = zero_grads(m);
    auto zero = [&]() {
        auto clear_d = [](Dense& d) {
            std::fill(d.w.begin(), d.w.end(), 0.0);
            std::fill(d.b.begin(), d.b.end(), 0.0);
        };
        clear_d(g.phi0);
        clear_d(g.phi1);
        clear_d(g.head0);
        clear_d(g.head1);
    };
    auto step = [&](Dense& md, const Dense& gd, std::size_t batch) {
        double inv = 1.0 / static_cast<double>(batch);
        for (std::size_t k = 0; k < md.w.size(); ++k)
            md.w[k] -= params.lr * (gd.w[k] * inv + params.l2 * md.w[k]);
        for (std::size_t k = 0; k < md.b.size(); ++k)
            md.b[k] -= params.lr * gd.b[k] * inv;
    };

    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(params.batch)) {
            std::size_t stop = std::min(order.size(), at + static_cast<std::size_t>(params.batch));
            zero();
            for (std::size_t k = at; k < stop; ++k) {
                std::size_t i = order[k];
                double p = sigmoid(set_forward(m, traces[i]));
                set_backward(m, traces[i], wt[i] * (p - examples[i].label), g, nullptr);
            }
            std::size_t batch = stop - at;
            step(m.phi0, g.phi0, batch);
            step(m.phi1, g.phi1, batch);
            step(m.head0, g.head0, batch);
            step(m.head1, g.head1, batch);
        }
    }

    m.meta.seed = params.seed;
    m.meta.epochs = params.epochs;
    m.meta.lr = params.lr;
    m.meta.l2 = params.l2;
    m.meta.final_loss = set_loss(m, examples, params.l2, wt);
    return m;
}

// ---- grid classifier ----

namespace {

std::vector<double> flatten_field(const vp::PerspectiveField& field) {
    std::vector<double> v;
    v.reserve(field.cells.size() * 3);
    for (const auto& c : field.cells) {
        v.push_back(c.ux);
        v.push_back(c.uy);
        v.push_back(c.latitude);
    }
    return v;
}

double grid_forward(const GridNetModel& m, const std::vector<double>& v,
                    std::vector<double>& h) {
    h.assign(static_cast<std::size_t>(m.l0.out), 0.0);
    affine(m.l0, v.data(), h.data());
    relu_inplace(h.data(), m.l0.out);
    double logit = 0;
    affine(m.l1, h.data(), &logit);
    return logit;
}

struct GridGrads {
    Dense l0, l1;
};

void grid_backward(const GridNetModel& m, const std::vector<double>& v,
                   const std::vector<double>& h, double dlogit,
                   GridGrads& g, std::vector<double>* gv) {
    if (gv)
        gv->assign(v.size(), 0.0);
    for (int j = 0; j < m.l0.out; ++j) {
        g.l1.w[static_cast<std::size_t>(j)] += dlogit * h[static_cast<std::size_t>(j)];
        if (h[static_cast<std::size_t>(j)] <= 0)
            continue;
        double gj = dlogit * m.l1.w[static_cast<std::size_t>(j)];
        const double* row = m.l0.w.data() + static_cast<std::size_t>(j) * m.l0.in;
        double* grow = g.l0.w.data() + static_cast<std::size_t>(j) * m.l0.in;
        for (int i = 0; i < m.l0.in; ++i) {
            grow[i] += gj * v[static_cast<std::size_t>(i)];
            if (gv)
                (*gv)[static_cast<std::size_t>(i)] += gj * row[i];
        }
        g.l0.b[static_cast<std::size_t>(j)] += gj;
    }
    g.l1.b[0] += dlogit;
}

} // namespace

GridNetModel init_gridnet(int gw, int gh, const GridParams& params, std::uint64_t seed) {
    if (gw <= 0 || gh <= 0)
        throw error("init_gridnet: grid dimensions must be positive");
    GridNetModel m;
    m.gw = gw;
    m.gh = gh;
    m.l0 = make_dense(3 * gw * gh, params.hidden);
    m.l1 = make_dense(params.hidden, 1);
    Rng rng(seed);
    glorot_init(m.l0, rng);
    glorot_init(m.l1, rng);
    m.meta.seed = seed;
    return m;
}

double forward_grid(const GridNetModel& m, const vp::PerspectiveField& field) {
    if (field.gw != m.gw || field.gh != m.gh)
        throw error("forward_grid: field is " + std::to_string(field.gw) + "x" +
                    std::to_string(field.gh) + " but the model expects " +
                    std::to_string(m.gw) + "x" + std::to_string(m.gh));
    std::vector<double> h;
    return sigmoid(grid_forward(m, flatten_field(field), h));
}

GridNetModel train_grid(const std::vector<GridExample>& examples, const GridParams& params) {
    if (examples.empty())
        throw error("train_grid: empty training set");
    const int gw = examples[0].field.gw, gh = examples[0].field.gh;
    bool any_pos = false, any_neg = false;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (examples[i].field.gw != gw || examples[i].field.gh != gh)
            throw error("train_grid: example " + std::to_string(i) + " grid mismatch");
        (examples[i].label ? any_pos : any_neg) = true;
    }
    if (!any_pos || !any_neg)
        throw error("train_grid: training data has a single class");

    GridNetModel m = init_gridnet(gw, gh, params, params.seed);

    std::vector<int> labels(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i)
        labels[i] = examples[i].label;
    auto wt = balance_weights(labels, params.class_balance);

    std::vector<std::vector<double>> inputs(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i)
        inputs[i] = flatten_field(examples[i].field);

    Rng rng(params.seed + 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    GridGrads g;
    g.l0 = make_dense(m.l0.in, m.l0.out);
    g.l1 = make_dense(m.l1.in, m.l1.out);
    std::vector<double> h;

    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(params.batch)) {
            std::size_t stop = std::min(order.size(), at + static_cast<std::size_t>(params.batch));
            std::fill(g.l0.w.begin(), g.l0.w.end(), 0.0);
            std::fill(g.l0.b.begin(), g.l0.b.end(), 0.0);
            std::fill(g.l1.w.begin(), g.l1.w.end(), 0.0);
            std::fill(g.l1.b.begin(), g.l1.b.end(), 0.0);
            for (std::size_t k = at; k < stop; ++k) {
                std::size_t i = order[k];
                double p = sigmoid(grid_forward(m, inputs[i], h));
                grid_backward(m, inputs[i], h, wt[i] * (p - examples[i].label), g, nullptr);
            }
            double inv = 1.0 / static_cast<double>(stop - at);
            for (std::size_t k = 0; k < m.l0.w.size(); ++k)
                m.l0.w[k] -= params.lr * (g.l0.w[k] * inv + params.l2 * m.l0.w[k]);
            for (std::size_t k = 0; k < m.l0.b.size(); ++k)
                m.l0.b[k] -= params.lr * g.l0.b[k] * inv;
            for (std::size_t k = 0; k < m.l1.w.size(); ++k)
                m.l1.w[k] -= params.lr * (g.l1.w[k] * inv + params.l2 * m.l1.w[k]);
            for (std::size_t k = 0; k < m.l1.b.size(); ++k)
                m.l1.b[k] -= params.lr * g.l1.b[k] * inv;
        }
    }

    m.meta.seed = params.seed;
    m.meta.epochs = params.epochs;
    m.meta.lr = params.lr;
    m.meta.l2 = params.l2;
    m.meta.final_loss = grid_loss(m, examples, params.l2, wt);
    return m;
}

double grid_loss(const GridNetModel& m, const std::vector<GridExample>& examples,
                 double l2, const std::vector<double>& example_weight) {
    double loss = 0;
    std::vector<double> h;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        double logit = grid_forward(m, flatten_field(examples[i].field), h);
        loss += example_weight[i] * bce(logit, examples[i].label);
    }
    loss /= static_cast<double>(examples.size());
    loss += 0.5 * l2 * (l2_half_norm(m.l0) + l2_half_norm(m.l1));
    return loss;
}

std::vector<double> grid_loss_grad(const GridNetModel& m, const std::vector<GridExample>& examples,
                                   double l2, const std::vector<double>& example_weight) {
    GridGrads g;
    g.l0 = make_dense(m.l0.in, m.l0.out);
    g.l1 = make_dense(m.l1.in, m.l1.out);
    std::vector<double> h;
    double inv = 1.0 / static_cast<double>(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        std::vector<double> v = flatten_field(examples[i].field);
        double p = sigmoid(grid_forward(m, v, h));
        grid_backward(m, v, h, inv * example_weight[i] * (p - examples[i].label), g, nullptr);
    }
    for (std::size_t k = 0; k < g.l0.w.size(); ++k)
        g.l0.w[k] += l2 * m.l0.w[k];
    for (std::size_t k = 0; k < g.l1.w.size(); ++k)
        g.l1.w[k] += l2 * m.l1.w[k];
    std::vector<double> flat;
    append_dense(flat, g.l0);
    append_dense(flat, g.l1);
    return flat;
}

std::vector<double> flatten(const GridNetModel& m) {
    std::vector<double> flat;
    append_dense(flat, m.l0);
    append_dense(flat, m.l1);
    return flat;
}

void unflatten(GridNetModel& m, const std::vector<double>& theta) {
    std::size_t at = 0;
    at = read_dense(m.l0, theta, at);
    at = read_dense(m.l1, theta, at);
    if (at != theta.size())
        throw error("unflatten: parameter vector length mismatch");
}

std::vector<double> saliency_grid(const GridNetModel& m, const vp::PerspectiveField& field) {
    if (field.gw != m.gw || field.gh != m.gh)
        throw error("saliency_grid: field grid does not match the model");
    std::vector<double> v = flatten_field(field);
    std::vector<double> h;
    grid_forward(m, v, h);
    GridGrads g;
    g.l0 = make_dense(m.l0.in, m.l0.out);
    g.l1 = make_dense(m.l1.in, m.l1.out);
    std::vector<double> gv;
    grid_backward(m, v, h, 1.0, g, &gv);
    std::vector<double> out(field.cells.size(), 0.0);
    for (std::size_t c = 0; c < field.cells.size(); ++c)
        out[c] = std::fabs(gv[c * 3]) + std::fabs(gv[c * 3 + 1]) + std::fabs(gv[c * 3 + 2]);
    return out;
}

// ---- serialization ----

namespace {

const char* kVersionLine = "geoforensics-model v1";

void write_meta(std::ofstream& out, const TrainMeta& meta) {
    out << "meta seed " << meta.seed << "\n";
    out << "meta epochs " << meta.epochs << "\n";
    out << "meta lr " << format_double(meta.lr) << "\n";
    out << "meta l2 " << format_double(meta.l2) << "\n";
    out << "meta final_loss " << format_double(meta.final_loss) << "\n";
}

void write_tensor(std::ofstream& out, const char* name, const std::vector<double>& v,
                  std::size_t rows, std::size_t cols) {
    out << "tensor " << name << " " << rows << " " << cols << "\n";
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (c)
                out << " ";
            out << format_double(v[r * cols + c]);
        }
        out << "\n";
    }
}

struct ModelReader {
    std::string path;
    std::ifstream in;
    std::string line;
    int lineno = 0;

    explicit ModelReader(const std::string& p) : path(p), in(p) {
        if (!in)
            throw error(p + ": cannot open");
    }

    bool next() {
        if (!std::getline(in, line))
            return false;
        ++lineno;
        return true;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw error(path + ":" + std::to_string(lineno) + ": " + msg);
    }

    void expect_version() {
        if (!next() || line != kVersionLine)
            throw error(path + ": not a geoforensics model (bad version line)");
    }

    std::string read_type() {
        if (!next() || line.rfind("type ", 0) != 0)
            fail("expected 'type <tag>'");
        return line.substr(5);
    }

    TrainMeta read_meta() {
        TrainMeta meta;
        while (in.peek() == 'm') {
            if (!next())
                break;
            std::istringstream ss(line);
            std::string kw, key;
            ss >> kw >> key;
            if (kw != "meta")
                fail("expected meta line");
            if (key == "seed")
                ss >> meta.seed;
            else if (key == "epochs")
                ss >> meta.epochs;
            else if (key == "lr")
                ss >> meta.lr;
            else if (key == "l2")
                ss >> meta.l2;
            else if (key == "final_loss")
                ss >> meta.final_loss;
            else
                fail("unknown meta key '" + key + "'");
        }
        return meta;
    }

    void read_tensor(const char* name, std::vector<double>& v,
                     std::size_t rows, std::size_t cols) {
        if (!next())
            fail(std::string("missing tensor ") + name);
        std::istringstream ss(line);
        std::string kw, got;
        std::size_t r = 0, c = 0;
        ss >> kw >> got >> r >> c;
        if (kw != "tensor" || got != name)
            fail(std::string("expected tensor ") + name + ", got '" + line + "'");
        if (r != rows || c != cols)
            fail(std::string("tensor ") + name + ": expected " + std::to_string(rows) + "x" +
                 std::to_string(cols));
        v.assign(rows * cols, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
            if (!next())
                fail(std::string("tensor ") + name + ": truncated at row " + std::to_string(i));
            std::istringstream row(line);
            for (std::size_t j = 0; j < cols; ++j) {
                if (!(row >> v[i * cols + j]))
                    fail(std::string("tensor ") + name + ": row " + std::to_string(i) +
                         " has fewer than " + std::to_string(cols) + " values");
            }
        }
    }
};

} // namespace

ModelType peek_model_type(const std::string& path) {
    ModelReader r(path);
    r.expect_version();
    std::string tag = r.read_type();
    if (tag == "logreg")
        return ModelType::logreg;
    if (tag == "setnet")
        return ModelType::setnet;
    if (tag == "gridnet")
        return ModelType::gridnet;
    r.fail("unknown model type '" + tag + "'");
}

void save_model(const std::string& path, const LogRegModel& m) {
    std::ofstream out(path);
    if (!out)
        throw error(path + ": cannot open for writing");
    out << kVersionLine << "\n";
    out << "type logreg\n";
    write_meta(out, m.meta);
    out << "features " << m.feature_names.size() << "\n";
    for (const auto& n : m.feature_names)
        out << "name " << n << "\n";
    std::size_t d = m.w.size();
    write_tensor(out, "mean", m.mean, 1, d);
    write_tensor(out, "stdev", m.stdev, 1, d);
    write_tensor(out, "w", m.w, 1, d);
    write_tensor(out, "b", {m.b}, 1, 1);
    std::vector<double> frozen(d);
    for (std::size_t j = 0; j < d; ++j)
        frozen[j] = m.frozen[j];
    write_tensor(out, "frozen", frozen, 1, d);
    out << "end\n";
    if (!out)
        throw error(path + ": write failed");
}

void save_model(const std::string& path, const SetNetModel& m) {
    std::ofstream out(path);
    if (!out)
        throw error(path + ": cannot open for writing");
    out << kVersionLine << "\n";
    out << "type setnet\n";
    write_meta(out, m.meta);
    out << "dims " << m.phi0.in << " " << m.phi0.out << " " << m.phi1.out << " "
        << m.head0.out << "\n";
    auto dump = [&](const char* base, const Dense& d) {
        write_tensor(out, (std::string(base) + "_w").c_str(), d.w,
                     static_cast<std::size_t>(d.out), static_cast<std::size_t>(d.in));
        write_tensor(out, (std::string(base) + "_b").c_str(), d.b, 1,
                     static_cast<std::size_t>(d.out));
    };
    dump("phi0", m.phi0);
    dump("phi1", m.phi1);
    dump("head0", m.head0);
    dump("head1", m.head1);
    out << "end\n";
    if (!out)
        throw error(path + ": write failed");
}

void save_model(const std::string& path, const GridNetModel& m) {
    std::ofstream out(path);
    if (!out)
        throw error(path + ": cannot open for writing");
    out << kVersionLine << "\n";
    out << "type gridnet\n";
    write_meta(out, m.meta);
    out << "dims " << m.gw << " " << m.gh << " " << m.l0.out << "\n";
    write_tensor(out, "l0_w", m.l0.w, static_cast<std::size_t>(m.l0.out),
                 static_cast<std::size_t>(m.l0.in));
    write_tensor(out, "l0_b", m.l0.b, 1, static_cast<std::size_t>(m.l0.out));
    write_tensor(out, "l1_w", m.l1.w, static_cast<std::size_t>(m.l1.out),
                 static_cast<std::size_t>(m.l1.in));
    write_tensor(out, "l1_b", m.l1.b, 1, static_cast<std::size_t>(m.l1.out));
    out << "end\n";
    if (!out)
        throw error(path + ": write failed");
}

LogRegModel load_logreg(const std::string& path) {
    ModelReader r(path);
    r.expect_version();
    std::string tag = r.read_type();
    if (tag != "logreg")
        throw error(path + ": model type is '" + tag + "', expected logreg");
    LogRegModel m;
    m.meta = r.read_meta();
    if (!r.next() || r.line.rfind("features ", 0) != 0)
        r.fail("expected 'features <n>'");
    std::size_t d = std::stoul(r.line.substr(9));
    m.feature_names.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        if (!r.next() || r.line.rfind("name ", 0) != 0)
            r.fail("expected 'name <feature>'");
        m.feature_names[i] = r.line.substr(5);
    }
    r.read_tensor("mean", m.mean, 1, d);
    r.read_tensor("stdev", m.stdev, 1, d);
    r.read_tensor("w", m.w, 1, d);
    std::vector<double> b;
    r.read_tensor("b", b, 1, 1);
    m.b = b[0];
    std::vector<double> frozen;
    r.read_tensor("frozen", frozen, 1, d);
    m.frozen.resize(d);
    for (std::size_t j = 0; j < d; ++j)
        m.frozen[j] = frozen[j] != 0.0;
    return m;
}

SetNetModel load_setnet(const std::string& path) {
    ModelReader r(path);
    r.expect_version();
    std::string tag = r.read_type();
    if (tag != "setnet")
        throw error(path + ": model type is '" + tag + "', expected setnet");
    SetNetModel m;
    m.meta = r.read_meta();
    if (!r.next() || r.line.rfind("dims ", 0) != 0)
        r.fail("expected 'dims <in> <phi0> <phi1> <head>'");
    int in = 0, p0 = 0, p1 = 0, hh = 0;
    {
        std::istringstream ss(r.line.substr(5));
        if (!(ss >> in >> p0 >> p1 >> hh) || in != 5 || p0 <= 0 || p1 <= 0 || hh <= 0)
            r.fail("bad dims line");
    }
    m.phi0 = make_dense(in, p0);
    m.phi1 = make_dense(p0, p1);
    m.head0 = make_dense(p1, hh);
    m.head1 = make_dense(hh, 1);
    auto slurp = [&](const char* base, Dense& d) {
        r.read_tensor((std::string(base) + "_w").c_str(), d.w,
                      static_cast<std::size_t>(d.out), static_cast<std::size_t>(d.in));
        r.read_tensor((std::string(base) + "_b").c_str(), d.b, 1,
                      static_cast<std::size_t>(d.out));
    };
    slurp("phi0", m.phi0);
    slurp("phi1", m.phi1);
    slurp("head0", m.head0);
    slurp("head1", m.head1);
    return m;
}

GridNetModel load_gridnet(const std::string& path) {
    ModelReader r(path);
    r.expect_version();
    std::string tag = r.read_type();
    if (tag != "gridnet")
        throw error(path + ": model type is '" + tag + "', expected gridnet");
    GridNetModel m;
    m.meta = r.read_meta();
    if (!r.next() || r.line.rfind("dims ", 0) != 0)
        r.fail("expected 'dims <gw> <gh> <hidden>'");
    int gw = 0, gh = 0, hidden = 0;
    {
        std::istringstream ss(r.line.substr(5));
        if (!(ss >> gw >> gh >> hidden) || gw <= 0 || gh <= 0 || hidden <= 0)
            r.fail("bad dims line");
    }
    m.gw = gw;
    m.gh = gh;
    m.l0 = make_dense(3 * gw * gh, hidden);
    m.l1 = make_dense(hidden, 1);
    r.read_tensor("l0_w", m.l0.w, static_cast<std::size_t>(m.l0.out),
                  static_cast<std::size_t>(m.l0.in));
    r.read_tensor("l0_b", m.l0.b, 1, static_cast<std::size_t>(m.l0.out));
    r.read_tensor("l1_w", m.l1.w, static_cast<std::size_t>(m.l1.out),
                  static_cast<std::size_t>(m.l1.in));
    r.read_tensor("l1_b", m.l1.b, 1, static_cast<std::size_t>(m.l1.out));
    return m;
}

} // namespace geo::learn
