#include "doctest.h"
#include "test_util.hpp"

#include "geo/common.hpp"
#include "geo/cues.hpp"
#include "geo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace geo;
using lsd::LineSegment;

namespace {

const double kPi = 3.14159265358979323846;

std::size_t idx(const std::string& name) {
    const auto& names = cues::schema();
    auto it = std::find(names.begin(), names.end(), name);
    REQUIRE(it != names.end());
    return static_cast<std::size_t>(it - names.begin());
}

LineSegment seg_at_angle(double ox, double oy, double deg, double len) {
    double r = deg * kPi / 180.0;
    LineSegment s;
    s.x1 = ox;
    s.y1 = oy;
    s.x2 = ox + len * std::cos(r);
    s.y2 = oy + len * std::sin(r);
    return s;
}

double axial_gap(double a, double b) {
    double d = std::fmod(std::fabs(a - b), kPi);
    return std::min(d, kPi - d);
}

double value_of(const cues::Fragment& f, const std::string& name) {
    for (const auto& [n, v] : f.values)
        if (n == name)
            return v;
    FAIL("fragment lacks ", name);
    return 0;
}

} // namespace

TEST_CASE("schema is the fixed 22-column feature list") {
    const auto& names = cues::schema();
    CHECK(names.size() == 22);
    CHECK(names.front() == "line_present");
    CHECK(names.back() == "shadow_interval_width");
    std::set<std::string> uniq(names.begin(), names.end());
    CHECK(uniq.size() == names.size());
    // presence flags exist for each cue family
    idx("vp_present");
    idx("field_present");
    idx("shadow_present");
}

TEST_CASE("line_stats basic aggregates") {
    auto empty = cues::line_stats({});
    CHECK(empty.values.size() == 1);
    CHECK(value_of(empty, "line_present") == 0.0);

    std::vector<LineSegment> segs{seg_at_angle(0, 0, 0, 10), seg_at_angle(5, 5, 0, 20)};
    auto f = cues::line_stats(segs);
    CHECK(value_of(f, "line_present") == 1.0);
    CHECK(value_of(f, "line_count") == 2.0);
    CHECK(value_of(f, "line_len_mean") == doctest::Approx(15.0));
    CHECK(value_of(f, "line_len_max") == doctest::Approx(20.0));
}

TEST_CASE("orientation mean uses the axial (doubled-angle) circle") {
    std::vector<LineSegment> a{seg_at_angle(0, 0, 10, 30), seg_at_angle(3, 7, 20, 30)};
    double mean_a = value_of(cues::line_stats(a), "line_orient_mean");
    CHECK(axial_gap(mean_a, 15.0 * kPi / 180.0) <= 1e-9);

    // wraparound: 179 and 1 degree average to the horizontal axis, not 90
    std::vector<LineSegment> b{seg_at_angle(0, 0, 179, 30), seg_at_angle(3, 7, 1, 30)};
    double mean_b = value_of(cues::line_stats(b), "line_orient_mean");
    CHECK(axial_gap(mean_b, 0.0) <= 1e-9);
    CHECK(mean_b >= 0.0);
    CHECK(mean_b < kPi);
}

TEST_CASE("orientation concentration spans [0,1]") {
    std::vector<LineSegment> perp{seg_at_angle(0, 0, 0, 25), seg_at_angle(2, 2, 90, 25)};
    CHECK(value_of(cues::line_stats(perp), "line_orient_concentration") ==
          doctest::Approx(0.0).epsilon(1e-12));

    std::vector<LineSegment> same{seg_at_angle(0, 0, 40, 25), seg_at_angle(9, 1, 40, 30),
                                  seg_at_angle(4, 6, 40, 12)};
    CHECK(value_of(cues::line_stats(same), "line_orient_concentration") ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("line_stats is bit-invariant under input permutation") {
    Rng rng(321);
    std::vector<LineSegment> segs;
    for (int i = 0; i < 25; ++i)
        segs.push_back(seg_at_angle(rng.uniform(0, 300), rng.uniform(0, 200),
                                    rng.uniform(0, 180), rng.uniform(5, 80)));
    auto ref = cues::line_stats(segs);
    for (int trial = 0; trial < 5; ++trial) {
        rng.shuffle(segs);
        auto got = cues::line_stats(segs);
        REQUIRE(got.values.size() == ref.values.size());
        for (std::size_t i = 0; i < ref.values.size(); ++i) {
            CHECK(got.values[i].first == ref.values[i].first);
            CHECK(got.values[i].second == ref.values[i].second); // exact
        }
    }
}

TEST_CASE("vp_stats copies the consistency block when VPs exist") {
    vp::VpConsistency c;
    c.median_residual_deg = 1.25;
    c.inlier_fraction = 0.75;
    c.n_clusters = 2;
    auto f = cues::vp_stats(c, true);
    CHECK(value_of(f, "vp_present") == 1.0);
    CHECK(value_of(f, "vp_count") == 2.0);
    CHECK(value_of(f, "vp_inlier_fraction") == 0.75);
    CHECK(value_of(f, "vp_median_residual") == 1.25);

    auto off = cues::vp_stats(c, false);
    CHECK(off.values.size() == 1);
    CHECK(value_of(off, "vp_present") == 0.0);
}

TEST_CASE("field_stats on a uniform field has zero gravity change") {
    vp::CameraHypothesis cam{400.0, 0.0, 0.0};
    auto field = vp::perspective_field(cam, 320, 240, 8, 8);
    auto f = cues::field_stats(field);
    CHECK(value_of(f, "field_present") == 1.0);
    CHECK(value_of(f, "grav_change") == 0.0); // identical cells, exactly zero
    CHECK(value_of(f, "grav_x_mean") == 0.0);
    CHECK(value_of(f, "grav_y_mean") == -1.0);

    auto none = cues::field_stats(vp::PerspectiveField{});
    CHECK(none.values.size() == 1);
    CHECK(value_of(none, "field_present") == 0.0);
}

TEST_CASE("field_stats latitude mean and std on a hand-built grid") {
    vp::PerspectiveField field;
    field.gw = 2;
    field.gh = 1;
    field.cells.resize(2);
    field.cells[0].latitude = 0.1;
    field.cells[1].latitude = 0.3;
    auto f = cues::field_stats(field);
    CHECK(value_of(f, "lat_mean") == doctest::Approx(0.2));
    CHECK(value_of(f, "lat_std") == doctest::Approx(0.1));
}

TEST_CASE("shadow_stats respects the missing-cue convention") {
    shadow::ShadowVerdict none;
    auto f0 = cues::shadow_stats(none);
    CHECK(f0.values.size() == 1);
    CHECK(value_of(f0, "shadow_present") == 0.0);

    shadow::ShadowVerdict v;
    v.n_pairs = 3;
    v.feasible = true;
    v.interval = shadow::ArcInterval{0.5, 0.6};
    v.circ_variance = 0.01;
    v.length_dispersion = 0.2;
    auto f = cues::shadow_stats(v);
    CHECK(value_of(f, "shadow_present") == 1.0);
    CHECK(value_of(f, "shadow_n_pairs") == 3.0);
    CHECK(value_of(f, "shadow_feasible") == 1.0);
    CHECK(value_of(f, "shadow_circ_variance") == 0.01);
    CHECK(value_of(f, "shadow_length_dispersion") == 0.2);
    CHECK(value_of(f, "shadow_interval_width") == 0.6);

    v.feasible = false;
    v.interval.reset();
    CHECK(value_of(cues::shadow_stats(v), "shadow_interval_width") == 0.0);
}

TEST_CASE("assemble places fragments on the schema and rejects bad names") {
    cues::Fragment a;
    a.values = {{"line_present", 1.0}, {"line_count", 7.0}};
    cues::Fragment b;
    b.values = {{"shadow_present", 1.0}};
    auto v = cues::assemble({a, b});
    REQUIRE(v.size() == cues::schema().size());
    CHECK(v[idx("line_present")] == 1.0);
    CHECK(v[idx("line_count")] == 7.0);
    CHECK(v[idx("shadow_present")] == 1.0);
    CHECK(v[idx("vp_present")] == 0.0);
    CHECK(v[idx("lat_mean")] == 0.0);

    cues::Fragment bad;
    bad.values = {{"no_such_feature", 1.0}};
    CHECK_THROWS_WITH_AS(cues::assemble({bad}),
                         doctest::Contains("'no_such_feature' is not in the schema"), error);

    cues::Fragment dup;
    dup.values = {{"line_count", 1.0}};
    CHECK_THROWS_WITH_AS(cues::assemble({a, dup}), doctest::Contains("'line_count' set twice"),
                         error);
}

TEST_CASE("extract_one on a blank image produces only fallback features") {
    GrayImage blank(64, 64, 1.0);
    auto r = cues::extract_one(blank, {});
    REQUIRE(r.features.size() == cues::schema().size());
    CHECK(r.features[idx("line_present")] == 0.0);
    CHECK(r.features[idx("line_count")] == 0.0);
    CHECK(r.features[idx("vp_present")] == 0.0);
    CHECK(r.features[idx("shadow_present")] == 0.0);
    // the perspective field exists even without segments (fallback camera)
    CHECK(r.features[idx("field_present")] == 1.0);
    CHECK(r.features[idx("grav_change")] == 0.0);
    CHECK(r.segments.empty());
    CHECK(r.vps.empty());
}

TEST_CASE("extract_one rejects masks of the wrong size") {
    GrayImage img(64, 64, 1.0);
    BinaryMask obj(32, 32), sh(32, 32);
    obj.at(1, 1) = 1;
    sh.at(2, 2) = 1;
    std::vector<std::pair<BinaryMask, BinaryMask>> pairs;
    pairs.emplace_back(obj, sh);
    CHECK_THROWS_WITH_AS(cues::extract_one(img, pairs),
                         doctest::Contains("mask dimensions do not match"), error);
}

TEST_CASE("extract_one gates cue families by options") {
    synth::SceneSpec spec;
    spec.seed = 91;
    auto scene = synth::render(spec);

    cues::ExtractOptions lines_only;
    lines_only.fields = false;
    lines_only.shadows = false;
    auto r = cues::extract_one(scene.image, scene.mask_pairs, lines_only);
    CHECK(r.features[idx("line_present")] == 1.0);
    CHECK(r.features[idx("vp_present")] == 0.0);
    CHECK(r.features[idx("field_present")] == 0.0);
    CHECK(r.features[idx("shadow_present")] == 0.0);
    CHECK(r.pairs.empty());
}

TEST_CASE("extract_one full pipeline on a clean synthetic scene") {
    synth::SceneSpec spec;
    spec.seed = 4;
    auto scene = synth::render(spec);
    auto r = cues::extract_one(scene.image, scene.mask_pairs);

    CHECK(r.features[idx("line_present")] == 1.0);
    CHECK(r.features[idx("line_count")] == static_cast<double>(r.segments.size()));
    CHECK(r.features[idx("vp_present")] == 1.0);
    CHECK(r.features[idx("field_present")] == 1.0);
    CHECK(r.features[idx("shadow_present")] == 1.0);
    CHECK(r.features[idx("shadow_n_pairs")] == static_cast<double>(scene.mask_pairs.size()));
    // clean scene: every shadow points the same way, so a light exists
    CHECK(r.features[idx("shadow_feasible")] == 1.0);
    CHECK(r.features[idx("shadow_circ_variance")] <= 0.05);
    // most detected segments should agree with the recovered vanishing points
    CHECK(r.features[idx("vp_inlier_fraction")] >= 0.6);
}
