#include "doctest.h"

#include "geo/common.hpp"
#include "geo/lsd.hpp"
#include "geo/parallel.hpp"
#include "geo/synth.hpp"
#include "geo/vpfield.hpp"

#include <atomic>
#include <cstddef>
#include <vector>

using namespace geo;

TEST_CASE("parallel_for: visits every index exactly once") {
    for (int jobs : {-1, 0, 1, 2, 4, 13}) {
        const std::size_t n = 1000;
        std::vector<int> hits(n, 0);
        parallel_for(n, jobs, [&](std::size_t i) { hits[i] += 1; });
        for (std::size_t i = 0; i < n; ++i)
            CHECK(hits[i] == 1);
    }

    std::atomic<int> calls{0};
    parallel_for(0, 4, [&](std::size_t) { calls.fetch_add(1); });
    CHECK(calls.load() == 0);

    CHECK(hardware_jobs() >= 1);
}

TEST_CASE("compute_gradient: parallel rows match the serial field bitwise") {
    synth::SceneSpec spec;
    spec.seed = 21;
    GrayImage img = synth::render(spec).image;

    lsd::GradientField serial = lsd::compute_gradient(img, 2.0 / 255.0, 1);
    for (int jobs : {2, 3, 8}) {
        lsd::GradientField par = lsd::compute_gradient(img, 2.0 / 255.0, jobs);
        CHECK(par.width == serial.width);
        CHECK(par.height == serial.height);
        CHECK(par.magnitude == serial.magnitude);
        CHECK(par.angle == serial.angle);
        CHECK(par.valid == serial.valid);
    }
}

TEST_CASE("rasterize_bars: parallel rows match the serial image bitwise") {
    std::vector<lsd::LineSegment> bars;
    Rng rng(33);
    for (int i = 0; i < 25; ++i)
        bars.push_back({rng.uniform(0, 200), rng.uniform(0, 150), rng.uniform(0, 200),
                        rng.uniform(0, 150), 3.0, 0.0});

    GrayImage serial(200, 150, 1.0);
    synth::rasterize_bars(serial, bars, 3.0, 0.1, 1);
    for (int jobs : {2, 5}) {
        GrayImage par(200, 150, 1.0);
        synth::rasterize_bars(par, bars, 3.0, 0.1, jobs);
        CHECK(par.pixels == serial.pixels);
    }
}

TEST_CASE("perspective_field: parallel cells match the serial field bitwise") {
    vp::CameraHypothesis cam{500.0, 0.2, -0.05};
    vp::PerspectiveField serial = vp::perspective_field(cam, 640, 480, 12, 9, 1);
    for (int jobs : {2, 4}) {
        vp::PerspectiveField par = vp::perspective_field(cam, 640, 480, 12, 9, jobs);
        REQUIRE(par.cells.size() == serial.cells.size());
        for (std::size_t i = 0; i < serial.cells.size(); ++i) {
            CHECK(par.cells[i].ux == serial.cells[i].ux);
            CHECK(par.cells[i].uy == serial.cells[i].uy);
            CHECK(par.cells[i].latitude == serial.cells[i].latitude);
        }
    }
}

TEST_CASE("render: full scene generation is jobs-invariant") {
    synth::SceneSpec spec;
    spec.seed = 64;
    spec.eps_vp = 0.1;
    synth::Scene serial = synth::render(spec, 1);
    synth::Scene par = synth::render(spec, hardware_jobs());
    CHECK(par.image.pixels == serial.image.pixels);
    REQUIRE(par.mask_pairs.size() == serial.mask_pairs.size());
    for (std::size_t i = 0; i < serial.mask_pairs.size(); ++i) {
        CHECK(par.mask_pairs[i].first.bits == serial.mask_pairs[i].first.bits);
        CHECK(par.mask_pairs[i].second.bits == serial.mask_pairs[i].second.bits);
    }
}
