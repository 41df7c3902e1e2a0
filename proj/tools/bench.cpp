// Times the parallel kernels against their serial reference and checks
// that both produce identical bytes. Usage: bench [jobs] [reps]

#include "geo/lsd.hpp"
#include "geo/parallel.hpp"
#include "geo/synth.hpp"
#include "geo/vpfield.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <iostream>

namespace {

using clock_type = std::chrono::steady_clock;

template <typename F>
double time_best_ms(int reps, F&& fn) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        auto t0 = clock_type::now();
        fn();
        auto t1 = clock_type::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

bool same(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

} // namespace

int main(int argc, char** argv) {
    int jobs = argc > 1 ? std::atoi(argv[1]) : geo::hardware_jobs();
    int reps = argc > 2 ? std::atoi(argv[2]) : 5;
    if (jobs < 1)
        jobs = 1;

    std::printf("comparing serial vs %d-thread kernels, best of %d runs\n\n", jobs, reps);
    std::printf("%-18s %12s %12s %9s  %s\n", "kernel", "serial ms", "parallel ms", "speedup",
                "bitwise");

    bool all_equal = true;
    auto report = [&](const char* name, double se, double pa, bool eq) {
        std::printf("%-18s %12.3f %12.3f %8.2fx  %s\n", name, se, pa, se / pa,
                    eq ? "equal" : "DIFFER");
        all_equal = all_equal && eq;
    };

    {
        geo::synth::SceneSpec spec;
        spec.width = 1280;
        spec.height = 960;
        spec.n_lines = 60;
        spec.seed = 7;
        geo::synth::Scene scene = geo::synth::render(spec, 1);

        geo::GrayImage serial_img(spec.width, spec.height, 1.0);
        geo::GrayImage parallel_img(spec.width, spec.height, 1.0);
        double se = time_best_ms(reps, [&] {
            std::fill(serial_img.pixels.begin(), serial_img.pixels.end(), 1.0);
            geo::synth::rasterize_bars(serial_img, scene.truth.segments, spec.bar_width,
                                       spec.bar_value, 1);
        });
        double pa = time_best_ms(reps, [&] {
            std::fill(parallel_img.pixels.begin(), parallel_img.pixels.end(), 1.0);
            geo::synth::rasterize_bars(parallel_img, scene.truth.segments, spec.bar_width,
                                       spec.bar_value, jobs);
        });
        report("rasterize_bars", se, pa, same(serial_img.pixels, parallel_img.pixels));

        geo::lsd::GradientField gs, gp;
        double rho = 2.0 / 255.0;
        se = time_best_ms(reps, [&] { gs = geo::lsd::compute_gradient(serial_img, rho, 1); });
        pa = time_best_ms(reps, [&] { gp = geo::lsd::compute_gradient(serial_img, rho, jobs); });
        report("compute_gradient", se, pa,
               same(gs.magnitude, gp.magnitude) && same(gs.angle, gp.angle) &&
                   gs.valid == gp.valid);
    }

    {
        geo::vp::CameraHypothesis cam{380.0, 0.18, 0.04};
        geo::vp::PerspectiveField fs, fp;
        double se = time_best_ms(reps, [&] { fs = geo::vp::perspective_field(cam, 1280, 960, 96, 96, 1); });
        double pa = time_best_ms(reps, [&] { fp = geo::vp::perspective_field(cam, 1280, 960, 96, 96, jobs); });
        bool eq = fs.gw == fp.gw && fs.gh == fp.gh && fs.cells.size() == fp.cells.size();
        if (eq)
            for (std::size_t i = 0; i < fs.cells.size(); ++i)
                eq = eq && fs.cells[i].ux == fp.cells[i].ux && fs.cells[i].uy == fp.cells[i].uy &&
                     fs.cells[i].latitude == fp.cells[i].latitude;
        report("perspective_field", se, pa, eq);
    }

    if (!all_equal) {
        std::fprintf(stderr, "kernel outputs differ between serial and parallel paths\n");
        return 1;
    }
    return 0;
}
