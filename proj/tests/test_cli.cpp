#include "doctest.h"
#include "test_util.hpp"

#include "geo/cache.hpp"
#include "geo/cues.hpp"
#include "geo/eval.hpp"
#include "geo/manifest.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

// These cases drive the installed binary end to end through /bin/sh, so they
// check exit codes and produced files rather than in-process state.

namespace {

struct CliResult {
    int code = -1;
    std::string out, err;
};

CliResult run_cli(const TempDir& dir, const std::string& args, const std::string& env = "") {
    REQUIRE_MESSAGE(!g_cli_binary.empty(), "these cases need --cli-binary=PATH");
    static int counter = 0;
    std::string out_path = dir.file("run_" + std::to_string(counter) + ".out");
    std::string err_path = dir.file("run_" + std::to_string(counter) + ".err");
    ++counter;
    std::string cmd = (env.empty() ? std::string() : env + " ") + "'" + g_cli_binary + "' " +
                      args + " >'" + out_path + "' 2>'" + err_path + "'";
    int raw = std::system(cmd.c_str());
    CliResult r;
    if (raw != -1 && WIFEXITED(raw))
        r.code = WEXITSTATUS(raw);
    r.out = read_file_bytes(out_path);
    r.err = read_file_bytes(err_path);
    return r;
}

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

std::vector<std::string> file_lines(const std::string& path) {
    std::istringstream in(read_file_bytes(path));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        lines.push_back(line);
    return lines;
}

int count_tokens(const std::string& line) {
    std::istringstream in(line);
    std::string tok;
    int n = 0;
    while (in >> tok)
        ++n;
    return n;
}

} // namespace

TEST_CASE("cli: help, missing arguments, and exit code conventions") {
    TempDir dir("cli_codes");

    CHECK(run_cli(dir, "--help").code == 0);
    CHECK(run_cli(dir, "synth --help").code == 0);

    // no subcommand, unknown subcommand, missing required flag: parse errors
    CHECK(run_cli(dir, "").code == 1);
    CHECK(run_cli(dir, "transmogrify").code == 1);
    CHECK(run_cli(dir, "extract").code == 1);
    CHECK(run_cli(dir, "train --manifest m.txt").code == 1);

    // runtime failures (bad inputs) exit 2 and explain on stderr
    auto r = run_cli(dir, "extract --manifest '" + dir.file("absent/manifest.txt") + "'");
    CHECK(r.code == 2);
    CHECK(r.err.find("error: ") == 0);
    CHECK(r.err.find("cannot open") != std::string::npos);

    // malformed seed env is rejected before any subcommand runs
    r = run_cli(dir, "synth --out '" + dir.file("c") + "'", "GEOFORENSICS_SEED=12x");
    CHECK(r.code == 1);
    CHECK(r.err.find("GEOFORENSICS_SEED is not an integer: 12x") != std::string::npos);
}

TEST_CASE("cli: GEOFORENSICS_SEED matches an explicit --seed") {
    TempDir dir("cli_seed");
    std::string a = dir.file("a");
    std::string b = dir.file("b");
    std::string common = " --n-real 2 --n-gen 2 --width 128 --height 96";

    CHECK(run_cli(dir, "synth --out '" + a + "' --seed 123" + common).code == 0);
    CHECK(run_cli(dir, "synth --out '" + b + "'" + common, "GEOFORENSICS_SEED=123").code == 0);

    CHECK(read_file_bytes(a + "/manifest.txt") == read_file_bytes(b + "/manifest.txt"));
    auto entries = geo::load_manifest(a + "/manifest.txt");
    REQUIRE(entries.size() == 4);
    for (const auto& e : entries)
        CHECK(read_file_bytes(geo::join_path(a, e.image_path)) ==
              read_file_bytes(geo::join_path(b, e.image_path)));
}

TEST_CASE("cli: synth/extract/train/predict/split/eval/saliency round trip") {
    TempDir dir("cli_pipe");
    std::string corpus = dir.file("corpus");
    std::string manifest = corpus + "/manifest.txt";

    auto r = run_cli(dir, "synth --out '" + corpus +
                              "' --n-real 6 --n-gen 6 --width 200 --height 150 --seed 5 --jobs 2");
    REQUIRE(r.code == 0);
    CHECK(r.out == "wrote 12 images to " + corpus + "\n");
    REQUIRE(file_exists(manifest));
    CHECK(file_exists(corpus + "/provenance.txt"));

    auto entries = geo::load_manifest(manifest);
    REQUIRE(entries.size() == 12);

    // ---- extract: full cache, then a lines-only cache ----
    std::string cache_path = dir.file("features.csv");
    r = run_cli(dir, "extract --manifest '" + manifest + "' --out '" + cache_path + "' --jobs 2");
    REQUIRE(r.code == 0);
    CHECK(r.out == "extracted 12 rows to " + cache_path + "\n");
    geo::FeatureCache cache = geo::read_cache(cache_path);
    CHECK(cache.columns == geo::cues::schema());
    REQUIRE(cache.ids.size() == 12);
    for (std::size_t i = 0; i < entries.size(); ++i)
        CHECK(cache.ids[i] == entries[i].id);

    std::string lines_path = dir.file("lines_only.csv");
    r = run_cli(dir, "extract --manifest '" + manifest + "' --out '" + lines_path +
                         "' --cue lines");
    REQUIRE(r.code == 0);
    geo::FeatureCache lines_cache = geo::read_cache(lines_path);
    REQUIRE(lines_cache.ids.size() == 12);
    CHECK(lines_cache.columns == geo::cues::schema());
    std::size_t line_count_col = 1, field_present_col = 10, shadow_present_col = 16;
    REQUIRE(lines_cache.columns[line_count_col] == "line_count");
    REQUIRE(lines_cache.columns[field_present_col] == "field_present");
    REQUIRE(lines_cache.columns[shadow_present_col] == "shadow_present");
    for (const auto& row : lines_cache.rows) {
        CHECK(row[line_count_col] > 0.0);
        // families that were not requested stay at their zero defaults
        CHECK(row[field_present_col] == 0.0);
        CHECK(row[shadow_present_col] == 0.0);
    }

    // ---- train one model per learner ----
    std::string lr_model = dir.file("lr_model.txt");
    r = run_cli(dir, "train --manifest '" + manifest + "' --learner lr --features '" +
                         cache_path + "' --out '" + lr_model + "' --epochs 60 --seed 9");
    REQUIRE(r.code == 0);
    CHECK(r.out == "trained lr model -> " + lr_model + "\n");

    // lr without a cache is flag misuse, not a runtime failure
    r = run_cli(dir, "train --manifest '" + manifest + "' --learner lr --out '" +
                         dir.file("x.txt") + "'");
    CHECK(r.code == 1);
    CHECK(r.err.find("train --learner lr needs --features CACHE") != std::string::npos);

    std::string set_model = dir.file("set_model.txt");
    r = run_cli(dir, "train --manifest '" + manifest + "' --learner set --out '" + set_model +
                         "' --epochs 40 --batch 6 --cap 64 --hidden 12 --seed 9");
    REQUIRE(r.code == 0);

    std::string grid_model = dir.file("grid_model.txt");
    r = run_cli(dir, "train --manifest '" + manifest + "' --learner grid --out '" + grid_model +
                         "' --epochs 40 --batch 6 --grid-w 6 --grid-h 6 --hidden 10 --seed 9");
    REQUIRE(r.code == 0);

    // ---- predict with each model ----
    std::string lr_scores = dir.file("scores_lr.csv");
    r = run_cli(dir, "predict --model '" + lr_model + "' --manifest '" + manifest +
                         "' --features '" + cache_path + "' --out '" + lr_scores + "'");
    REQUIRE(r.code == 0);
    CHECK(r.out == "scored 12 images -> " + lr_scores + "\n");

    r = run_cli(dir, "predict --model '" + lr_model + "' --manifest '" + manifest + "' --out '" +
                         dir.file("y.csv") + "'");
    CHECK(r.code == 1);
    CHECK(r.err.find("predict with a logreg model needs --features CACHE") != std::string::npos);

    std::string set_scores = dir.file("scores_set.csv");
    r = run_cli(dir, "predict --model '" + set_model + "' --manifest '" + manifest + "' --out '" +
                         set_scores + "' --cap 64");
    REQUIRE(r.code == 0);

    std::string grid_scores = dir.file("scores_grid.csv");
    r = run_cli(dir, "predict --model '" + grid_model + "' --manifest '" + manifest +
                         "' --out '" + grid_scores + "'");
    REQUIRE(r.code == 0);

    for (const std::string& path : {lr_scores, set_scores, grid_scores}) {
        auto lines = file_lines(path);
        REQUIRE(lines.size() == 13);
        CHECK(lines[0] == "id,score");
        for (std::size_t i = 0; i < entries.size(); ++i) {
            CHECK(lines[i + 1].rfind(entries[i].id + ",", 0) == 0);
            double v = std::strtod(lines[i + 1].c_str() + entries[i].id.size() + 1, nullptr);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }

    // ---- split agrees with the library on the same manifest ----
    std::string splits_path = dir.file("splits.csv");
    r = run_cli(dir, "split --manifest '" + manifest + "' --out '" + splits_path + "'");
    REQUIRE(r.code == 0);
    auto categories = geo::eval::split(entries, 0.1, false);
    auto split_lines = file_lines(splits_path);
    REQUIRE(split_lines.size() == 13);
    CHECK(split_lines[0] == "id,category");
    std::size_t counts[4] = {};
    for (std::size_t i = 0; i < entries.size(); ++i) {
        CHECK(split_lines[i + 1] ==
              entries[i].id + "," + geo::eval::category_name(categories[i]));
        counts[static_cast<int>(categories[i])] += 1;
    }
    std::ostringstream expect;
    expect << "easy " << counts[0] << ", unconfident " << counts[1] << ", misclassified "
           << counts[2] << ", unscored " << counts[3] << "\n";
    CHECK(r.out == expect.str());

    // ---- eval: named score files, then the prequalifier fallback ----
    std::string reports = dir.file("reports");
    r = run_cli(dir, "eval --manifest '" + manifest + "' --out '" + reports + "' --scores lines='" +
                         set_scores + "' --scores field='" + grid_scores + "' --scores shadows='" +
                         lr_scores + "' --svg");
    REQUIRE(r.code == 0);
    {
        char header[160];
        std::snprintf(header, sizeof header, "%-12s %-14s %8s %7s %7s\n", "cue", "category", "auc",
                      "real", "gen");
        CHECK(r.out.rfind(header, 0) == 0);
    }
    CHECK(r.out.find("lines") != std::string::npos);
    CHECK(file_exists(reports + "/summary.csv"));
    CHECK(file_exists(reports + "/summary.txt"));
    CHECK(file_exists(reports + "/agreement.txt"));
    CHECK(file_exists(reports + "/roc_lines_all.csv"));
    CHECK(file_exists(reports + "/roc_all.svg"));
    {
        auto summary = file_lines(reports + "/summary.csv");
        REQUIRE(!summary.empty());
        CHECK(summary[0] == "cue,category,auc,n_real,n_generated");
        bool saw_lines_all = false;
        for (const auto& line : summary)
            if (line.rfind("lines,all,", 0) == 0)
                saw_lines_all = true;
        CHECK(saw_lines_all);
    }

    r = run_cli(dir, "eval --manifest '" + manifest + "' --out '" + dir.file("reports_pq") + "'");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("prequalifier") != std::string::npos);
    CHECK(file_exists(dir.file("reports_pq") + "/summary.csv"));
    // a single cue with a different name cannot form the agreement table
    CHECK(!file_exists(dir.file("reports_pq") + "/agreement.txt"));

    // mismatched score files are runtime failures
    write_text_file(dir.file("alien.csv"), "id,score\nnot_there,0.5\n");
    r = run_cli(dir, "eval --manifest '" + manifest + "' --out '" + dir.file("r2") +
                         "' --scores lines='" + dir.file("alien.csv") + "'");
    CHECK(r.code == 2);
    CHECK(r.err.find("id not_there is not in the manifest") != std::string::npos);

    // ---- saliency against each model family ----
    const std::string& first_id = entries[0].id;
    std::string sal_lr = dir.file("sal_lr.txt");
    r = run_cli(dir, "saliency --model '" + lr_model + "' --manifest '" + manifest + "' --id " +
                         first_id + " --out '" + sal_lr + "'");
    REQUIRE(r.code == 0);
    CHECK(r.out == "wrote saliency for " + first_id + " -> " + sal_lr + "\n");
    {
        auto lines = file_lines(sal_lr);
        REQUIRE(lines.size() == geo::cues::schema().size());
        for (std::size_t j = 0; j < lines.size(); ++j)
            CHECK(lines[j].rfind(geo::cues::schema()[j] + " ", 0) == 0);
    }

    std::string sal_set = dir.file("sal_set.txt");
    r = run_cli(dir, "saliency --model '" + set_model + "' --manifest '" + manifest + "' --id " +
                         first_id + " --out '" + sal_set + "' --cap 64");
    REQUIRE(r.code == 0);
    {
        auto lines = file_lines(sal_set);
        REQUIRE(!lines.empty());
        for (const auto& line : lines)
            CHECK(count_tokens(line) == 5); // x1 y1 x2 y2 weight
    }

    std::string sal_grid = dir.file("sal_grid.txt");
    r = run_cli(dir, "saliency --model '" + grid_model + "' --manifest '" + manifest + "' --id " +
                         first_id + " --out '" + sal_grid + "'");
    REQUIRE(r.code == 0);
    CHECK(file_lines(sal_grid).size() == 36); // the model carries its 6x6 grid

    r = run_cli(dir, "saliency --model '" + set_model + "' --manifest '" + manifest +
                         "' --id nope --out '" + dir.file("z.txt") + "'");
    CHECK(r.code == 2);
    CHECK(r.err.find("nope: not in the manifest") != std::string::npos);

    // ---- every product carries a provenance file naming its inputs ----
    for (const std::string& path : {cache_path, lr_model, lr_scores, splits_path}) {
        std::string prov = read_file_bytes(path + ".provenance.txt");
        CHECK(prov.rfind("geoforensics provenance\n", 0) == 0);
        CHECK(prov.find("input " + manifest + " fnv1a64 ") != std::string::npos);
    }
    CHECK(read_file_bytes(reports + "/provenance.txt").find("subcommand eval") !=
          std::string::npos);

    // ---- reruns are byte-identical apart from provenance ----
    std::string cache_again = dir.file("features_again.csv");
    r = run_cli(dir, "extract --manifest '" + manifest + "' --out '" + cache_again +
                         "' --jobs 3");
    REQUIRE(r.code == 0);
    CHECK(read_file_bytes(cache_path) == read_file_bytes(cache_again));

    std::string lr_again = dir.file("lr_again.txt");
    r = run_cli(dir, "train --manifest '" + manifest + "' --learner lr --features '" +
                         cache_path + "' --out '" + lr_again + "' --epochs 60 --seed 9");
    REQUIRE(r.code == 0);
    CHECK(read_file_bytes(lr_model) == read_file_bytes(lr_again));

    std::string scores_again = dir.file("scores_again.csv");
    r = run_cli(dir, "predict --model '" + set_model + "' --manifest '" + manifest + "' --out '" +
                         scores_again + "' --cap 64");
    REQUIRE(r.code == 0);
    CHECK(read_file_bytes(set_scores) == read_file_bytes(scores_again));
}
