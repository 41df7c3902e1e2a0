#include "doctest.h"
#include "test_util.hpp"

#include "geo/cache.hpp"
#include "geo/common.hpp"
#include "geo/image.hpp"
#include "geo/manifest.hpp"

#include <cmath>
#include <cstring>
#include <limits>

using namespace geo;

TEST_CASE("format_double round-trips arbitrary doubles bit-exactly") {
    Rng rng(123);
    for (int i = 0; i < 2000; ++i) {
        // mix magnitudes from denormal-ish to huge, both signs
        double mant = rng.uniform(-1.0, 1.0);
        int expo = static_cast<int>(rng.below(613)) - 306;
        double v = mant * std::pow(10.0, expo);
        std::string s = format_double(v);
        double back = std::strtod(s.c_str(), nullptr);
        CHECK(std::memcmp(&back, &v, sizeof v) == 0);
    }
    CHECK(format_double(0.0) == "0");
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(0.5) == "0.5");
    // 0.1 is not representable; the shortest round-trip text is still "0.1"
    CHECK(format_double(0.1) == "0.1");
    double third = 1.0 / 3.0;
    double back = std::strtod(format_double(third).c_str(), nullptr);
    CHECK(back == third);
}

TEST_CASE("gray image PGM round trip preserves every byte") {
    TempDir dir("pgm");
    GrayImage img(33, 17);
    Rng rng(7);
    for (auto& p : img.pixels)
        p = static_cast<double>(rng.below(256)) / 255.0;
    std::string path = dir.file("a.pgm");
    write_gray(path, img);
    GrayImage back = load_gray(path);
    REQUIRE(back.width == img.width);
    REQUIRE(back.height == img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        CHECK(back.pixels[i] == img.pixels[i]);
    // second write is byte-identical
    std::string again = dir.file("b.pgm");
    write_gray(again, back);
    CHECK(read_file_bytes(path) == read_file_bytes(again));
}

TEST_CASE("mask PGM round trip and count") {
    TempDir dir("mask");
    BinaryMask m(9, 5);
    m.at(0, 0) = 1;
    m.at(8, 4) = 1;
    m.at(3, 2) = 1;
    CHECK(m.count() == 3);
    std::string path = dir.file("m.pgm");
    write_mask(path, m);
    BinaryMask back = load_mask(path);
    REQUIRE(back.width == 9);
    REQUIRE(back.height == 5);
    CHECK(back.bits == m.bits);
}

TEST_CASE("PGM loader rejects malformed files with the path named") {
    TempDir dir("badpgm");

    std::string p1 = dir.file("notpgm.pgm");
    write_text_file(p1, "P6\n2 2\n255\nxxxxxxxxxxxx");
    CHECK_THROWS_WITH_AS(load_gray(p1), doctest::Contains("not a binary PGM"), error);

    std::string p2 = dir.file("trunc.pgm");
    write_text_file(p2, "P5\n4 4\n255\nabc");
    CHECK_THROWS_WITH_AS(load_gray(p2), doctest::Contains("truncated pixel data"), error);

    std::string p3 = dir.file("maxval.pgm");
    write_text_file(p3, "P5\n1 1\n65535\n\0\0");
    CHECK_THROWS_WITH_AS(load_gray(p3), doctest::Contains("unsupported maxval"), error);

    std::string p4 = dir.file("dims.pgm");
    write_text_file(p4, "P5\n0 3\n255\n");
    CHECK_THROWS_WITH_AS(load_gray(p4), doctest::Contains("zero or negative dimensions"), error);

    std::string p5 = dir.file("hdr.pgm");
    write_text_file(p5, "P5\n2");
    CHECK_THROWS_WITH_AS(load_gray(p5), doctest::Contains("truncated header"), error);

    CHECK_THROWS_WITH_AS(load_gray(dir.file("missing.pgm")),
                         doctest::Contains("cannot open"), error);
}

TEST_CASE("PGM header comments are skipped") {
    TempDir dir("pgmcomment");
    std::string p = dir.file("c.pgm");
    std::string data = "P5\n# a comment line\n2 1\n# another\n255\nAB";
    write_text_file(p, data);
    GrayImage img = load_gray(p);
    CHECK(img.width == 2);
    CHECK(img.height == 1);
    CHECK(img.at(0, 0) == doctest::Approx(double('A') / 255.0));
}

TEST_CASE("manifest round trip keeps ids, labels, scores and mask pairs") {
    TempDir dir("manifest");
    std::vector<ManifestEntry> entries(3);
    entries[0].id = "img00000";
    entries[0].image_path = "images/img00000.pgm";
    entries[0].label = 1;
    entries[0].prequalifier_score = 0.8125;
    entries[1].id = "img00001";
    entries[1].image_path = "images/img00001.pgm";
    entries[1].label = 0;
    entries[1].mask_pairs = {{"masks/a_obj.pgm", "masks/a_sh.pgm"},
                             {"masks/b_obj.pgm", "masks/b_sh.pgm"}};
    entries[2].id = "img00002";
    entries[2].image_path = "images/img00002.pgm";
    entries[2].label = 0;
    entries[2].prequalifier_score = 1.0 / 3.0; // needs full precision to survive

    std::string path = dir.file("manifest.txt");
    write_manifest(path, entries);
    auto back = load_manifest(path);
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].id == entries[i].id);
        CHECK(back[i].image_path == entries[i].image_path);
        CHECK(back[i].label == entries[i].label);
        CHECK(back[i].mask_pairs == entries[i].mask_pairs);
        REQUIRE(back[i].prequalifier_score.has_value() ==
                entries[i].prequalifier_score.has_value());
        if (entries[i].prequalifier_score)
            CHECK(*back[i].prequalifier_score == *entries[i].prequalifier_score);
    }
    // rewrite of the parsed entries is byte-identical
    std::string path2 = dir.file("manifest2.txt");
    write_manifest(path2, back);
    CHECK(read_file_bytes(path) == read_file_bytes(path2));
}

TEST_CASE("manifest parse errors name the line number") {
    TempDir dir("manifesterr");
    auto expect_error = [&](const std::string& body, const std::string& what,
                            const std::string& lineno) {
        std::string p = dir.file("m.txt");
        write_text_file(p, body);
        CHECK_THROWS_WITH_AS(load_manifest(p), doctest::Contains(what.c_str()), error);
        try {
            load_manifest(p);
        } catch (const error& e) {
            CHECK(std::string(e.what()).find(":" + lineno + ":") != std::string::npos);
        }
    };

    expect_error("id=a image=x.pgm\n", "missing label", "1");
    expect_error("# comment\n\nimage=x.pgm label=real\n", "missing id", "3");
    expect_error("id=a label=real\n", "missing image", "1");
    expect_error("id=a image=x label=fake\n", "label must be real or generated", "1");
    expect_error("id=a image=x label=real score=1.5\n", "score outside [0,1]", "1");
    expect_error("id=a image=x label=real score=abc\n", "bad score", "1");
    expect_error("id=a image=x label=real color=red\n", "unknown key 'color'", "1");
    expect_error("id=a image=x label=real\nid=a image=y label=generated\n",
                 "duplicate id 'a'", "2");
    expect_error("id=a image=x label=real garbage\n", "field without '='", "1");
    expect_error("id=a image=x label=real mask_pair=only_obj\n",
                 "mask_pair needs object:shadow", "1");
    CHECK_THROWS_WITH_AS(load_manifest(dir.file("nope.txt")),
                         doctest::Contains("cannot open"), error);
}

TEST_CASE("manifest skips blanks and comments") {
    TempDir dir("manifestskip");
    std::string p = dir.file("m.txt");
    write_text_file(p, "# header comment\n\nid=a image=x.pgm label=real\n\n");
    auto entries = load_manifest(p);
    REQUIRE(entries.size() == 1);
    CHECK(entries[0].id == "a");
    CHECK(entries[0].label == 1);
    CHECK(!entries[0].prequalifier_score.has_value());
}

TEST_CASE("path helpers resolve manifest-relative files") {
    CHECK(parent_dir("a/b/c.txt") == "a/b");
    CHECK(parent_dir("c.txt") == "");
    CHECK(join_path("", "x.pgm") == "x.pgm");
    CHECK(join_path("dir", "x.pgm") == "dir/x.pgm");
    CHECK(join_path("dir", "/abs/x.pgm") == "/abs/x.pgm");
}

TEST_CASE("feature cache round trip is bit-exact") {
    TempDir dir("cache");
    FeatureCache cache;
    cache.columns = {"alpha", "beta", "gamma"};
    Rng rng(99);
    for (int i = 0; i < 50; ++i) {
        cache.ids.push_back("img" + std::to_string(i));
        std::vector<double> row(3);
        for (auto& v : row)
            v = rng.uniform(-1e6, 1e6) * std::pow(10.0, static_cast<int>(rng.below(9)) - 4);
        cache.rows.push_back(row);
    }
    cache.rows[7][1] = 0.0;
    cache.rows[9][2] = -1.0 / 3.0;

    std::string path = dir.file("features.csv");
    write_cache(path, cache);
    FeatureCache back = read_cache(path);
    CHECK(back.schema_version == 1);
    CHECK(back.columns == cache.columns);
    CHECK(back.ids == cache.ids);
    REQUIRE(back.rows.size() == cache.rows.size());
    for (std::size_t i = 0; i < cache.rows.size(); ++i)
        for (std::size_t j = 0; j < cache.rows[i].size(); ++j)
            CHECK(back.rows[i][j] == cache.rows[i][j]);

    std::string path2 = dir.file("features2.csv");
    write_cache(path2, back);
    CHECK(read_file_bytes(path) == read_file_bytes(path2));
}

TEST_CASE("feature cache errors carry path and line") {
    TempDir dir("cacheerr");

    std::string p1 = dir.file("v9.csv");
    write_text_file(p1, "# geoforensics-cache schema 9\nid,a\nx,1\n");
    CHECK_THROWS_WITH_AS(read_cache(p1), doctest::Contains("unknown schema version 9"), error);

    std::string p2 = dir.file("nohdr.csv");
    write_text_file(p2, "foo,a\nx,1\n");
    CHECK_THROWS_WITH_AS(read_cache(p2), doctest::Contains("header must start with id"), error);

    std::string p3 = dir.file("short.csv");
    write_text_file(p3, "id,a,b\nx,1\n");
    try {
        read_cache(p3);
        CHECK(false);
    } catch (const error& e) {
        CHECK(std::string(e.what()).find(":2: expected 3 columns, got 2") != std::string::npos);
    }

    std::string p4 = dir.file("nan.csv");
    write_text_file(p4, "id,a\nx,12x\n");
    CHECK_THROWS_WITH_AS(read_cache(p4), doctest::Contains("bad number '12x'"), error);

    std::string p5 = dir.file("empty.csv");
    write_text_file(p5, "");
    CHECK_THROWS_WITH_AS(read_cache(p5), doctest::Contains("empty cache file"), error);

    FeatureCache bad;
    bad.columns = {"a"};
    bad.ids = {"x"};
    bad.rows = {{1.0, 2.0}};
    CHECK_THROWS_WITH_AS(write_cache(dir.file("bad.csv"), bad),
                         doctest::Contains("row 0 has 2 values, expected 1"), error);
}

TEST_CASE("rng draws are pinned across runs") {
    // mt19937_64 output is standardized; these values anchor every seeded
    // pipeline stage, so a change here would silently break reproducibility.
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i)
        CHECK(a.next() == b.next());
    Rng c(1);
    double first = c.uniform();
    CHECK(first >= 0.0);
    CHECK(first < 1.0);
    Rng d(1);
    CHECK(d.uniform() == first);

    std::vector<int> v1{1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<int> v2 = v1;
    Rng e(7), f(7);
    e.shuffle(v1);
    f.shuffle(v2);
    CHECK(v1 == v2);
}

TEST_CASE("fnv1a64 matches reference digests") {
    // reference values computed from the published FNV-1a parameters
    CHECK(fnv1a64("", 0) == 14695981039346656037ull);
    CHECK(fnv1a64("a", 1) == 12638187200555641996ull);
    CHECK(fnv1a64("abc", 3) == 16654208175385433931ull);
}
