#include <doctest.h>

#include <cmath>
#include <regex>

#include "tsqa/datagen.hpp"
#include "tsqa/expansion.hpp"
#include "tsqa/rng.hpp"

using namespace tsqa;
using namespace tsqa::expansion;

TEST_CASE("normalize: constant series hits the zero-variance guard") {
    NormalizedSeries ns = normalize({5, 5, 5, 5});
    CHECK(ns.offset == -5.0);
    CHECK(ns.scaling == 1.0);
    CHECK(ns.values == std::vector<double>{0, 0, 0, 0});
    CHECK(ns.stats.length == 4);
    CHECK(ns.stats.max == 5.0);
    CHECK(ns.stats.min == 5.0);
}

TEST_CASE("normalize: [1,2,3] against hand-computed population std") {
    NormalizedSeries ns = normalize({1, 2, 3});
    const double sd = std::sqrt(2.0 / 3.0);
    CHECK(ns.offset == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(ns.scaling == doctest::Approx(1.0 / sd).epsilon(1e-12));
    CHECK(ns.values[0] == doctest::Approx(-1.0 / sd).epsilon(1e-12));
    CHECK(ns.values[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(ns.values[2] == doctest::Approx(1.0 / sd).epsilon(1e-12));
}

TEST_CASE("normalize then denormalize is the identity") {
    Rng rng(5);
    std::vector<double> series;
    for (int i = 0; i < 300; ++i) series.push_back(rng.uniform(-50.0, 50.0));
    NormalizedSeries ns = normalize(series);
    std::vector<double> back = denormalize(ns);
    for (size_t i = 0; i < series.size(); ++i) CHECK(std::abs(back[i] - series[i]) < 1e-6);
}

TEST_CASE("normalize rejects empty and non-finite input") {
    CHECK_THROWS(normalize({}));
    CHECK_THROWS(normalize({1.0, std::nan(""), 2.0}));
    CHECK_THROWS(normalize({1.0, INFINITY}));
}

TEST_CASE("stats_prompt golden strings") {
    CHECK(stats_prompt(normalize({5, 5, 5, 5})) ==
          "[offset=-5.000|scaling=1.000|length=4|max=5.000|min=5.000|left=5.000|right=5.000]");

    NormalizedSeries ns = normalize({0, 10});
    const std::string p = stats_prompt(ns);
    CHECK(p.find("length=2") != std::string::npos);
    CHECK(p.find("max=10.000") != std::string::npos);
    CHECK(p.find("min=0.000") != std::string::npos);
    CHECK(p.find("left=0.000") != std::string::npos);
    CHECK(p.find("right=10.000") != std::string::npos);
}

TEST_CASE("stats_prompt parses back under the format regex") {
    Rng rng(9);
    std::vector<double> series;
    for (int i = 0; i < 64; ++i) series.push_back(rng.gaussian(3.0, 2.0));
    const std::string p = stats_prompt(normalize(series));
    std::regex re(R"(\[offset=(-?\d+\.\d{3})\|scaling=(-?\d+\.\d{3})\|length=(\d+)\|max=(-?\d+\.\d{3})\|min=(-?\d+\.\d{3})\|left=(-?\d+\.\d{3})\|right=(-?\d+\.\d{3})\])");
    std::smatch m;
    REQUIRE(std::regex_match(p, m, re));
    CHECK(std::stoi(m[3]) == 64);
}

TEST_CASE("patchify shapes and padding") {
    NormalizedSeries ns;
    ns.values.resize(256, 0.0);
    CHECK(patchify(ns, 8).rows == 32);

    NormalizedSeries small;
    small.values = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9.5};
    Tensor p = patchify(small, 8);
    REQUIRE(p.rows == 2);
    REQUIRE(p.cols == 8);
    // pad value repeats the final element
    for (int k = 2; k < 8; ++k) CHECK(p.at(1, k) == 9.5);
    // concatenating rows reproduces the padded series
    std::vector<double> flat;
    for (int j = 0; j < p.rows; ++j)
        for (int k = 0; k < p.cols; ++k) flat.push_back(p.at(j, k));
    for (size_t i = 0; i < small.values.size(); ++i) CHECK(flat[i] == small.values[i]);

    NormalizedSeries empty;
    CHECK_THROWS(patchify(empty, 8));
    CHECK_THROWS(patchify(small, 0));
}

TEST_CASE("rasterize: constant series draws the center row") {
    NormalizedSeries ns;
    ns.values.resize(32, 0.7);
    Tensor img = rasterize(ns, 8, 16);
    REQUIRE(img.rows == 16);
    REQUIRE(img.cols == 4 * 16);
    const int center = (16 - 1) / 2;
    for (int c = 0; c < img.cols; ++c) CHECK(img.at(center, c) == 1.0);
    double total = 0.0;
    for (double v : img.data) total += v;
    CHECK(total == img.cols);  // nothing outside the center row
}

TEST_CASE("rasterize: increasing line rises from bottom-left to top-right") {
    NormalizedSeries ns;
    for (int i = 0; i < 64; ++i) ns.values.push_back(i * 0.1);
    Tensor img = rasterize(ns, 8, 16);
    CHECK(img.at(img.rows - 1, 0) == 1.0);
    CHECK(img.at(0, img.cols - 1) == 1.0);
    // Row index of the topmost set pixel per column must be non-increasing.
    int prev_top = img.rows;
    for (int c = 0; c < img.cols; ++c) {
        int top = img.rows;
        for (int r = 0; r < img.rows; ++r) {
            if (img.at(r, c) == 1.0) {
                top = r;
                break;
            }
        }
        if (top < img.rows) {
            CHECK(top <= prev_top);
            prev_top = top;
        }
    }
}

TEST_CASE("rasterize rejects tiny pixel sizes") {
    NormalizedSeries ns;
    ns.values.resize(16, 0.0);
    CHECK_THROWS(rasterize(ns, 8, 3));
}

TEST_CASE("caption golden strings") {
    CHECK(caption_patch({0, 0, 0, 0, 0, 0, 0, 0}, 0) ==
          "t=0..7 max=0.000 min=0.000 mean=0.000 std=0.000");
    const std::string ramp = caption_patch({0, 1, 2, 3, 4, 5, 6, 7}, 8);
    CHECK(ramp.find("t=8..15") == 0);
    CHECK(ramp.find("mean=3.500") != std::string::npos);
    CHECK(ramp.find("max=7.000") != std::string::npos);
    CHECK(ramp.find("min=0.000") != std::string::npos);
    CHECK_THROWS(caption_patch({}, 0));
}

TEST_CASE("expand aligns the three modalities") {
    datagen::GenConfig cfg;
    auto inst = datagen::synthesize(datagen::sample_spec(21, cfg));
    NormalizedSeries ns = normalize(inst.values);
    PatchBundle pb = expand(ns, 8, 16);

    CHECK(pb.patch_count == 32);
    CHECK(pb.numeric_patches.rows == pb.patch_count);
    CHECK(static_cast<int>(pb.pixel_patches.size()) == pb.patch_count);
    CHECK(static_cast<int>(pb.captions.size()) == pb.patch_count);

    // pixel patch j is exactly the column slice of the raster
    for (int j = 0; j < pb.patch_count; ++j) {
        for (int r = 0; r < pb.pixel_size; ++r)
            for (int c = 0; c < pb.pixel_size; ++c)
                CHECK(pb.pixel_patches[j].at(r, c) == pb.image.at(r, j * pb.pixel_size + c));
        // caption j names numeric patch j's time interval
        char prefix[32];
        std::snprintf(prefix, sizeof(prefix), "t=%d..%d", j * 8, j * 8 + 7);
        CHECK(pb.captions[j].rfind(prefix, 0) == 0);
    }
    CHECK_THROWS(expand(ns, 8, 4));  // pixel patches would straddle numeric patches
}

TEST_CASE("patch ownership is stable when the pixel size doubles") {
    for (int T : {64, 100, 256}) {
        NormalizedSeries ns;
        Rng rng(static_cast<uint64_t>(T));
        for (int i = 0; i < T; ++i) ns.values.push_back(rng.uniform(-1.0, 1.0));
        for (int pv : {8, 16}) {
            const int pn = 8;
            const int padded = ((T + pn - 1) / pn) * pn;
            const int count = padded / pn;
            const int width = count * pv;
            for (int t = 0; t < padded; ++t) {
                const int col = static_cast<int>((static_cast<long long>(t) * (width - 1)) /
                                                 (padded - 1));
                CHECK(col / pv == t / pn);  // same numeric patch owns the column
            }
        }
    }
}

TEST_CASE("pgm dump round-trips dimensions and bits") {
    NormalizedSeries ns;
    ns.values = {0, 1, 0, 1, 0, 1, 0, 1};
    Tensor img = rasterize(ns, 8, 8);
    const std::string pgm = to_pgm(img);
    CHECK(pgm.rfind("P2\n8 8\n1\n", 0) == 0);
    size_t ones = 0;
    for (char ch : pgm.substr(9)) ones += ch == '1';
    double set = 0.0;
    for (double v : img.data) set += v;
    CHECK(ones == static_cast<size_t>(set));
}
