#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracle/metrics_ref.hpp"
#include "uierl/metrics.hpp"

using namespace uierl;
using namespace uierl::metrics;
using imaging::Raster;

namespace {

Raster random_image(int h, int w, Rng& rng) {
    std::vector<double> v(static_cast<size_t>(3) * h * w);
    for (auto& x : v) x = rng.uniform();
    return Raster::from({3, h, w}, std::move(v));
}

Raster gray(double v, int h = 16, int w = 16) { return Raster::full({3, h, w}, v); }

} // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("uciqe: constant mid-gray scores zero") {
    // exact arithmetic gives 0; the sRGB matrix rows are rounded constants, so
    // a few 1e-6 of residual chroma survive quantization
    CHECK(std::fabs(uciqe(gray(0.5))) < 1e-4);
}

TEST_CASE("uciqe: half black, half white leaves only the contrast term") {
    const int h = 16, w = 16;
    std::vector<double> v(static_cast<size_t>(3) * h * w, 0.0);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = w / 2; x < w; ++x) v[(static_cast<size_t>(c) * h + y) * w + x] = 1.0;
    const double score = uciqe(Raster::from({3, h, w}, std::move(v)));
    CHECK(score == doctest::Approx(0.2745).epsilon(1e-3));
}

TEST_CASE("uiqm: constant image scores zero") {
    CHECK(uiqm(gray(0.3)) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_THROWS_AS(uiqm(gray(0.3, 4, 4)), UsageError); // smaller than one block
}

TEST_CASE("no-reference metrics are flip invariant on aligned blocks") {
    Rng rng(1);
    auto img = random_image(64, 64, rng);
    auto flipped = imaging::hflip(img);
    CHECK(uiqm(img) == doctest::Approx(uiqm(flipped)).epsilon(1e-9));
    CHECK(uciqe(img) == doctest::Approx(uciqe(flipped)).epsilon(1e-9));
    CHECK(ccf(img) == doctest::Approx(ccf(flipped)).epsilon(1e-9));
    CHECK(edge_intensity(img) == doctest::Approx(edge_intensity(flipped)).epsilon(1e-9));
    CHECK(edge_intensity(img) == doctest::Approx(edge_intensity(imaging::rot90(img, 1))).epsilon(1e-9));
}

TEST_CASE("uiqm matches the oracle on an 8x8-aligned checkerboard") {
    const int h = 64, w = 64;
    std::vector<double> v(static_cast<size_t>(3) * h * w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                v[(static_cast<size_t>(c) * h + y) * w + x] =
                    (((y / 8) + (x / 8)) % 2 == 0) ? 0.85 : 0.15;
    auto img = Raster::from({3, h, w}, std::move(v));
    auto q = metrics_ref::quantize(img.data(), h, w);
    CHECK(uiqm(img) == doctest::Approx(metrics_ref::ref_uiqm(q)).epsilon(1e-9));
}

TEST_CASE("all metrics match the independent reimplementation on random images") {
    Rng rng(7);
    for (int rep = 0; rep < 10; ++rep) {
        auto img = random_image(64, 64, rng);
        auto q = metrics_ref::quantize(img.data(), 64, 64);
        CHECK(std::fabs(uiqm(img) - metrics_ref::ref_uiqm(q)) < 1e-6);
        CHECK(std::fabs(uciqe(img) - metrics_ref::ref_uciqe(q)) < 1e-6);
        CHECK(std::fabs(ccf(img) - metrics_ref::ref_ccf(q)) < 1e-6);
        CHECK(std::fabs(edge_intensity(img) - metrics_ref::ref_edge(q)) < 1e-6);

        auto ref = random_image(64, 64, rng);
        CHECK(std::fabs(angular_error_deg(img, ref) -
                        metrics_ref::ref_angular_deg(img.data(), ref.data(), 64, 64)) < 1e-6);
        CHECK(std::fabs(psnr_db(img, ref) -
                        metrics_ref::ref_psnr(img.data(), ref.data(), img.numel())) < 1e-9);
    }
}

TEST_CASE("ccf on flat gray reduces to the fog term") {
    const double g = 0.4;
    MetricWeights w;
    const double expect = w.ccf_w3 * (1.0 - std::lround(g * 255.0) / 255.0);
    CHECK(ccf(gray(g)) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("edge intensity of a vertical step") {
    const int h = 16, w = 16;
    std::vector<double> v(static_cast<size_t>(3) * h * w, 0.0);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = w / 2; x < w; ++x) v[(static_cast<size_t>(c) * h + y) * w + x] = 1.0;
    auto img = Raster::from({3, h, w}, std::move(v));
    // two columns adjacent to the step carry |Gx| = 4*255
    CHECK(edge_intensity(img) == doctest::Approx(2.0 / w * 1020.0).epsilon(1e-9));
    CHECK(edge_intensity(gray(0.7)) == 0.0);
}

TEST_CASE("angular error: identity, orthogonal colors, scale invariance") {
    Rng rng(3);
    auto img = random_image(8, 8, rng);
    CHECK(angular_error_deg(img, img) == 0.0);

    std::vector<double> red(3 * 64, 0.0), green(3 * 64, 0.0);
    for (int i = 0; i < 64; ++i) {
        red[static_cast<size_t>(i)] = 1.0;
        green[static_cast<size_t>(64 + i)] = 1.0;
    }
    auto r = Raster::from({3, 8, 8}, std::move(red));
    auto g = Raster::from({3, 8, 8}, std::move(green));
    CHECK(angular_error_deg(r, g) == doctest::Approx(90.0).epsilon(1e-12));
    CHECK(angular_error_deg(r, g) == angular_error_deg(g, r));

    std::vector<double> half(img.vec());
    for (auto& x : half) x *= 0.5;
    auto scaled = Raster::from(img.shape(), std::move(half));
    CHECK(angular_error_deg(scaled, img) == 0.0);

    auto black = gray(0.0, 8, 8);
    CHECK_THROWS_AS(angular_error_deg(black, black), DataError);
}

TEST_CASE("psnr: sentinel and logarithm identity") {
    Rng rng(4);
    auto img = random_image(8, 8, rng);
    CHECK(psnr_db(img, img) == 99.0);
    auto a = gray(0.2, 8, 8);
    auto b = gray(0.3, 8, 8);
    CHECK(psnr_db(a, b) == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("metrics stay finite on degenerate content") {
    for (auto img : {gray(0.0, 16, 16), gray(1.0, 16, 16)}) {
        CHECK(std::isfinite(uiqm(img)));
        CHECK(std::isfinite(uciqe(img)));
        CHECK(std::isfinite(ccf(img)));
        CHECK(std::isfinite(edge_intensity(img)));
    }
    auto noise = gray(0.0, 16, 16);
    noise.data()[5 * 16 + 7] = 1.0; // single hot pixel on the red plane
    CHECK(std::isfinite(uiqm(noise)));
    CHECK(std::isfinite(uciqe(noise)));
    CHECK(std::isfinite(ccf(noise)));
    CHECK(std::isfinite(edge_intensity(noise)));
}

TEST_CASE("report means and csv schema") {
    MetricReport rep;
    rep.rows.push_back({"a.png", 1.0, 0.4, 10.0, 5.0, 2.0, 30.0});
    rep.rows.push_back({"b.png", 3.0, 0.6, 20.0, 15.0, 4.0, 40.0});
    auto m = rep.means();
    CHECK(m.uiqm == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(m.uciqe == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(*m.angular == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(*m.psnr == doctest::Approx(35.0).epsilon(1e-12));

    const auto dir = std::filesystem::temp_directory_path() / "uierl_metrics_test";
    std::filesystem::create_directories(dir);
    write_report_csv(dir / "r.csv", rep);
    std::ifstream f(dir / "r.csv");
    std::string line;
    std::getline(f, line);
    CHECK(line == "image_path,uiqm,uciqe,ccf,edge,angular_error,psnr");
    int lines = 1;
    std::string last;
    while (std::getline(f, line))
        if (!line.empty()) {
            ++lines;
            last = line;
        }
    CHECK(lines == 4); // header + 2 rows + means
    CHECK(last.substr(0, 5) == "mean,");

    // blank reference columns
    MetricReport rep2;
    rep2.rows.push_back({"c.png", 1.0, 0.4, 10.0, 5.0, std::nullopt, std::nullopt});
    write_report_csv(dir / "r2.csv", rep2);
    std::ifstream f2(dir / "r2.csv");
    std::getline(f2, line);
    std::getline(f2, line);
    CHECK(line.substr(line.size() - 2) == ",,");
}

TEST_SUITE_END();
