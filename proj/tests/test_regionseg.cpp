#include <doctest.h>

#include <cmath>

#include "uierl/regionseg.hpp"

using namespace uierl;
using namespace uierl::regionseg;
using imaging::Raster;

namespace {

Raster depth_from(std::vector<double> v, int h, int w) {
    return Raster::from({1, h, w}, std::move(v));
}

double wcss(const Raster& depth, const RegionMasks& m) {
    double s = 0;
    for (int r = 0; r < m.k(); ++r) {
        if (m.empty[static_cast<size_t>(r)]) continue;
        for (std::int64_t i = 0; i < depth.numel(); ++i)
            if (m.masks[static_cast<size_t>(r)].data()[i] != 0.0) {
                const double d = depth.data()[i] - m.centers[static_cast<size_t>(r)];
                s += d * d;
            }
    }
    return s;
}

} // namespace

TEST_SUITE_BEGIN("regionseg");

TEST_CASE("three exact levels are recovered as level sets") {
    std::vector<double> v;
    for (int i = 0; i < 48; ++i) v.push_back(i % 3 == 0 ? 0.1 : (i % 3 == 1 ? 0.5 : 0.9));
    auto depth = depth_from(std::move(v), 6, 8);
    auto m = kmeans_depth(depth);
    m.validate();
    REQUIRE(m.k() == 3);
    CHECK(m.centers[0] == doctest::Approx(0.1));
    CHECK(m.centers[1] == doctest::Approx(0.5));
    CHECK(m.centers[2] == doctest::Approx(0.9));
    // brute-force assignment check over all pixels
    for (std::int64_t i = 0; i < depth.numel(); ++i) {
        const double d = depth.data()[i];
        const int expected = d < 0.3 ? 0 : (d < 0.7 ? 1 : 2);
        CHECK(m.masks[static_cast<size_t>(expected)].data()[i] == 1.0);
    }
}

TEST_CASE("constant depth assigns everything to region 1") {
    auto depth = Raster::full({1, 4, 4}, 0.42);
    auto m = kmeans_depth(depth);
    m.validate();
    CHECK_FALSE(m.empty[0]);
    CHECK(m.empty[1]);
    CHECK(m.empty[2]);
    for (std::int64_t i = 0; i < 16; ++i) CHECK(m.masks[0].data()[i] == 1.0);
}

TEST_CASE("partition invariant on random inputs") {
    Rng rng(1);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> v(64);
        for (auto& x : v) x = rng.uniform();
        auto depth = depth_from(std::move(v), 8, 8);
        auto m = kmeans_depth(depth);
        CHECK_NOTHROW(m.validate());
        // fixed point: every pixel sits with its nearest non-empty center
        for (std::int64_t i = 0; i < depth.numel(); ++i) {
            int assigned = -1;
            for (int r = 0; r < 3; ++r)
                if (m.masks[static_cast<size_t>(r)].data()[i] != 0.0) assigned = r;
            double best = 1e18;
            int nearest = -1;
            for (int r = 0; r < 3; ++r) {
                if (m.empty[static_cast<size_t>(r)]) continue;
                const double d = std::fabs(depth.data()[i] - m.centers[static_cast<size_t>(r)]);
                if (d < best - 1e-15) {
                    best = d;
                    nearest = r;
                }
            }
            CHECK(std::fabs(depth.data()[i] - m.centers[static_cast<size_t>(assigned)]) ==
                  doctest::Approx(best));
            (void)nearest;
        }
    }
}

TEST_CASE("kmeans objective does not increase when iterations are allowed to continue") {
    Rng rng(2);
    std::vector<double> v(256);
    for (auto& x : v) x = rng.uniform();
    auto depth = depth_from(std::move(v), 16, 16);
    // run with increasing iteration budgets; WCSS must be non-increasing
    double prev = 1e18;
    for (int iters : {1, 2, 4, 8, 32, 100}) {
        auto m = kmeans_depth(depth, 3, 1e-12, iters);
        const double s = wcss(depth, m);
        CHECK(s <= prev + 1e-9);
        prev = s;
    }
}

TEST_CASE("centers ascending and masks ordered near to far") {
    Rng rng(3);
    std::vector<double> v(100);
    for (auto& x : v) x = rng.uniform();
    auto depth = depth_from(std::move(v), 10, 10);
    auto m = kmeans_depth(depth);
    for (int r = 1; r < 3; ++r)
        if (!m.empty[static_cast<size_t>(r)]) CHECK(m.centers[static_cast<size_t>(r)] > m.centers[static_cast<size_t>(r - 1)]);
}

TEST_CASE("extract and combine are exact partition algebra") {
    Rng rng(4);
    std::vector<double> dv(64);
    for (auto& x : dv) x = rng.uniform();
    auto depth = depth_from(std::move(dv), 8, 8);
    auto m = kmeans_depth(depth);

    std::vector<double> iv(3 * 64);
    for (auto& x : iv) x = rng.uniform();
    auto img = Tensor<double>::from({3, 8, 8}, std::move(iv));

    auto regions = extract_regions(img, m);
    REQUIRE(regions.size() == 3);
    // sum over regions reproduces the image exactly
    for (std::int64_t i = 0; i < img.numel(); ++i) {
        double s = 0;
        for (const auto& r : regions) s += r.data()[i];
        CHECK(s == doctest::Approx(img.data()[i]).epsilon(1e-15));
    }
    // per-pixel brute force of the mask product
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            for (std::int64_t i = 0; i < 64; ++i)
                CHECK(regions[static_cast<size_t>(r)].data()[c * 64 + i] ==
                      img.data()[c * 64 + i] * m.masks[static_cast<size_t>(r)].data()[i]);

    // identity features: combine(extract) == image
    auto combined = combine_regions(regions, m);
    for (std::int64_t i = 0; i < img.numel(); ++i)
        CHECK(combined.data()[i] == doctest::Approx(img.data()[i]).epsilon(1e-15));

    // constant features reproduce the label map
    std::vector<Tensor<double>> consts = {Tensor<double>::full({1, 8, 8}, 1.0),
                                          Tensor<double>::full({1, 8, 8}, 2.0),
                                          Tensor<double>::full({1, 8, 8}, 3.0)};
    auto labels = combine_regions(consts, m);
    auto lm = label_map(m);
    for (std::int64_t i = 0; i < 64; ++i)
        CHECK(labels.data()[i] == doctest::Approx(static_cast<double>(lm[static_cast<size_t>(i)] + 1)));
}

TEST_CASE("mask coverage fraction matches counting") {
    // all-ones image, mask from a two-level depth: region sizes count exactly
    std::vector<double> dv(100, 0.2);
    for (int i = 0; i < 40; ++i) dv[static_cast<size_t>(i)] = 0.8;
    auto depth = depth_from(std::move(dv), 10, 10);
    auto m = kmeans_depth(depth);
    auto ones = Tensor<double>::full({3, 10, 10}, 1.0);
    auto regions = extract_regions(ones, m);
    double n0 = 0;
    for (std::int64_t i = 0; i < 100; ++i) n0 += regions[0].data()[i];
    CHECK(n0 == doctest::Approx(60.0)); // nearer region holds the 0.2 pixels
}

TEST_CASE("combine_regions treats undefined slots as zero") {
    std::vector<double> dv(16, 0.1);
    for (int i = 8; i < 16; ++i) dv[static_cast<size_t>(i)] = 0.9;
    auto depth = depth_from(std::move(dv), 4, 4);
    auto m = kmeans_depth(depth);
    std::vector<Tensor<double>> feats(3);
    feats[0] = Tensor<double>::full({2, 4, 4}, 5.0);
    feats[1] = Tensor<double>{}; // skipped
    feats[2] = Tensor<double>::full({2, 4, 4}, 7.0);
    auto out = combine_regions(feats, m);
    for (std::int64_t i = 0; i < 16; ++i) {
        const double expect = m.masks[0].data()[i] * 5.0 + m.masks[2].data()[i] * 7.0;
        CHECK(out.data()[i] == doctest::Approx(expect));
    }
}

TEST_SUITE_END();
