#include <doctest.h>

#include <cmath>

#include "oracle/naive_ops.hpp"
#include "uierl/drfg.hpp"
#include "uierl/grad_check.hpp"

using namespace uierl;
using namespace uierl::drfg;
namespace op = uierl::ops;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
    for (auto& v : data) v = rng.uniform(lo, hi);
    return Tensor<double>::from(std::move(shape), std::move(data));
}

// dense straight-line evaluation of the two-layer propagation with learned
// adjacency, on plain buffers
std::vector<double> graph_oracle(const std::vector<double>& nodes, int n, int c,
                                 const std::vector<double>& p1, const std::vector<double>& p2,
                                 const std::vector<double>& w1, int c1,
                                 const std::vector<double>& w2) {
    auto np1 = naive::matmul(nodes, n, c, p1, 16);
    auto np2 = naive::matmul(nodes, n, c, p2, 16);
    // A = sigmoid(np1 * np2^T)
    std::vector<double> a(static_cast<size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0;
            for (int k = 0; k < 16; ++k)
                acc += np1[static_cast<size_t>(i) * 16 + k] * np2[static_cast<size_t>(j) * 16 + k];
            a[static_cast<size_t>(i) * n + j] = 1.0 / (1.0 + std::exp(-acc));
        }
    // A_hat = D^-1/2 (A+I) D^-1/2
    for (int i = 0; i < n; ++i) a[static_cast<size_t>(i) * n + i] += 1.0;
    std::vector<double> deg(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) deg[static_cast<size_t>(i)] += a[static_cast<size_t>(i) * n + j];
    std::vector<double> ahat(static_cast<size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            ahat[static_cast<size_t>(i) * n + j] =
                a[static_cast<size_t>(i) * n + j] / std::sqrt(deg[static_cast<size_t>(i)] * deg[static_cast<size_t>(j)]);
    // softmax(Ahat relu(Ahat N W1) W2) along channels per node
    auto h1 = naive::matmul(naive::matmul(ahat, n, n, nodes, c), n, c, w1, c1);
    h1 = naive::relu(h1);
    auto h2 = naive::matmul(naive::matmul(ahat, n, n, h1, c1), n, c1, w2, c);
    return naive::softmax_rows(h2, n, c);
}

} // namespace

TEST_SUITE_BEGIN("drfg");

TEST_CASE("build_adjacency: zero features give sigma(0)=0.5 everywhere") {
    auto nodes = Tensor<double>::zeros({4, 64});
    Rng rng(1);
    auto p1 = random_tensor({64, 16}, rng);
    auto p2 = random_tensor({64, 16}, rng);
    auto a = build_adjacency(nodes, p1, p2);
    REQUIRE(a.shape() == Shape{4, 4});
    for (int i = 0; i < 16; ++i) CHECK(a.data()[i] == doctest::Approx(0.5));
}

TEST_CASE("build_adjacency: shared projection gives a symmetric matrix") {
    Rng rng(2);
    auto nodes = random_tensor({5, 64}, rng, -0.2, 0.2);
    auto p = random_tensor({64, 16}, rng);
    auto a = build_adjacency(nodes, p, p);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            CHECK(a.data()[i * 5 + j] == doctest::Approx(a.data()[j * 5 + i]).epsilon(1e-12));
    // entries strictly inside (0,1) away from sigmoid saturation
    for (int i = 0; i < 25; ++i) {
        CHECK(a.data()[i] > 0.0);
        CHECK(a.data()[i] < 1.0);
    }
    // saturating magnitudes still land in [0,1] and normalize finitely
    auto big = build_adjacency(random_tensor({5, 64}, rng, -3, 3), p, p);
    auto norm = normalize_adjacency(big);
    for (int i = 0; i < 25; ++i) {
        CHECK(big.data()[i] >= 0.0);
        CHECK(big.data()[i] <= 1.0);
        CHECK(std::isfinite(norm.data()[i]));
    }
}

TEST_CASE("build_adjacency matches an independent matrix-product evaluation") {
    Rng rng(3);
    auto nodes = random_tensor({4, 64}, rng);
    auto p1 = random_tensor({64, 16}, rng);
    auto p2 = random_tensor({64, 16}, rng);
    auto a = build_adjacency(nodes, p1, p2);
    auto np1 = naive::matmul(nodes.vec(), 4, 64, p1.vec(), 16);
    auto np2 = naive::matmul(nodes.vec(), 4, 64, p2.vec(), 16);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double acc = 0;
            for (int k = 0; k < 16; ++k) acc += np1[static_cast<size_t>(i) * 16 + k] * np2[static_cast<size_t>(j) * 16 + k];
            CHECK(a.data()[i * 4 + j] == doctest::Approx(1.0 / (1.0 + std::exp(-acc))).epsilon(1e-9));
        }
}

TEST_CASE("normalize_adjacency: zero matrix maps to the identity") {
    auto a = Tensor<double>::zeros({3, 3});
    auto n = normalize_adjacency(a);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(n.data()[i * 3 + j] == doctest::Approx(i == j ? 1.0 : 0.0));
}

TEST_CASE("normalize_adjacency: hand-evaluated 2-node case") {
    auto a = Tensor<double>::from({2, 2}, {0, 1, 1, 0});
    auto n = normalize_adjacency(a);
    for (int i = 0; i < 4; ++i) CHECK(n.data()[i] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("normalize_adjacency keeps the self-loop diagonal at least 1 pre-scaling") {
    Rng rng(4);
    // random adjacency in (0,1): finite output, no NaN, diagonal positive
    std::vector<double> v(36);
    for (auto& x : v) x = rng.uniform(0.0, 1.0);
    auto n = normalize_adjacency(Tensor<double>::from({6, 6}, std::move(v)));
    for (int i = 0; i < 36; ++i) CHECK(std::isfinite(n.data()[i]));
    for (int i = 0; i < 6; ++i) CHECK(n.data()[i * 6 + i] > 0.0);
}

TEST_CASE("graph_branch single node collapses to a per-channel softmax broadcast") {
    ParamStore<double> ps;
    Rng rng(5);
    auto path = EncoderPath<double>::make(ps, "p", rng, true);
    auto f = random_tensor({64, 4, 4}, rng);
    auto out = graph_branch(f, path, /*factor=*/4); // 1x1 node grid
    REQUIRE(out.shape() == Shape{64, 4, 4});
    // broadcast: every pixel carries the same channel vector
    for (int c = 0; c < 64; ++c)
        for (int i = 1; i < 16; ++i)
            CHECK(out.data()[c * 16 + i] == doctest::Approx(out.data()[c * 16]).epsilon(1e-12));
    // channel softmax sums to 1
    double s = 0;
    for (int c = 0; c < 64; ++c) s += out.data()[c * 16];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("graph_branch channel softmax sums to one per node before upsampling") {
    ParamStore<double> ps;
    Rng rng(6);
    auto path = EncoderPath<double>::make(ps, "p", rng, true);
    auto f = random_tensor({64, 8, 8}, rng);
    auto out = graph_branch(f, path, /*factor=*/1); // 64 nodes, no pooling, no upsample blending
    for (int i = 0; i < 64; ++i) {
        double s = 0;
        for (int c = 0; c < 64; ++c) s += out.data()[c * 64 + i];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("graph_branch matches the dense oracle on small node grids") {
    ParamStore<double> ps;
    Rng rng(7);
    auto path = EncoderPath<double>::make(ps, "p", rng, true);
    auto f = random_tensor({64, 2, 2}, rng); // 4 nodes at factor 1
    auto out = graph_branch(f, path, 1);

    // node matrix is the channel-last flattening
    std::vector<double> nodes(4 * 64);
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 64; ++c) nodes[static_cast<size_t>(i) * 64 + c] = f.data()[c * 4 + i];
    auto ref = graph_oracle(nodes, 4, 64, path.p1.vec(), path.p2.vec(), path.w1.vec(), 32,
                            path.w2.vec());
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 64; ++c)
            CHECK(out.data()[c * 4 + i] == doctest::Approx(ref[static_cast<size_t>(i) * 64 + c]).epsilon(1e-5));
}

TEST_CASE("graph_branch with pooling matches the oracle through the same downsample") {
    ParamStore<double> ps;
    Rng rng(8);
    auto path = EncoderPath<double>::make(ps, "p", rng, true);
    auto f = random_tensor({64, 4, 4}, rng);
    auto out = graph_branch(f, path, 2); // 2x2 -> 4 nodes

    // downsample = max + avg pooling per 2x2 window
    std::vector<double> down(64 * 4);
    for (int c = 0; c < 64; ++c)
        for (int oy = 0; oy < 2; ++oy)
            for (int ox = 0; ox < 2; ++ox) {
                double mx = -1e30, s = 0;
                for (int ky = 0; ky < 2; ++ky)
                    for (int kx = 0; kx < 2; ++kx) {
                        const double v = f.data()[c * 16 + (oy * 2 + ky) * 4 + (ox * 2 + kx)];
                        mx = std::max(mx, v);
                        s += v;
                    }
                down[static_cast<size_t>(c) * 4 + oy * 2 + ox] = mx + s / 4.0;
            }
    std::vector<double> nodes(4 * 64);
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 64; ++c) nodes[static_cast<size_t>(i) * 64 + c] = down[static_cast<size_t>(c) * 4 + i];
    auto ref = graph_oracle(nodes, 4, 64, path.p1.vec(), path.p2.vec(), path.w1.vec(), 32,
                            path.w2.vec());
    // output upsamples the 2x2 node map bilinearly back to 4x4; corners of the
    // upsampled map carry the pure node values under half-pixel mapping
    const int corner[4] = {0, 3, 12, 15};
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 64; ++c)
            CHECK(out.data()[c * 16 + corner[i]] ==
                  doctest::Approx(ref[static_cast<size_t>(i) * 64 + c]).epsilon(1e-5));
}

TEST_CASE("graph factor selection and node budget") {
    CHECK(choose_graph_factor(64, 64) == 4);
    CHECK(choose_graph_factor(16, 16) == 1);
    CHECK(choose_graph_factor(32, 32) == 2);
    CHECK(choose_graph_factor(8, 8) == 1);
    ParamStore<double> ps;
    Rng rng(9);
    auto path = EncoderPath<double>::make(ps, "p", rng, true);
    auto big = random_tensor({64, 64, 64}, rng);
    CHECK_THROWS_AS(graph_branch(big, path, 1), UsageError); // 4096 nodes
}

TEST_CASE("content branch with zeroed convs reduces to the residual identity") {
    ParamStore<double> ps;
    Rng rng(10);
    auto path = EncoderPath<double>::make(ps, "p", rng, true);
    // zero the second conv of the residual block; IN affine stays neutral so
    // the block contributes only its bias-free zero map
    for (auto& v : path.content1.w.vec()) v = 0;
    for (auto& v : path.content1.b.vec()) v = 0;
    for (auto& v : path.content1.gamma.vec()) v = 0;
    auto f = random_tensor({64, 6, 6}, rng);
    auto out = content_branch(f, path);
    for (std::int64_t i = 0; i < f.numel(); ++i)
        CHECK(out.data()[i] == doctest::Approx(f.data()[i]).epsilon(1e-12));
}

TEST_CASE("initial unit produces 64 channels and is deterministic") {
    ParamStore<double> ps;
    Rng rng(11);
    auto path = EncoderPath<double>::make(ps, "p", rng, true);
    auto img = random_tensor({3, 8, 8}, rng);
    auto f1 = initial_unit(img, path);
    auto f2 = initial_unit(img, path);
    REQUIRE(f1.shape() == Shape{64, 8, 8});
    for (std::int64_t i = 0; i < f1.numel(); ++i) CHECK(f1.data()[i] == f2.data()[i]);

    auto z = initial_unit(Tensor<double>::zeros({3, 8, 8}), path);
    REQUIRE(z.shape() == Shape{64, 8, 8});
}

TEST_CASE("encoder path: zeroing the graph rescale leaves the content branch") {
    ParamStore<double> ps;
    Rng rng(12);
    auto path = EncoderPath<double>::make(ps, "p", rng, true);
    for (auto& v : path.rescale.w.vec()) v = 0;
    for (auto& v : path.rescale.b.vec()) v = 0;
    auto img = random_tensor({3, 8, 8}, rng);
    auto full = encoder_path(img, path);
    auto f0 = initial_unit(img, path);
    auto content = content_branch(f0, path);
    for (std::int64_t i = 0; i < full.numel(); ++i)
        CHECK(full.data()[i] == doctest::Approx(content.data()[i]).epsilon(1e-12));
}

TEST_CASE("drfg_forward shape, degenerate depth, and path independence") {
    ParamStore<double> ps;
    Rng rng(13);
    auto params = DrfgParams<double>::make(ps, "drfg", rng, 3, true, true);
    auto img = random_tensor({3, 8, 8}, rng);

    // degenerate constant depth: single region, still well-defined
    auto flat = imaging::Raster::full({1, 8, 8}, 0.3);
    auto out = drfg_forward(img, flat, params);
    REQUIRE(out.shape() == Shape{64, 8, 8});

    // three-level depth: perturbing path 2 leaves regions 1 and 3 of the
    // pre-fusion recombination untouched
    std::vector<double> dv(64);
    for (int i = 0; i < 64; ++i) dv[static_cast<size_t>(i)] = (i % 3 == 0) ? 0.1 : (i % 3 == 1 ? 0.5 : 0.9);
    auto depth = imaging::Raster::from({1, 8, 8}, std::move(dv));
    auto masks = regionseg::kmeans_depth(depth);

    auto regions = regionseg::extract_regions(img, masks);
    std::vector<Tensor<double>> feats(3);
    for (int k = 0; k < 3; ++k) feats[static_cast<size_t>(k)] = encoder_path(regions[static_cast<size_t>(k)], params.paths[static_cast<size_t>(k)]);
    auto combined_before = regionseg::combine_regions(feats, masks);

    for (auto& v : params.paths[1].content0.w.vec()) v += 0.25; // perturb path 2
    std::vector<Tensor<double>> feats2(3);
    for (int k = 0; k < 3; ++k) feats2[static_cast<size_t>(k)] = encoder_path(regions[static_cast<size_t>(k)], params.paths[static_cast<size_t>(k)]);
    auto combined_after = regionseg::combine_regions(feats2, masks);

    for (std::int64_t i = 0; i < 64; ++i) {
        const bool in_region2 = masks.masks[1].data()[i] != 0.0;
        for (int c = 0; c < 64; ++c) {
            const double a = combined_before.data()[c * 64 + i];
            const double b = combined_after.data()[c * 64 + i];
            if (in_region2) continue;
            CHECK(a == doctest::Approx(b).epsilon(1e-12));
        }
    }

    // masks swapped between two different contents produce different features
    auto img2 = random_tensor({3, 8, 8}, rng);
    auto o1 = drfg_forward(img, masks, params);
    auto o2 = drfg_forward(img2, masks, params);
    double diff = 0;
    for (std::int64_t i = 0; i < o1.numel(); ++i) diff += std::fabs(o1.data()[i] - o2.data()[i]);
    CHECK(diff > 1e-3);
}

TEST_CASE("gradients flow through the full drfg path") {
    ParamStore<double> ps;
    Rng rng(14);
    auto params = DrfgParams<double>::make(ps, "drfg", rng, 3, true, true);
    std::vector<double> dv(64);
    for (size_t i = 0; i < 64; ++i) dv[i] = (i < 20) ? 0.15 : (i < 44 ? 0.5 : 0.85);
    auto depth = imaging::Raster::from({1, 8, 8}, std::move(dv));
    auto masks = regionseg::kmeans_depth(depth);
    Rng drng(15);
    std::vector<double> iv(3 * 64);
    for (auto& v : iv) v = drng.uniform(-1, 1);
    auto img = Tensor<double>::from({3, 8, 8}, std::move(iv));
    auto target = random_tensor({64, 8, 8}, drng);
    auto f = [&]() { return op::l1(drfg_forward(img, masks, params), target); };
    auto rep = grad_check<double>(f, ps, 1e-4, 1e-3, 2, drng);
    INFO(rep.summary());
    CHECK(rep.pass);
}

TEST_SUITE_END();
