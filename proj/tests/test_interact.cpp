#include <doctest.h>

#include <cmath>

#include "oracle/naive_ops.hpp"
#include "uierl/grad_check.hpp"
#include "uierl/interact.hpp"

using namespace uierl;
using namespace uierl::interact;
namespace op = uierl::ops;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
    for (auto& v : data) v = rng.uniform(lo, hi);
    return Tensor<double>::from(std::move(shape), std::move(data));
}

// ---- straight-line composition of the interaction formulas -----------------

struct Dims {
    int h, w;
};

std::vector<double> naive_conv_in_relu(const std::vector<double>& x, int ci, Dims d,
                                       const nn::ConvUnit<double>& u, bool with_in, bool with_relu) {
    int ho = 0, wo = 0;
    const int co = u.w.dim(0), k = u.w.dim(2);
    auto y = naive::conv2d(x, ci, d.h, d.w, u.w.vec(), co, k, k, u.b.vec(), 1, (k - 1) / 2, ho, wo);
    if (with_in) y = naive::instance_norm(y, co, ho, wo, u.gamma.vec(), u.beta.vec(), 1e-5);
    if (with_relu) y = naive::relu(y);
    return y;
}

std::vector<double> naive_fli(const std::vector<double>& a, const std::vector<double>& b, Dims d,
                              const InteractionParams<double>& p) {
    std::vector<double> cat;
    cat.reserve(a.size() + b.size());
    cat.insert(cat.end(), a.begin(), a.end());
    cat.insert(cat.end(), b.begin(), b.end());
    return naive_conv_in_relu(cat, 128, d, p.fli_unit, true, true);
}

std::vector<double> naive_cli(const std::vector<double>& f, Dims d,
                              const InteractionParams<double>& p) {
    auto pre = naive_conv_in_relu(f, 64, d, p.cli_pre, false, true);
    auto pooled = naive::global_avg_pool(pre, 64, d.h, d.w);
    // 1x1 convs on the pooled vector
    std::vector<double> sq(16);
    for (int o = 0; o < 16; ++o) {
        double acc = p.cli_squeeze_b.data()[o];
        for (int i = 0; i < 64; ++i) acc += p.cli_squeeze_w.data()[o * 64 + i] * pooled[static_cast<size_t>(i)];
        sq[static_cast<size_t>(o)] = std::max(0.0, acc);
    }
    std::vector<double> gate(64);
    for (int o = 0; o < 64; ++o) {
        double acc = p.cli_excite_b.data()[o];
        for (int i = 0; i < 16; ++i) acc += p.cli_excite_w.data()[o * 16 + i] * sq[static_cast<size_t>(i)];
        gate[static_cast<size_t>(o)] = 1.0 / (1.0 + std::exp(-acc));
    }
    std::vector<double> out(f.size());
    for (int c = 0; c < 64; ++c)
        for (int i = 0; i < d.h * d.w; ++i)
            out[static_cast<size_t>(c) * d.h * d.w + i] =
                gate[static_cast<size_t>(c)] * f[static_cast<size_t>(c) * d.h * d.w + i] +
                f[static_cast<size_t>(c) * d.h * d.w + i];
    return out;
}

std::vector<double> naive_pli(const std::vector<double>& fc, const std::vector<double>& ff, Dims d,
                              const InteractionParams<double>& p) {
    const int m = d.h * d.w;
    std::vector<double> red(16 * static_cast<size_t>(m));
    for (int o = 0; o < 16; ++o)
        for (int i = 0; i < m; ++i) {
            double acc = p.pli_reduce_b.data()[o];
            for (int c = 0; c < 64; ++c) acc += p.pli_reduce_w.data()[o * 64 + c] * fc[static_cast<size_t>(c) * m + i];
            red[static_cast<size_t>(o) * m + i] = std::max(0.0, acc);
        }
    std::vector<double> out(fc.size());
    for (int o = 0; o < 64; ++o)
        for (int i = 0; i < m; ++i) {
            double acc = p.pli_expand_b.data()[o];
            for (int c = 0; c < 16; ++c) acc += p.pli_expand_w.data()[o * 16 + c] * red[static_cast<size_t>(c) * m + i];
            const double gate = 1.0 / (1.0 + std::exp(-acc));
            out[static_cast<size_t>(o) * m + i] = gate * fc[static_cast<size_t>(o) * m + i] + ff[static_cast<size_t>(o) * m + i];
        }
    return out;
}

std::vector<double> naive_eai(const std::vector<double>& ext, const std::vector<double>& in, Dims d,
                              const InteractionParams<double>& p) {
    auto f = naive_fli(ext, in, d, p);
    auto c = naive_cli(f, d, p);
    return naive_pli(c, f, d, p);
}

std::vector<double> naive_aggregate(const std::vector<std::vector<double>>& feats, Dims d,
                                    const AggregateParams<double>& p) {
    std::vector<double> mean(feats[0].size(), 0.0);
    for (const auto& f : feats)
        for (size_t i = 0; i < f.size(); ++i) mean[i] += f[i];
    for (auto& v : mean) v /= static_cast<double>(feats.size());
    return naive_conv_in_relu(mean, 64, d, p.transform, true, true);
}

} // namespace

TEST_SUITE_BEGIN("interact");

TEST_CASE("fli shape contract, order sensitivity and misalignment rejection") {
    ParamStore<double> ps;
    Rng rng(1);
    auto p = InteractionParams<double>::make(ps, "x", rng);
    auto a = random_tensor({64, 6, 6}, rng);
    auto b = random_tensor({64, 6, 6}, rng);
    auto ab = fli(a, b, p);
    auto ba = fli(b, a, p);
    REQUIRE(ab.shape() == Shape{64, 6, 6});
    double diff = 0;
    for (std::int64_t i = 0; i < ab.numel(); ++i) diff += std::fabs(ab.data()[i] - ba.data()[i]);
    CHECK(diff > 1e-3);
    CHECK_THROWS_AS(fli(a, random_tensor({64, 4, 4}, rng), p), UsageError);
}

TEST_CASE("cli saturations: gate off is the residual identity, gate on doubles") {
    ParamStore<double> ps;
    Rng rng(2);
    auto p = InteractionParams<double>::make(ps, "x", rng);
    auto f = random_tensor({64, 5, 5}, rng);

    for (auto& v : p.cli_excite_w.vec()) v = 0;
    for (auto& v : p.cli_excite_b.vec()) v = -20;
    auto off = cli(f, p);
    for (std::int64_t i = 0; i < f.numel(); ++i)
        CHECK(std::fabs(off.data()[i] - f.data()[i]) < 1e-6);

    for (auto& v : p.cli_excite_b.vec()) v = 20;
    auto on = cli(f, p);
    for (std::int64_t i = 0; i < f.numel(); ++i)
        CHECK(std::fabs(on.data()[i] - 2.0 * f.data()[i]) < 1e-6);
}

TEST_CASE("pli saturation returns the fusion argument exactly as the gate closes") {
    ParamStore<double> ps;
    Rng rng(3);
    auto p = InteractionParams<double>::make(ps, "x", rng);
    auto fc = random_tensor({64, 5, 5}, rng);
    auto ff = random_tensor({64, 5, 5}, rng);
    for (auto& v : p.pli_expand_w.vec()) v = 0;
    for (auto& v : p.pli_expand_b.vec()) v = -20;
    auto out = pli(fc, ff, p);
    for (std::int64_t i = 0; i < ff.numel(); ++i)
        CHECK(std::fabs(out.data()[i] - ff.data()[i]) < 1e-6);
    REQUIRE(out.shape() == Shape{64, 5, 5});
}

TEST_CASE("cli and pli match their straight-line formulas") {
    ParamStore<double> ps;
    Rng rng(4);
    auto p = InteractionParams<double>::make(ps, "x", rng);
    Dims d{6, 6};
    auto f = random_tensor({64, 6, 6}, rng);
    auto c = cli(f, p);
    auto cref = naive_cli(f.vec(), d, p);
    for (std::int64_t i = 0; i < c.numel(); ++i)
        CHECK(c.data()[i] == doctest::Approx(cref[static_cast<size_t>(i)]).epsilon(1e-6));

    auto ff = random_tensor({64, 6, 6}, rng);
    auto pv = pli(c, ff, p);
    auto pref = naive_pli(cref, ff.vec(), d, p);
    for (std::int64_t i = 0; i < pv.numel(); ++i)
        CHECK(pv.data()[i] == doctest::Approx(pref[static_cast<size_t>(i)]).epsilon(1e-6));
}

TEST_CASE("eai equals the composed straight-line oracle on random 16x16 inputs") {
    ParamStore<double> ps;
    Rng rng(5);
    auto p = InteractionParams<double>::make(ps, "x", rng);
    Dims d{16, 16};
    auto ext = random_tensor({64, 16, 16}, rng);
    auto in = random_tensor({64, 16, 16}, rng);
    auto out = eai(ext, in, p);
    auto ref = naive_eai(ext.vec(), in.vec(), d, p);
    double worst = 0;
    for (std::int64_t i = 0; i < out.numel(); ++i)
        worst = std::max(worst, std::fabs(out.data()[i] - ref[static_cast<size_t>(i)]));
    CHECK(worst < 1e-5);
}

TEST_CASE("eai with saturated gates reduces to the feature-level fusion") {
    ParamStore<double> ps;
    Rng rng(6);
    auto p = InteractionParams<double>::make(ps, "x", rng);
    for (auto& v : p.cli_excite_w.vec()) v = 0;
    for (auto& v : p.cli_excite_b.vec()) v = -30;
    for (auto& v : p.pli_expand_w.vec()) v = 0;
    for (auto& v : p.pli_expand_b.vec()) v = -30;
    auto ext = random_tensor({64, 6, 6}, rng);
    auto in = random_tensor({64, 6, 6}, rng);
    auto out = eai(ext, in, p);
    auto fused = fli(ext, in, p);
    for (std::int64_t i = 0; i < out.numel(); ++i)
        CHECK(std::fabs(out.data()[i] - fused.data()[i]) < 1e-6);
}

TEST_CASE("aggregate_scene: N=1, permutation invariance, cancellation") {
    ParamStore<double> ps;
    Rng rng(7);
    auto agg = AggregateParams<double>::make(ps, "agg", rng);
    auto f1 = random_tensor({64, 4, 4}, rng);
    auto only = aggregate_scene<double>({f1}, agg);
    auto direct = agg.transform.forward(f1);
    for (std::int64_t i = 0; i < only.numel(); ++i) CHECK(only.data()[i] == direct.data()[i]);

    std::vector<Tensor<double>> fs;
    for (int i = 0; i < 5; ++i) fs.push_back(random_tensor({64, 4, 4}, rng));
    auto m1 = aggregate_scene(fs, agg);
    std::vector<Tensor<double>> perm = {fs[4], fs[2], fs[0], fs[1], fs[3]};
    auto m2 = aggregate_scene(perm, agg);
    for (std::int64_t i = 0; i < m1.numel(); ++i) CHECK(m1.data()[i] == m2.data()[i]);

    auto neg = op::scale(f1, -1.0);
    auto zero_in = aggregate_scene<double>({f1, neg}, agg);
    auto zref = agg.transform.forward(Tensor<double>::zeros({64, 4, 4}));
    for (std::int64_t i = 0; i < zero_in.numel(); ++i)
        CHECK(zero_in.data()[i] == doctest::Approx(zref.data()[i]).epsilon(1e-12));

    CHECK_THROWS_AS(aggregate_scene<double>({}, agg), UsageError);
}

TEST_CASE("iae is permutation invariant and matches the composed oracle at N=3") {
    ParamStore<double> ps;
    Rng rng(8);
    auto p = InteractionParams<double>::make(ps, "x", rng);
    auto agg = AggregateParams<double>::make(ps, "agg", rng);
    Dims d{8, 8};
    std::vector<Tensor<double>> fs;
    for (int i = 0; i < 3; ++i) fs.push_back(random_tensor({64, 8, 8}, rng));
    auto ext = random_tensor({64, 8, 8}, rng);

    auto out = iae(fs, ext, p, agg);
    REQUIRE(out.shape() == Shape{64, 8, 8});
    std::vector<Tensor<double>> perm = {fs[2], fs[0], fs[1]};
    auto out2 = iae(perm, ext, p, agg);
    for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == out2.data()[i]);

    auto pooled = naive_aggregate({fs[0].vec(), fs[1].vec(), fs[2].vec()}, d, agg);
    auto fref = naive_fli(ext.vec(), pooled, d, p);
    auto cref = naive_cli(fref, d, p);
    auto pref = naive_pli(cref, fref, d, p);
    double worst = 0;
    for (std::int64_t i = 0; i < out.numel(); ++i)
        worst = std::max(worst, std::fabs(out.data()[i] - pref[static_cast<size_t>(i)]));
    CHECK(worst < 1e-5);
}

TEST_CASE("pli residual flips to the channel-gated feature when configured") {
    ParamStore<double> ps;
    Rng rng(9);
    auto p = InteractionParams<double>::make(ps, "x", rng, true, true, /*pli_residual_cli=*/true);
    auto fc = random_tensor({64, 4, 4}, rng);
    auto ff = random_tensor({64, 4, 4}, rng);
    for (auto& v : p.pli_expand_w.vec()) v = 0;
    for (auto& v : p.pli_expand_b.vec()) v = -30;
    auto out = pli(fc, ff, p);
    for (std::int64_t i = 0; i < fc.numel(); ++i)
        CHECK(std::fabs(out.data()[i] - fc.data()[i]) < 1e-6);
}

TEST_CASE("gradients flow through eai and iae") {
    ParamStore<double> ps;
    Rng rng(10);
    auto p = InteractionParams<double>::make(ps, "x", rng);
    auto agg = AggregateParams<double>::make(ps, "agg", rng);
    auto ext = random_tensor({64, 4, 4}, rng);
    auto in0 = random_tensor({64, 4, 4}, rng);
    auto in1 = random_tensor({64, 4, 4}, rng);
    auto target = random_tensor({64, 4, 4}, rng);
    auto f = [&]() {
        auto upd = eai(ext, in0, p);
        auto ext2 = iae<double>({in0, in1}, ext, p, agg);
        return op::l1(op::add(upd, ext2), target);
    };
    auto rep = grad_check<double>(f, ps, 1e-4, 1e-3, 3, rng);
    INFO(rep.summary());
    CHECK(rep.pass);
}

TEST_SUITE_END();
