#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "uierl/grad_check.hpp"
#include "uierl/network.hpp"

using namespace uierl;
using namespace uierl::network;
namespace op = uierl::ops;

namespace {

imaging::SceneBatch make_batch(int n_views, int size, std::uint64_t seed) {
    Rng rng(seed);
    auto scene = imaging::procedural_scene(size, size, rng);
    auto water = imaging::random_water(rng);
    imaging::JitterSpec jitter;
    Rng srng(seed + 1);
    return imaging::synth_scene(scene.clean, scene.depth, water, n_views, jitter, srng);
}

std::int64_t param_count(Variant v) {
    auto model = build_model<float>(ModelConfig::for_variant(v), 7);
    return model.params.total_params();
}

double max_abs_dev(const Tensor<float>& a, const Tensor<float>& b) {
    double m = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::fabs(static_cast<double>(a.data()[i]) - b.data()[i]));
    return m;
}

} // namespace

TEST_SUITE_BEGIN("network");

TEST_CASE("variant parsing") {
    CHECK(variant_from_string("M0") == Variant::M0);
    CHECK(variant_from_string("m7") == Variant::M7);
    CHECK(variant_from_string("full") == Variant::M2);
    CHECK_THROWS_AS(variant_from_string("M10"), UsageError);
    CHECK(to_string(Variant::M3) == "M3");
}

TEST_CASE("parameter counts are ordered across the ablation family") {
    const auto m0 = param_count(Variant::M0);
    const auto m1 = param_count(Variant::M1);
    const auto m2 = param_count(Variant::M2);
    CHECK(m0 < m1);
    CHECK(m1 < m2);
    CHECK(param_count(Variant::M4) < m1); // one shared path
    CHECK(param_count(Variant::M5) < m1); // graph branch removed
    CHECK(param_count(Variant::M3) == m1);
    CHECK(param_count(Variant::M6) < m2);
    CHECK(param_count(Variant::M7) < m2);
    CHECK(param_count(Variant::M8) < m2);
    CHECK(param_count(Variant::M9) < m2);
    CHECK(param_count(Variant::M6) < param_count(Variant::M9));
}

TEST_CASE("same seed and config give identical initial parameters") {
    auto a = build_model<float>(ModelConfig::for_variant(Variant::M2), 123);
    auto b = build_model<float>(ModelConfig::for_variant(Variant::M2), 123);
    REQUIRE(a.params.entries().size() == b.params.entries().size());
    for (const auto& [name, e] : a.params.entries()) {
        auto t = b.params.get(name);
        for (std::int64_t i = 0; i < t.numel(); ++i) CHECK(t.data()[i] == e.tensor.data()[i]);
    }
    auto c = build_model<float>(ModelConfig::for_variant(Variant::M2), 124);
    bool any_diff = false;
    for (const auto& [name, e] : a.params.entries()) {
        auto t = c.params.get(name);
        for (std::int64_t i = 0; i < t.numel() && !any_diff; ++i)
            any_diff = t.data()[i] != e.tensor.data()[i];
    }
    CHECK(any_diff);
}

TEST_CASE("forward_scene: N views in, N tanh-bounded outputs out") {
    auto batch = make_batch(3, 16, 5);
    auto model = build_model<float>(ModelConfig::for_variant(Variant::M2), 1);
    auto out = forward_scene(model, batch);
    REQUIRE(out.size() == 3);
    for (const auto& y : out) {
        REQUIRE(y.shape() == Shape{3, 16, 16});
        for (std::int64_t i = 0; i < y.numel(); ++i) {
            CHECK(y.data()[i] >= -1.0f);
            CHECK(y.data()[i] <= 1.0f);
        }
    }
}

TEST_CASE("full model is equivariant under view permutation") {
    auto batch = make_batch(4, 16, 9);
    auto model = build_model<float>(ModelConfig::for_variant(Variant::M2), 2);
    auto out = forward_scene(model, batch);

    imaging::SceneBatch permuted = batch;
    const int perm[4] = {2, 0, 3, 1};
    for (int i = 0; i < 4; ++i) permuted.views[static_cast<size_t>(i)] = batch.views[static_cast<size_t>(perm[i])];
    auto out_p = forward_scene(model, permuted);
    for (int i = 0; i < 4; ++i)
        CHECK(max_abs_dev(out_p[static_cast<size_t>(i)], out[static_cast<size_t>(perm[i])]) < 1e-5);
}

TEST_CASE("M0 ignores companion views entirely") {
    auto batch = make_batch(2, 16, 11);
    auto model = build_model<float>(ModelConfig::for_variant(Variant::M0), 3);
    auto out_pair = forward_scene(model, batch);

    imaging::SceneBatch dup = batch;
    dup.views[1] = batch.views[0]; // duplicate the first view
    auto out_dup = forward_scene(model, dup);
    CHECK(max_abs_dev(out_dup[0], out_pair[0]) == 0.0);

    imaging::SceneBatch solo = batch;
    solo.views.resize(1);
    auto out_solo = forward_scene(model, solo);
    CHECK(max_abs_dev(out_solo[0], out_pair[0]) == 0.0);
}

TEST_CASE("M3 clusters intensity and runs without stored depth") {
    auto batch = make_batch(2, 16, 13);
    for (auto& v : batch.views) v.depth.reset(); // no depth anywhere
    auto model = build_model<float>(ModelConfig::for_variant(Variant::M3), 4);
    auto out = forward_scene(model, batch);
    CHECK(out.size() == 2);

    // M1 with the ground-truth provider must reject the same data
    auto m1 = build_model<float>(ModelConfig::for_variant(Variant::M1), 4);
    CHECK_THROWS_AS(forward_scene(m1, batch), DataError);
}

TEST_CASE("every variant runs forward on a small scene") {
    auto batch = make_batch(2, 16, 17);
    for (int v = 0; v <= 9; ++v) {
        auto model = build_model<float>(ModelConfig::for_variant(static_cast<Variant>(v)), 5);
        auto out = forward_scene(model, batch);
        CHECK(out.size() == 2);
        for (const auto& y : out) CHECK(y.shape() == Shape{3, 16, 16});
    }
}

TEST_CASE("checkpoint round-trip restores parameters and config exactly") {
    auto model = build_model<float>(ModelConfig::for_variant(Variant::M9), 21);
    const auto dir = std::filesystem::temp_directory_path() / "uierl_ckpt_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "m.ckpt";

    TrainStateBlob blob;
    blob.adam_m.assign(static_cast<size_t>(model.params.total_params()), 0.25);
    blob.adam_v.assign(static_cast<size_t>(model.params.total_params()), 0.5);
    blob.adam_step = 77;
    blob.iteration = 42;
    blob.rng_state = {1, 2, 3, 4};
    save_checkpoint(path, model, R"({"note":"run"})", &blob);

    std::string extra;
    TrainStateBlob got;
    auto loaded = load_checkpoint<float>(path, &extra, &got);
    CHECK(loaded.config.variant == Variant::M9);
    CHECK(extra.find("note") != std::string::npos);
    CHECK(got.adam_step == 77);
    CHECK(got.iteration == 42);
    CHECK(got.rng_state == std::array<std::uint64_t, 4>{1, 2, 3, 4});
    for (const auto& [name, e] : model.params.entries()) {
        auto t = loaded.params.get(name);
        for (std::int64_t i = 0; i < t.numel(); ++i) CHECK(t.data()[i] == e.tensor.data()[i]);
        CHECK(loaded.params.entries().at(name).init == e.init);
    }

    // outputs agree bit-for-bit
    auto batch = make_batch(2, 16, 23);
    auto y1 = forward_scene(model, batch);
    auto y2 = forward_scene(loaded, batch);
    for (size_t i = 0; i < y1.size(); ++i) CHECK(max_abs_dev(y1[i], y2[i]) == 0.0);

    // corruption is caught by the checksum
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(200);
        char b = 0x5a;
        f.write(&b, 1);
    }
    CHECK_THROWS_AS(load_checkpoint<float>(path), DataError);
}

TEST_CASE("gradients flow through every variant on a 2-view 16x16 scene") {
    // doubles here: the finite-difference probe needs the precision
    auto batch = make_batch(2, 16, 29);
    for (int vi : {0, 2, 9}) {
        auto model = build_model<double>(ModelConfig::for_variant(static_cast<Variant>(vi)), 6);
        std::vector<Tensor<double>> views;
        std::vector<regionseg::RegionMasks> masks;
        for (const auto& v : batch.views) {
            views.push_back(imaging::to_network_range(v.degraded));
            if (model.internal_stage) masks.push_back(masks_for_view(model, v));
        }
        std::vector<Tensor<double>> refs;
        for (const auto& v : batch.views) refs.push_back(imaging::to_network_range(*v.reference));

        Rng rng(31);
        auto f = [&]() {
            auto out = forward_views(model, views, masks);
            auto loss = op::l1(out[0], refs[0]);
            for (size_t i = 1; i < out.size(); ++i)
                loss = op::add(loss, op::l1(out[i], refs[i]));
            return op::scale(loss, 1.0 / static_cast<double>(out.size()));
        };
        auto rep = grad_check<double>(f, model.params, 1e-4, 1e-3, 1, rng, /*max_params=*/40);
        INFO("variant M" << vi << ": " << rep.summary());
        CHECK(rep.pass);
    }
}

TEST_SUITE_END();
