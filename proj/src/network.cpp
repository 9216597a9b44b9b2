#include "uierl/network.hpp"

#include <cstring>
#include <fstream>
#include <zlib.h>

#include <json.hpp>

namespace uierl::network {

namespace op = uierl::ops;
using json = nlohmann::json;

Variant variant_from_string(const std::string& s) {
    if (s == "full" || s == "FULL" || s == "Full") return Variant::M2;
    if (s.size() == 2 && (s[0] == 'M' || s[0] == 'm') && s[1] >= '0' && s[1] <= '9')
        return static_cast<Variant>(s[1] - '0');
    throw UsageError("unknown model variant '" + s + "' (expected M0..M9 or full)");
}

std::string to_string(Variant v) { return "M" + std::to_string(static_cast<int>(v)); }

ModelConfig ModelConfig::for_variant(Variant v) {
    ModelConfig c;
    c.variant = v;
    switch (v) {
    case Variant::M0:
        c.use_drfg = false;
        c.use_external_stage = false;
        break;
    case Variant::M1:
        c.use_external_stage = false;
        break;
    case Variant::M2:
        break;
    case Variant::M3:
        c.use_external_stage = false;
        c.use_depth_segmentation = false;
        break;
    case Variant::M4:
        c.use_external_stage = false;
        c.use_regionwise_paths = false;
        break;
    case Variant::M5:
        c.use_external_stage = false;
        c.use_graph_branch = false;
        break;
    case Variant::M6:
        c.use_eai = false;
        c.use_iae = false;
        break;
    case Variant::M7:
        c.use_iae = false;
        break;
    case Variant::M8:
        c.use_eai = false;
        break;
    case Variant::M9:
        c.pli_enabled = false;
        break;
    }
    return c;
}

std::string ModelConfig::to_json() const {
    json j{{"variant", network::to_string(variant)},
           {"base_channels", base_channels},
           {"unet_scales", unet_scales},
           {"regions_k", regions_k},
           {"use_drfg", use_drfg},
           {"use_external_stage", use_external_stage},
           {"use_depth_segmentation", use_depth_segmentation},
           {"use_regionwise_paths", use_regionwise_paths},
           {"use_graph_branch", use_graph_branch},
           {"use_eai", use_eai},
           {"use_iae", use_iae},
           {"cli_enabled", cli_enabled},
           {"pli_enabled", pli_enabled},
           {"pli_residual_cli", pli_residual_cli},
           {"depth_provider", imaging::to_string(depth_provider)},
           {"perceptual", perceptual},
           {"seed", seed}};
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& s) {
    const json j = json::parse(s);
    ModelConfig c;
    c.variant = variant_from_string(j.at("variant").get<std::string>());
    c.base_channels = j.value("base_channels", 64);
    c.unet_scales = j.value("unet_scales", 3);
    c.regions_k = j.value("regions_k", 3);
    c.use_drfg = j.value("use_drfg", true);
    c.use_external_stage = j.value("use_external_stage", true);
    c.use_depth_segmentation = j.value("use_depth_segmentation", true);
    c.use_regionwise_paths = j.value("use_regionwise_paths", true);
    c.use_graph_branch = j.value("use_graph_branch", true);
    c.use_eai = j.value("use_eai", true);
    c.use_iae = j.value("use_iae", true);
    c.cli_enabled = j.value("cli_enabled", true);
    c.pli_enabled = j.value("pli_enabled", true);
    c.pli_residual_cli = j.value("pli_residual_cli", false);
    c.depth_provider = imaging::depth_provider_from_string(j.value("depth_provider", "ground_truth"));
    c.perceptual = j.value("perceptual", "fixed_random_pyramid");
    c.seed = j.value("seed", 0ULL);
    return c;
}

template <typename T>
DenseBlock<T> DenseBlock<T>::make(ParamStore<T>& ps, const std::string& prefix, Rng& rng) {
    DenseBlock<T> b;
    b.l0 = nn::ConvUnit<T>::make(ps, prefix + "/l0", 64, 64, 3, rng);
    b.l1 = nn::ConvUnit<T>::make(ps, prefix + "/l1", 128, 64, 3, rng);
    b.l2 = nn::ConvUnit<T>::make(ps, prefix + "/l2", 192, 64, 3, rng);
    return b;
}

template <typename T>
Tensor<T> DenseBlock<T>::forward(const Tensor<T>& x) const {
    auto y0 = l0.forward(x);
    auto y1 = l1.forward(op::concat<T>({x, y0}, 0));
    return l2.forward(op::concat<T>({x, y0, y1}, 0));
}

template <typename T>
DenseUnet<T> DenseUnet<T>::make(ParamStore<T>& ps, const std::string& prefix, Rng& rng) {
    DenseUnet<T> u;
    u.enc1 = DenseBlock<T>::make(ps, prefix + "/enc1", rng);
    u.down1 = nn::ConvUnit<T>::make(ps, prefix + "/down1", 64, 64, 3, rng, /*stride=*/2,
                                    /*in=*/false, /*relu=*/false);
    u.enc2 = DenseBlock<T>::make(ps, prefix + "/enc2", rng);
    u.down2 = nn::ConvUnit<T>::make(ps, prefix + "/down2", 64, 64, 3, rng, /*stride=*/2,
                                    /*in=*/false, /*relu=*/false);
    u.bottleneck = DenseBlock<T>::make(ps, prefix + "/bottleneck", rng);
    u.up2 = nn::ConvUnit<T>::make(ps, prefix + "/up2", 64, 64, 1, rng, /*stride=*/1,
                                  /*in=*/false, /*relu=*/false);
    u.skip2 = nn::ConvUnit<T>::make(ps, prefix + "/skip2", 128, 64, 1, rng, /*stride=*/1,
                                    /*in=*/false, /*relu=*/false);
    u.dec2 = DenseBlock<T>::make(ps, prefix + "/dec2", rng);
    u.up1 = nn::ConvUnit<T>::make(ps, prefix + "/up1", 64, 64, 1, rng, /*stride=*/1,
                                  /*in=*/false, /*relu=*/false);
    u.skip1 = nn::ConvUnit<T>::make(ps, prefix + "/skip1", 128, 64, 1, rng, /*stride=*/1,
                                    /*in=*/false, /*relu=*/false);
    u.dec1 = DenseBlock<T>::make(ps, prefix + "/dec1", rng);
    return u;
}

template <typename T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed) {
    Model<T> m;
    m.config = config;
    m.config.seed = seed;
    Rng rng(seed);
    if (config.use_drfg) {
        m.internal_stage = drfg::DrfgParams<T>::make(m.params, "drfg", rng, config.regions_k,
                                                     config.use_regionwise_paths,
                                                     config.use_graph_branch);
    } else {
        m.stem0 = nn::ConvUnit<T>::make(m.params, "stem/conv0", 3, 64, 3, rng);
        m.stem1 = nn::ConvUnit<T>::make(m.params, "stem/conv1", 64, 64, 3, rng);
    }
    m.iien = DenseUnet<T>::make(m.params, "iien", rng);
    m.head = nn::ConvUnit<T>::make(m.params, "head", 64, 3, 3, rng, /*stride=*/1, /*in=*/false,
                                   /*relu=*/false);
    if (config.use_external_stage) {
        m.scene_transform = interact::AggregateParams<T>::make(m.params, "scene_transform", rng);
        m.eien = DenseUnet<T>::make(m.params, "eien", rng);
        for (int i = 0; i < 5; ++i)
            m.eai_points.push_back(interact::InteractionParams<T>::make(
                m.params, "eai" + std::to_string(i), rng, config.use_eai && config.cli_enabled,
                config.use_eai && config.pli_enabled, config.pli_residual_cli));
        for (int i = 0; i < 4; ++i) {
            m.iae_points.push_back(interact::InteractionParams<T>::make(
                m.params, "iae" + std::to_string(i), rng, config.use_iae && config.cli_enabled,
                config.use_iae && config.pli_enabled, config.pli_residual_cli));
            m.iae_aggs.push_back(
                interact::AggregateParams<T>::make(m.params, "iae_agg" + std::to_string(i), rng));
        }
    }
    return m;
}

template <typename T>
regionseg::RegionMasks masks_for_view(const Model<T>& model, const imaging::SceneView& view) {
    const auto& cfg = model.config;
    if (cfg.use_depth_segmentation) {
        auto depth = imaging::estimate_depth(view, cfg.depth_provider);
        return regionseg::kmeans_depth(depth, cfg.regions_k);
    }
    // cluster the gray intensity of the degraded input instead
    const int h = view.degraded.dim(1), w = view.degraded.dim(2);
    const std::int64_t m = static_cast<std::int64_t>(h) * w;
    std::vector<double> gray(static_cast<size_t>(m));
    for (std::int64_t i = 0; i < m; ++i)
        gray[static_cast<size_t>(i)] =
            (view.degraded.data()[i] + view.degraded.data()[m + i] + view.degraded.data()[2 * m + i]) / 3.0;
    return regionseg::kmeans_depth(imaging::Raster::from({1, h, w}, std::move(gray)), cfg.regions_k);
}

namespace {

template <typename T>
Tensor<T> front_end(const Model<T>& model, const Tensor<T>& x, const regionseg::RegionMasks* masks) {
    if (model.internal_stage) {
        if (!masks) throw UsageError("forward: internal stage requires region masks");
        return drfg::drfg_forward(x, *masks, *model.internal_stage);
    }
    return model.stem1->forward(model.stem0->forward(x));
}

template <typename T>
struct StageRunner {
    const Model<T>& model;
    const bool external;
    Tensor<T> e; // running EIEN feature
    std::vector<Tensor<T>> f; // running IIEN features

    // EAI on each per-image feature with the current external feature, then
    // IAE updating the external feature from the refreshed internal ones.
    void interact_at(int point) {
        if (!external) return;
        const auto& ep = model.eai_points[static_cast<size_t>(point)];
        for (auto& fi : f) fi = interact::eai(e, fi, ep);
        if (point < 4)
            e = interact::iae(f, e, model.iae_points[static_cast<size_t>(point)],
                              model.iae_aggs[static_cast<size_t>(point)]);
    }
};

} // namespace

template <typename T>
std::vector<Tensor<T>> forward_views(const Model<T>& model, const std::vector<Tensor<T>>& views,
                                     const std::vector<regionseg::RegionMasks>& masks) {
    if (views.empty()) throw UsageError("forward_views: empty scene");
    for (const auto& v : views)
        if (!v.defined() || v.ndim() != 3 || v.dim(0) != 3)
            throw UsageError("forward_views: views must be 3xHxW");
    const bool external = model.config.use_external_stage;
    const size_t n = views.size();

    std::vector<Tensor<T>> feats(n);
    for (size_t i = 0; i < n; ++i)
        feats[i] = front_end(model, views[i],
                             model.internal_stage ? &masks.at(i) : nullptr);

    StageRunner<T> run{model, external, {}, {}};
    if (external) run.e = model.eien->enc1.forward(
        interact::aggregate_scene(feats, *model.scene_transform));
    run.f.resize(n);
    for (size_t i = 0; i < n; ++i) run.f[i] = model.iien.enc1.forward(feats[i]);
    run.interact_at(0);
    auto e1 = run.e;
    auto f1 = run.f;

    if (external) run.e = model.eien->enc2.forward(model.eien->down1.forward(run.e));
    for (size_t i = 0; i < n; ++i)
        run.f[i] = model.iien.enc2.forward(model.iien.down1.forward(run.f[i]));
    run.interact_at(1);
    auto e2 = run.e;
    auto f2 = run.f;

    if (external) run.e = model.eien->bottleneck.forward(model.eien->down2.forward(run.e));
    for (size_t i = 0; i < n; ++i)
        run.f[i] = model.iien.bottleneck.forward(model.iien.down2.forward(run.f[i]));
    run.interact_at(2);

    // decoder scale 2
    if (external) {
        auto up = model.eien->up2.forward(
            op::bilinear_upsample(run.e, e2.dim(1), e2.dim(2)));
        run.e = model.eien->dec2.forward(
            model.eien->skip2.forward(op::concat<T>({up, e2}, 0)));
    }
    for (size_t i = 0; i < n; ++i) {
        auto up = model.iien.up2.forward(
            op::bilinear_upsample(run.f[i], f2[i].dim(1), f2[i].dim(2)));
        run.f[i] = model.iien.dec2.forward(
            model.iien.skip2.forward(op::concat<T>({up, f2[i]}, 0)));
    }
    run.interact_at(3);

    // decoder scale 1
    if (external) {
        auto up = model.eien->up1.forward(
            op::bilinear_upsample(run.e, e1.dim(1), e1.dim(2)));
        run.e = model.eien->dec1.forward(
            model.eien->skip1.forward(op::concat<T>({up, e1}, 0)));
    }
    for (size_t i = 0; i < n; ++i) {
        auto up = model.iien.up1.forward(
            op::bilinear_upsample(run.f[i], f1[i].dim(1), f1[i].dim(2)));
        run.f[i] = model.iien.dec1.forward(
            model.iien.skip1.forward(op::concat<T>({up, f1[i]}, 0)));
    }
    run.interact_at(4); // EAI only at the last point

    std::vector<Tensor<T>> out(n);
    for (size_t i = 0; i < n; ++i)
        out[i] = op::tanh(op::conv2d(run.f[i], model.head.w, model.head.b));
    return out;
}

template <typename T>
std::vector<Tensor<T>> forward_scene(const Model<T>& model, const imaging::SceneBatch& batch) {
    batch.validate();
    std::vector<Tensor<T>> views;
    std::vector<regionseg::RegionMasks> masks;
    for (const auto& v : batch.views) {
        auto net = imaging::to_network_range(v.degraded);
        std::vector<T> data(net.vec().size());
        for (size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(net.data()[i]);
        views.push_back(Tensor<T>::from(net.shape(), std::move(data)));
        if (model.internal_stage) masks.push_back(masks_for_view(model, v));
    }
    return forward_views(model, views, masks);
}

// ---- checkpoint format --------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'U', 'I', 'E', 'R', 'L', 'C', 'K', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}
void put_bytes(std::vector<std::uint8_t>& out, const void* p, size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
}

struct Reader {
    const std::vector<std::uint8_t>& buf;
    size_t pos = 0;
    void need(size_t n) const {
        if (pos + n > buf.size()) throw DataError("checkpoint: truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
};

} // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model,
                     const std::string& extra_config_json, const TrainStateBlob* train) {
    std::vector<std::uint8_t> out;
    put_bytes(out, kMagic, 8);
    put_u32(out, 1); // version
    put_u32(out, static_cast<std::uint32_t>(sizeof(T)));

    json cfg;
    cfg["model"] = json::parse(model.config.to_json());
    if (!extra_config_json.empty()) cfg["run"] = json::parse(extra_config_json);
    const std::string cfg_str = cfg.dump();
    put_u64(out, cfg_str.size());
    put_bytes(out, cfg_str.data(), cfg_str.size());

    const auto& entries = model.params.entries();
    put_u64(out, entries.size());
    for (const auto& [name, e] : entries) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        put_bytes(out, name.data(), name.size());
        put_u32(out, static_cast<std::uint32_t>(e.init.size()));
        put_bytes(out, e.init.data(), e.init.size());
        put_u32(out, static_cast<std::uint32_t>(e.tensor.shape().size()));
        for (int d : e.tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
        for (std::int64_t i = 0; i < e.tensor.numel(); ++i)
            put_f64(out, static_cast<double>(e.tensor.data()[i]));
    }

    out.push_back(train ? 1 : 0);
    if (train) {
        put_u64(out, train->adam_m.size());
        for (double v : train->adam_m) put_f64(out, v);
        for (double v : train->adam_v) put_f64(out, v);
        put_u64(out, static_cast<std::uint64_t>(train->adam_step));
        put_u64(out, static_cast<std::uint64_t>(train->iteration));
        for (auto s : train->rng_state) put_u64(out, s);
    }

    const auto crc = crc32(0, out.data() + 8, static_cast<uInt>(out.size() - 8));
    put_u32(out, static_cast<std::uint32_t>(crc));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write checkpoint '" + path.string() + "'");
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("short write to checkpoint '" + path.string() + "'");
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, std::string* extra_config_json,
                         TrainStateBlob* train) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint '" + path.string() + "'");
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
    if (buf.size() < 16 || std::memcmp(buf.data(), kMagic, 8) != 0)
        throw DataError("'" + path.string() + "' is not a checkpoint file");
    const std::uint32_t stored = static_cast<std::uint32_t>(buf[buf.size() - 4]) |
                                 (static_cast<std::uint32_t>(buf[buf.size() - 3]) << 8) |
                                 (static_cast<std::uint32_t>(buf[buf.size() - 2]) << 16) |
                                 (static_cast<std::uint32_t>(buf[buf.size() - 1]) << 24);
    const auto computed = static_cast<std::uint32_t>(
        crc32(0, buf.data() + 8, static_cast<uInt>(buf.size() - 12)));
    if (stored != computed)
        throw DataError("checkpoint '" + path.string() + "' failed its content checksum");

    Reader r{buf, 8};
    const std::uint32_t version = r.u32();
    if (version != 1)
        throw DataError("checkpoint version " + std::to_string(version) + " not supported");
    r.u32(); // scalar size used by the writer; data is stored as f64 regardless

    const std::uint64_t cfg_len = r.u64();
    const std::string cfg_str = r.str(cfg_len);
    const json cfg = json::parse(cfg_str);
    if (extra_config_json)
        *extra_config_json = cfg.contains("run") ? cfg["run"].dump() : std::string{};

    auto model = build_model<T>(ModelConfig::from_json(cfg.at("model").dump()),
                                cfg.at("model").value("seed", 0ULL));

    const std::uint64_t n_params = r.u64();
    if (n_params != model.params.entries().size())
        throw DataError("checkpoint parameter count mismatch: file has " +
                        std::to_string(n_params) + ", model expects " +
                        std::to_string(model.params.entries().size()));
    for (std::uint64_t pi = 0; pi < n_params; ++pi) {
        const std::string name = r.str(r.u32());
        r.str(r.u32()); // initializer id (informational)
        const std::uint32_t nd = r.u32();
        Shape shape(nd);
        for (auto& d : shape) d = static_cast<int>(r.u32());
        if (!model.params.has(name))
            throw DataError("checkpoint parameter '" + name + "' unknown to this model");
        auto t = model.params.get(name);
        if (t.shape() != shape)
            throw DataError("checkpoint parameter '" + name + "' shape " + shape_str(shape) +
                            " vs model " + shape_str(t.shape()));
        for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<T>(r.f64());
    }

    r.need(1);
    const bool has_train = buf[r.pos++] != 0;
    if (has_train) {
        TrainStateBlob blob;
        const std::uint64_t n = r.u64();
        blob.adam_m.resize(n);
        for (auto& v : blob.adam_m) v = r.f64();
        blob.adam_v.resize(n);
        for (auto& v : blob.adam_v) v = r.f64();
        blob.adam_step = static_cast<std::int64_t>(r.u64());
        blob.iteration = static_cast<std::int64_t>(r.u64());
        for (auto& s : blob.rng_state) s = r.u64();
        if (train) *train = std::move(blob);
    } else if (train) {
        *train = TrainStateBlob{};
    }
    return model;
}

#define UIERL_NETWORK_INSTANTIATE(T)                                                               \
    template struct DenseBlock<T>;                                                                 \
    template struct DenseUnet<T>;                                                                  \
    template Model<T> build_model<T>(const ModelConfig&, std::uint64_t);                           \
    template regionseg::RegionMasks masks_for_view<T>(const Model<T>&, const imaging::SceneView&); \
    template std::vector<Tensor<T>> forward_views<T>(const Model<T>&,                              \
                                                     const std::vector<Tensor<T>>&,                \
                                                     const std::vector<regionseg::RegionMasks>&);  \
    template std::vector<Tensor<T>> forward_scene<T>(const Model<T>&, const imaging::SceneBatch&); \
    template void save_checkpoint<T>(const std::filesystem::path&, const Model<T>&,                \
                                     const std::string&, const TrainStateBlob*);                   \
    template Model<T> load_checkpoint<T>(const std::filesystem::path&, std::string*,               \
                                         TrainStateBlob*);

UIERL_NETWORK_INSTANTIATE(float)
UIERL_NETWORK_INSTANTIATE(double)

} // namespace uierl::network
