#include "uierl/drfg.hpp"

namespace uierl::nn {
template struct ConvUnit<float>;
template struct ConvUnit<double>;
} // namespace uierl::nn

namespace uierl::drfg {

namespace op = uierl::ops;

template <typename T>
EncoderPath<T> EncoderPath<T>::make(ParamStore<T>& ps, const std::string& prefix, Rng& rng,
                                    bool graph_enabled) {
    EncoderPath<T> p;
    p.init0 = nn::ConvUnit<T>::make(ps, prefix + "/init0", 3, 64, 3, rng);
    p.init1 = nn::ConvUnit<T>::make(ps, prefix + "/init1", 64, 64, 3, rng);
    p.content0 = nn::ConvUnit<T>::make(ps, prefix + "/content0", 64, 64, 3, rng);
    p.content1 = nn::ConvUnit<T>::make(ps, prefix + "/content1", 64, 64, 3, rng);
    p.graph_enabled = graph_enabled;
    if (graph_enabled) {
        p.w1 = ps.create(prefix + "/graph_w1", {64, 32}, Init::KaimingUniform, rng);
        p.w2 = ps.create(prefix + "/graph_w2", {32, 64}, Init::KaimingUniform, rng);
        p.p1 = ps.create(prefix + "/graph_p1", {64, 16}, Init::KaimingUniform, rng);
        p.p2 = ps.create(prefix + "/graph_p2", {64, 16}, Init::KaimingUniform, rng);
        p.rescale = nn::ConvUnit<T>::make(ps, prefix + "/graph_rescale", 64, 64, 1, rng,
                                          /*stride=*/1, /*in=*/false, /*relu=*/false);
    }
    return p;
}

template <typename T>
DrfgParams<T> DrfgParams<T>::make(ParamStore<T>& ps, const std::string& prefix, Rng& rng,
                                  int regions_k, bool regionwise_paths, bool graph_enabled) {
    DrfgParams<T> d;
    d.shared_path = !regionwise_paths;
    const int n_paths = regionwise_paths ? regions_k : 1;
    for (int i = 0; i < n_paths; ++i)
        d.paths.push_back(
            EncoderPath<T>::make(ps, prefix + "/path" + std::to_string(i), rng, graph_enabled));
    d.global0 = nn::ConvUnit<T>::make(ps, prefix + "/global0", 3, 64, 3, rng);
    d.global1 = nn::ConvUnit<T>::make(ps, prefix + "/global1", 64, 64, 3, rng);
    d.fusion = nn::ConvUnit<T>::make(ps, prefix + "/fusion", 128, 64, 1, rng);
    return d;
}

int choose_graph_factor(int h, int w) {
    for (int budget : {256, 1024}) {
        for (int f = 1; f <= std::min(h, w); f *= 2) {
            if (h % f != 0 || w % f != 0) continue;
            if ((h / f) * (w / f) <= budget) return f;
        }
    }
    throw UsageError("graph_branch: no power-of-two factor brings " + std::to_string(h) + "x" +
                     std::to_string(w) + " under the 1024-node budget; raise the factor manually");
}

template <typename T>
Tensor<T> build_adjacency(const Tensor<T>& nodes, const Tensor<T>& p1, const Tensor<T>& p2) {
    if (nodes.ndim() != 2)
        throw UsageError("build_adjacency: nodes must be (n, c), got " + shape_str(nodes.shape()));
    auto left = op::matmul(nodes, p1);
    auto right = op::matmul(nodes, p2);
    return op::sigmoid(op::matmul(left, op::transpose(right)));
}

template <typename T>
Tensor<T> normalize_adjacency(const Tensor<T>& a) {
    if (a.ndim() != 2 || a.dim(0) != a.dim(1))
        throw UsageError("normalize_adjacency: need square matrix, got " + shape_str(a.shape()));
    const int n = a.dim(0);
    for (std::int64_t i = 0; i < a.numel(); ++i)
        if (a.data()[i] < T(0)) throw UsageError("normalize_adjacency: negative entry");
    std::vector<T> eye(static_cast<size_t>(n) * n, T(0));
    for (int i = 0; i < n; ++i) eye[static_cast<size_t>(i) * n + i] = T(1);
    auto atilde = op::add(a, Tensor<T>::from({n, n}, std::move(eye)));
    auto rowsum = op::matmul(atilde, Tensor<T>::full({n, 1}, T(1))); // degrees, >= 1
    auto s = op::rsqrt(rowsum);
    return op::mul(op::mul(atilde, s), op::transpose(s));
}

template <typename T>
Tensor<T> initial_unit(const Tensor<T>& region_image, const EncoderPath<T>& path) {
    return path.init1.forward(path.init0.forward(region_image));
}

template <typename T>
Tensor<T> content_branch(const Tensor<T>& f_init, const EncoderPath<T>& path) {
    return op::add(path.content1.forward(path.content0.forward(f_init)), f_init);
}

template <typename T>
Tensor<T> graph_branch(const Tensor<T>& f_init, const EncoderPath<T>& path, int factor) {
    if (!path.graph_enabled) throw UsageError("graph_branch: disabled on this path");
    if (f_init.ndim() != 3)
        throw UsageError("graph_branch: expected CxHxW, got " + shape_str(f_init.shape()));
    const int c = f_init.dim(0), h = f_init.dim(1), w = f_init.dim(2);
    if (factor <= 0) factor = choose_graph_factor(h, w);
    if (h % factor != 0 || w % factor != 0)
        throw UsageError("graph_branch: " + std::to_string(h) + "x" + std::to_string(w) +
                         " not divisible by factor " + std::to_string(factor));
    const int hp = h / factor, wp = w / factor;
    const int n = hp * wp;
    if (n > 1024)
        throw UsageError("graph_branch: " + std::to_string(n) +
                         " nodes exceed the 1024 budget; raise the downsample factor");

    // pooling keeps both the peaks and the means of every window; factor 1
    // passes the features through untouched
    Tensor<T> down = f_init;
    if (factor > 1)
        down = op::add(op::max_pool(f_init, factor, factor), op::avg_pool(f_init, factor, factor));

    auto nodes = op::transpose(op::reshape(down, {c, n})); // (n, c)
    auto a_hat = normalize_adjacency(build_adjacency(nodes, path.p1, path.p2));
    auto h1 = op::relu(op::matmul(op::matmul(a_hat, nodes), path.w1));
    auto h2 = op::matmul(op::matmul(a_hat, h1), path.w2);
    auto soft = op::softmax(h2, kGraphSoftmaxAxis);
    auto map = op::reshape(op::transpose(soft), {c, hp, wp});
    return op::bilinear_upsample(map, h, w);
}

template <typename T>
Tensor<T> encoder_path(const Tensor<T>& region_image, const EncoderPath<T>& path) {
    auto f0 = initial_unit(region_image, path);
    auto content = content_branch(f0, path);
    if (!path.graph_enabled) return content;
    return op::add(content, path.rescale.forward(graph_branch(f0, path)));
}

template <typename T>
Tensor<T> drfg_forward(const Tensor<T>& image, const regionseg::RegionMasks& masks,
                       const DrfgParams<T>& params) {
    if (image.ndim() != 3 || image.dim(0) != 3)
        throw UsageError("drfg_forward: expected 3xHxW image, got " + shape_str(image.shape()));
    if (!params.shared_path && static_cast<int>(params.paths.size()) < masks.k())
        throw UsageError("drfg_forward: " + std::to_string(params.paths.size()) + " paths for " +
                         std::to_string(masks.k()) + " regions");
    auto regions = regionseg::extract_regions(image, masks);
    std::vector<Tensor<T>> feats(regions.size());
    for (size_t k = 0; k < regions.size(); ++k) {
        if (masks.empty[k]) continue; // skipped; recombination treats it as zero
        const auto& path = params.paths[params.shared_path ? 0 : k];
        feats[k] = encoder_path(regions[k], path);
    }
    auto combined = regionseg::combine_regions(feats, masks);
    auto global = params.global1.forward(params.global0.forward(image));
    return params.fusion.forward(op::concat<T>({global, combined}, 0));
}

template <typename T>
Tensor<T> drfg_forward(const Tensor<T>& image, const imaging::Raster& depth,
                       const DrfgParams<T>& params, int k) {
    return drfg_forward(image, regionseg::kmeans_depth(depth, k), params);
}

#define UIERL_DRFG_INSTANTIATE(T)                                                                  \
    template struct EncoderPath<T>;                                                                \
    template struct DrfgParams<T>;                                                                 \
    template Tensor<T> build_adjacency<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);   \
    template Tensor<T> normalize_adjacency<T>(const Tensor<T>&);                                   \
    template Tensor<T> initial_unit<T>(const Tensor<T>&, const EncoderPath<T>&);                   \
    template Tensor<T> content_branch<T>(const Tensor<T>&, const EncoderPath<T>&);                 \
    template Tensor<T> graph_branch<T>(const Tensor<T>&, const EncoderPath<T>&, int);              \
    template Tensor<T> encoder_path<T>(const Tensor<T>&, const EncoderPath<T>&);                   \
    template Tensor<T> drfg_forward<T>(const Tensor<T>&, const regionseg::RegionMasks&,            \
                                       const DrfgParams<T>&);                                      \
    template Tensor<T> drfg_forward<T>(const Tensor<T>&, const imaging::Raster&,                   \
                                       const DrfgParams<T>&, int);

UIERL_DRFG_INSTANTIATE(float)
UIERL_DRFG_INSTANTIATE(double)

} // namespace uierl::drfg
