#pragma once

#include <vector>

#include "uierl/blocks.hpp"
#include "uierl/regionseg.hpp"

namespace uierl::drfg {

// The two-layer graph propagation normalizes each node's 64 output channels
// with a softmax; the axis choice is concentrated here.
inline constexpr int kGraphSoftmaxAxis = 1; // node matrix is (n, channels)

// One region encoder path: a two-unit initial extractor feeding a residual
// content branch and, unless disabled, a pooled graph branch whose output is
// rescaled by a 1x1 conv before the additive merge.
template <typename T>
struct EncoderPath {
    nn::ConvUnit<T> init0, init1;       // 3->64, 64->64
    nn::ConvUnit<T> content0, content1; // residual block units, 64->64
    Tensor<T> w1, w2;                   // propagation weights 64x32, 32x64
    Tensor<T> p1, p2;                   // adjacency projections 64x16, 64x16
    nn::ConvUnit<T> rescale;            // 1x1 64->64 on the graph output
    bool graph_enabled = true;

    static EncoderPath make(ParamStore<T>& ps, const std::string& prefix, Rng& rng,
                            bool graph_enabled);
};

template <typename T>
struct DrfgParams {
    std::vector<EncoderPath<T>> paths; // one per region, or a single shared one
    bool shared_path = false;
    nn::ConvUnit<T> global0, global1; // global features 3->64->64
    nn::ConvUnit<T> fusion;           // 1x1 128->64 over concat(global, regions)

    static DrfgParams make(ParamStore<T>& ps, const std::string& prefix, Rng& rng, int regions_k,
                           bool regionwise_paths, bool graph_enabled);
};

// Smallest power-of-two factor dividing both sides that brings the node count
// to at most 256 (1024 as a fallback).
int choose_graph_factor(int h, int w);

// A = sigmoid((N p1)(N p2)^T), entries in (0,1).
template <typename T>
Tensor<T> build_adjacency(const Tensor<T>& nodes, const Tensor<T>& p1, const Tensor<T>& p2);

// A_hat = D^(-1/2) (A + I) D^(-1/2)
template <typename T>
Tensor<T> normalize_adjacency(const Tensor<T>& a);

template <typename T>
Tensor<T> initial_unit(const Tensor<T>& region_image, const EncoderPath<T>& path);

template <typename T>
Tensor<T> content_branch(const Tensor<T>& f_init, const EncoderPath<T>& path);

// factor <= 0 selects choose_graph_factor.
template <typename T>
Tensor<T> graph_branch(const Tensor<T>& f_init, const EncoderPath<T>& path, int factor = 0);

template <typename T>
Tensor<T> encoder_path(const Tensor<T>& region_image, const EncoderPath<T>& path);

// Full internal stage for one image: per-region paths over the mask
// partition, spatial recombination, and fusion with the global features.
template <typename T>
Tensor<T> drfg_forward(const Tensor<T>& image, const regionseg::RegionMasks& masks,
                       const DrfgParams<T>& params);

// Convenience wrapper that clusters the depth map first.
template <typename T>
Tensor<T> drfg_forward(const Tensor<T>& image, const imaging::Raster& depth,
                       const DrfgParams<T>& params, int k = 3);

#define UIERL_DRFG_EXTERN(T)                                                                       \
    extern template struct EncoderPath<T>;                                                         \
    extern template struct DrfgParams<T>;                                                          \
    extern template Tensor<T> build_adjacency<T>(const Tensor<T>&, const Tensor<T>&,               \
                                                 const Tensor<T>&);                                \
    extern template Tensor<T> normalize_adjacency<T>(const Tensor<T>&);                            \
    extern template Tensor<T> initial_unit<T>(const Tensor<T>&, const EncoderPath<T>&);            \
    extern template Tensor<T> content_branch<T>(const Tensor<T>&, const EncoderPath<T>&);          \
    extern template Tensor<T> graph_branch<T>(const Tensor<T>&, const EncoderPath<T>&, int);       \
    extern template Tensor<T> encoder_path<T>(const Tensor<T>&, const EncoderPath<T>&);            \
    extern template Tensor<T> drfg_forward<T>(const Tensor<T>&, const regionseg::RegionMasks&,     \
                                              const DrfgParams<T>&);                               \
    extern template Tensor<T> drfg_forward<T>(const Tensor<T>&, const imaging::Raster&,            \
                                              const DrfgParams<T>&, int);

UIERL_DRFG_EXTERN(float)
UIERL_DRFG_EXTERN(double)
#undef UIERL_DRFG_EXTERN

} // namespace uierl::drfg
