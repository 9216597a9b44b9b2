#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uierl/drfg.hpp"
#include "uierl/interact.hpp"

namespace uierl::network {

enum class Variant { M0, M1, M2, M3, M4, M5, M6, M7, M8, M9 };

Variant variant_from_string(const std::string& s); // accepts "M0".."M9" and "full"
std::string to_string(Variant v);

struct ModelConfig {
    Variant variant = Variant::M2;
    int base_channels = 64;
    int unet_scales = 3;
    int regions_k = 3;
    // interaction flags, derived from the variant by for_variant()
    bool use_drfg = true;
    bool use_external_stage = true;
    bool use_depth_segmentation = true; // false: cluster gray intensity instead
    bool use_regionwise_paths = true;   // false: one shared encoder path
    bool use_graph_branch = true;
    bool use_eai = true; // false: EAI points keep only the concat fusion
    bool use_iae = true; // false: IAE points keep only the concat fusion
    bool cli_enabled = true;
    bool pli_enabled = true;
    bool pli_residual_cli = false;
    imaging::DepthProvider depth_provider = imaging::DepthProvider::GroundTruth;
    std::string perceptual = "fixed_random_pyramid";
    std::uint64_t seed = 0;

    static ModelConfig for_variant(Variant v);
    std::string to_json() const;
    static ModelConfig from_json(const std::string& s);
};

// Three Conv-IN-ReLU layers with intra-block dense connectivity at 64
// channels; the block output is the last layer's.
template <typename T>
struct DenseBlock {
    nn::ConvUnit<T> l0, l1, l2; // 64->64, 128->64, 192->64
    static DenseBlock make(ParamStore<T>& ps, const std::string& prefix, Rng& rng);
    Tensor<T> forward(const Tensor<T>& x) const;
};

// 3-scale dense-Unet: stride-2 conv downsampling, bilinear + 1x1 conv
// upsampling, concat + 1x1 reduce skips.
template <typename T>
struct DenseUnet {
    DenseBlock<T> enc1, enc2, bottleneck, dec2, dec1;
    nn::ConvUnit<T> down1, down2; // stride-2 3x3
    nn::ConvUnit<T> up2, up1;     // 1x1 after bilinear
    nn::ConvUnit<T> skip2, skip1; // 1x1 128->64
    static DenseUnet make(ParamStore<T>& ps, const std::string& prefix, Rng& rng);
};

template <typename T>
struct Model {
    ModelConfig config;
    ParamStore<T> params;

    std::optional<drfg::DrfgParams<T>> internal_stage;    // M1+
    std::optional<nn::ConvUnit<T>> stem0, stem1;          // M0 front end
    DenseUnet<T> iien;
    nn::ConvUnit<T> head; // 3x3 64->3, tanh applied in the forward

    std::optional<DenseUnet<T>> eien;
    std::optional<interact::AggregateParams<T>> scene_transform;
    std::vector<interact::InteractionParams<T>> eai_points; // 5
    std::vector<interact::InteractionParams<T>> iae_points; // 4
    std::vector<interact::AggregateParams<T>> iae_aggs;     // 4

    Model() = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;
};

template <typename T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed);

// Region masks for one view under the configured segmentation source.
template <typename T>
regionseg::RegionMasks masks_for_view(const Model<T>& model, const imaging::SceneView& view);

// Forward on network-space inputs ([-1,1]); masks are consulted only when the
// internal stage is active. Returns one [-1,1] image per view.
template <typename T>
std::vector<Tensor<T>> forward_views(const Model<T>& model, const std::vector<Tensor<T>>& views,
                                     const std::vector<regionseg::RegionMasks>& masks);

// Full path from an I/O-space scene batch.
template <typename T>
std::vector<Tensor<T>> forward_scene(const Model<T>& model, const imaging::SceneBatch& batch);

// ---- checkpointing -----------------------------------------------------------
// Binary archive: magic, version, config JSON, named f64 parameter arrays with
// shapes, an optional training-state section, and a trailing crc32.

struct TrainStateBlob {
    std::vector<double> adam_m, adam_v; // concatenated in parameter order
    std::int64_t adam_step = 0;
    std::int64_t iteration = 0;
    std::array<std::uint64_t, 4> rng_state{};
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model,
                     const std::string& extra_config_json = "",
                     const TrainStateBlob* train = nullptr);

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, std::string* extra_config_json = nullptr,
                         TrainStateBlob* train = nullptr);

#define UIERL_NETWORK_EXTERN(T)                                                                    \
    extern template struct DenseBlock<T>;                                                          \
    extern template struct DenseUnet<T>;                                                           \
    extern template Model<T> build_model<T>(const ModelConfig&, std::uint64_t);                    \
    extern template regionseg::RegionMasks masks_for_view<T>(const Model<T>&,                      \
                                                             const imaging::SceneView&);           \
    extern template std::vector<Tensor<T>> forward_views<T>(                                       \
        const Model<T>&, const std::vector<Tensor<T>>&,                                            \
        const std::vector<regionseg::RegionMasks>&);                                               \
    extern template std::vector<Tensor<T>> forward_scene<T>(const Model<T>&,                       \
                                                            const imaging::SceneBatch&);           \
    extern template void save_checkpoint<T>(const std::filesystem::path&, const Model<T>&,         \
                                            const std::string&, const TrainStateBlob*);            \
    extern template Model<T> load_checkpoint<T>(const std::filesystem::path&, std::string*,        \
                                                TrainStateBlob*);

UIERL_NETWORK_EXTERN(float)
UIERL_NETWORK_EXTERN(double)
#undef UIERL_NETWORK_EXTERN

} // namespace uierl::network
