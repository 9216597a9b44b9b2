#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "uierl/rng.hpp"
#include "uierl/tensor.hpp"

namespace uierl::imaging {

// Data-only double tensors: images are 3xHxW in [0,1], depths 1xHxW in [0,1]
// (relative depth, 0 = camera plane).
using Raster = Tensor<double>;

struct WaterParams {
    std::array<double, 3> beta{1.0, 0.5, 0.3};    // per-channel attenuation, (0, 10]
    std::array<double, 3> ambient{0.1, 0.5, 0.6}; // global ambient light, [0,1]
    void validate() const;
};

struct JitterSpec {
    double beta_frac = 0.05;   // multiplicative beta jitter, +-fraction
    double ambient_abs = 0.02; // additive ambient jitter, clamped to [0,1]
    double max_crop = 0.25;    // random crop of up to this fraction, resized back
    bool hflip = true;
};

struct SceneView {
    Raster degraded;
    std::optional<Raster> reference;
    std::optional<Raster> depth;
    std::optional<WaterParams> water; // exact per-view params used by the synthesizer
};

struct SceneBatch {
    std::string scene_id;
    std::vector<SceneView> views;
    WaterParams base_water{};
    JitterSpec jitter{};
    std::uint64_t seed = 0;

    int height() const;
    int width() const;
    bool has_references() const;
    void validate() const; // N >= 1, consistent sizes, references all-or-none
};

// I = J * exp(-beta d) + A * (1 - exp(-beta d)), per channel and pixel.
Raster degrade(const Raster& clean, const Raster& depth, const WaterParams& water);

// Algebraic inverse of degrade; rejects transmissions below 1e-4.
Raster restore_oracle(const Raster& degraded, const Raster& depth, const WaterParams& water);

// Manufactures a ground-truthed batch of related views: per view, jittered
// water parameters plus a random crop (resized back) and optional horizontal
// flip of the shared clean/depth pair.
SceneBatch synth_scene(const Raster& clean, const Raster& depth, const WaterParams& water,
                       int n_views, const JitterSpec& jitter, Rng& rng,
                       const std::string& scene_id = "scene");

enum class DepthProvider { GroundTruth, RedChannelPrior, Constant };
DepthProvider depth_provider_from_string(const std::string& s);
std::string to_string(DepthProvider p);

Raster estimate_depth(const SceneView& view, DepthProvider provider);

// Seeded 64x64-style procedural content: gradient background with textured
// colored shapes at distinct depths. Hermetic stand-in for real data.
struct ProceduralScene {
    Raster clean;
    Raster depth;
};
ProceduralScene procedural_scene(int h, int w, Rng& rng);
WaterParams random_water(Rng& rng);

// Geometry helpers shared by the synthesizer and augmentation.
Raster hflip(const Raster& img);
Raster rot90(const Raster& img, int k); // k quarter-turns counterclockwise
Raster crop_resize(const Raster& img, int y0, int x0, int crop_h, int crop_w, int out_h, int out_w);

// [0,1] I/O space <-> [-1,1] network space
Raster to_network_range(const Raster& img01);
Raster from_network_range(const Raster& net); // clamps to [0,1]

} // namespace uierl::imaging
