#pragma once

#include <filesystem>
#include <string>

#include "uierl/metrics.hpp"
#include "uierl/network.hpp"
#include "uierl/training.hpp"

namespace uierl::config {

// Whole-run configuration: sections [model], [train], [data], [metrics] in a
// key = value file (TOML subset: comments, strings, numbers, booleans).
// Every field has a default; unknown sections or keys are rejected.
struct RunConfig {
    std::uint64_t seed = 0;

    network::ModelConfig model = network::ModelConfig::for_variant(network::Variant::M2);

    training::TrainConfig train;

    struct Data {
        int n_scenes = 8;
        int views_min = 2;
        int views_max = 5;
        int image_size = 64;
        imaging::JitterSpec jitter;
    } data;

    metrics::MetricWeights metric_weights;

    static RunConfig from_file(const std::filesystem::path& path);
    static RunConfig from_string(const std::string& text);

    // canonical JSON snapshot for manifests and checkpoints
    std::string to_json() const;

    void validate() const;
};

} // namespace uierl::config
