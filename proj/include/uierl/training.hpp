#pragma once

#include <filesystem>
#include <functional>

#include "uierl/network.hpp"

namespace uierl::training {

struct TrainConfig {
    double learning_rate = 1e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double lambda1 = 0.8;
    double lambda2 = 0.2;
    std::int64_t iterations = 2000;
    int input_size = 64;
    bool aug_hflip = true;
    bool aug_rot90 = true;
    std::string perceptual_extractor = "fixed_random_pyramid";
    std::uint64_t seed = 0;
    std::int64_t checkpoint_every = 500;
    // stop as soon as the per-iteration content loss drops below this (<= 0
    // disables); the iteration budget is unchanged
    double early_stop_content = 0.0;

    void validate() const;
};

// Frozen feature extractor for the perceptual loss. The default is a
// seed-fixed random conv pyramid (3 stride-2 Conv+ReLU stages, 3->16->32->64);
// `custom` is the hook for an externally supplied extractor.
template <typename T>
struct PerceptualExtractor {
    std::vector<Tensor<T>> ws, bs; // frozen weights, never trained
    std::function<Tensor<T>(const Tensor<T>&)> custom;

    static PerceptualExtractor make_fixed_random(std::uint64_t seed);
    static PerceptualExtractor make(const std::string& id, std::uint64_t seed);
    Tensor<T> forward(const Tensor<T>& img) const;
};

// (1/N) sum_n mean|out_n - ref_n|
template <typename T>
Tensor<T> content_loss(const std::vector<Tensor<T>>& outputs, const std::vector<Tensor<T>>& refs);

// (1/N) sum_n sqrt(mean (phi(out_n) - phi(ref_n))^2)
template <typename T>
Tensor<T> perceptual_loss(const std::vector<Tensor<T>>& outputs, const std::vector<Tensor<T>>& refs,
                          const PerceptualExtractor<T>& extractor);

// lambda1 * L1 + lambda2 * Lper; the perceptual term is skipped entirely when
// lambda2 is zero
template <typename T>
Tensor<T> total_loss(const std::vector<Tensor<T>>& outputs, const std::vector<Tensor<T>>& refs,
                     const PerceptualExtractor<T>& extractor, double lambda1, double lambda2);

// One flip decision and one quarter-turn count per scene, applied identically
// to every view, reference and depth map. Non-square scenes only draw
// half-turns.
imaging::SceneBatch augment(const imaging::SceneBatch& batch, Rng& rng, bool hflip, bool rot90);

template <typename T>
struct Adam {
    double lr = 1e-4, beta1 = 0.5, beta2 = 0.999, eps = 1e-8;
    std::vector<double> m, v; // concatenated over parameters in sorted-name order
    std::int64_t t = 0;

    void init(const ParamStore<T>& params);
    void step(ParamStore<T>& params);
};

struct LossRow {
    std::int64_t iteration = 0;
    double content = 0, perceptual = 0, total = 0;
};

struct TrainResult {
    std::vector<LossRow> history;
    network::TrainStateBlob state;
    std::int64_t iterations_run = 0;
};

// Scene-batched optimization: per iteration, sample one scene uniformly,
// augment, forward the whole batch, apply Eq-style total loss over all views,
// one Adam step. Writes checkpoints at the configured cadence when a path is
// given. `resume` continues from a loaded training state.
template <typename T>
TrainResult train(const std::vector<imaging::SceneBatch>& dataset, network::Model<T>& model,
                  const TrainConfig& config,
                  const std::filesystem::path& checkpoint_path = {},
                  const std::string& run_config_json = "",
                  const network::TrainStateBlob* resume = nullptr,
                  const std::function<void(const LossRow&)>& on_iteration = nullptr);

void write_history_csv(const std::filesystem::path& path, const std::vector<LossRow>& history);

#define UIERL_TRAINING_EXTERN(T)                                                                   \
    extern template struct PerceptualExtractor<T>;                                                 \
    extern template struct Adam<T>;                                                               \
    extern template Tensor<T> content_loss<T>(const std::vector<Tensor<T>>&,                       \
                                              const std::vector<Tensor<T>>&);                      \
    extern template Tensor<T> perceptual_loss<T>(const std::vector<Tensor<T>>&,                    \
                                                 const std::vector<Tensor<T>>&,                    \
                                                 const PerceptualExtractor<T>&);                   \
    extern template Tensor<T> total_loss<T>(const std::vector<Tensor<T>>&,                         \
                                            const std::vector<Tensor<T>>&,                         \
                                            const PerceptualExtractor<T>&, double, double);        \
    extern template TrainResult train<T>(const std::vector<imaging::SceneBatch>&,                  \
                                         network::Model<T>&, const TrainConfig&,                   \
                                         const std::filesystem::path&, const std::string&,         \
                                         const network::TrainStateBlob*,                           \
                                         const std::function<void(const LossRow&)>&);

UIERL_TRAINING_EXTERN(float)
UIERL_TRAINING_EXTERN(double)
#undef UIERL_TRAINING_EXTERN

} // namespace uierl::training
