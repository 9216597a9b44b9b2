#pragma once

#include <vector>

#include "uierl/blocks.hpp"

namespace uierl::interact {

// Parameters for one interaction instance: the concatenation fusion unit, the
// channel-gate bottleneck (squeeze ratio 4) and the pixel-gate bottleneck.
// The pixel gate's residual adds the fusion feature; pli_residual_cli flips
// it to the channel-gated feature instead.
template <typename T>
struct InteractionParams {
    nn::ConvUnit<T> fli_unit; // 128 -> 64, Conv-IN-ReLU
    nn::ConvUnit<T> cli_pre;  // 64 -> 64, Conv-ReLU (no norm)
    Tensor<T> cli_squeeze_w, cli_squeeze_b; // 1x1 64 -> 16
    Tensor<T> cli_excite_w, cli_excite_b;   // 1x1 16 -> 64
    Tensor<T> pli_reduce_w, pli_reduce_b;   // 1x1 64 -> 16
    Tensor<T> pli_expand_w, pli_expand_b;   // 1x1 16 -> 64
    bool cli_enabled = true;
    bool pli_enabled = true;
    bool pli_residual_cli = false;

    static InteractionParams make(ParamStore<T>& ps, const std::string& prefix, Rng& rng,
                                  bool cli_enabled = true, bool pli_enabled = true,
                                  bool pli_residual_cli = false);
};

// N-invariant scene aggregation: permutation-invariant mean followed by a 1x1
// Conv-IN-ReLU transform.
template <typename T>
struct AggregateParams {
    nn::ConvUnit<T> transform; // 1x1 64 -> 64
    static AggregateParams make(ParamStore<T>& ps, const std::string& prefix, Rng& rng);
};

// Feature-level interaction: channel concat of (first, second), then one
// Conv-IN-ReLU unit back to 64 channels. Concatenation order follows the
// argument order; both module instantiations put the external feature first.
template <typename T>
Tensor<T> fli(const Tensor<T>& first, const Tensor<T>& second, const InteractionParams<T>& p);

// Channel-level interaction: squeeze-excite gate on the fused feature plus a
// residual of the fused feature itself.
template <typename T>
Tensor<T> cli(const Tensor<T>& f_fli, const InteractionParams<T>& p);

// Pixel-level interaction: per-pixel per-channel gate on the channel-gated
// feature; the residual adds the fusion feature.
template <typename T>
Tensor<T> pli(const Tensor<T>& f_cli, const Tensor<T>& f_fli, const InteractionParams<T>& p);

// External-assist-internal: updates one per-image feature with the external
// feature through the three interaction steps.
template <typename T>
Tensor<T> eai(const Tensor<T>& external, const Tensor<T>& internal_i,
              const InteractionParams<T>& p);

template <typename T>
Tensor<T> aggregate_scene(const std::vector<Tensor<T>>& features, const AggregateParams<T>& p);

// Internal-assist-external: aggregates the N per-image features and updates
// the external feature through the same three steps.
template <typename T>
Tensor<T> iae(const std::vector<Tensor<T>>& internal_features, const Tensor<T>& external,
              const InteractionParams<T>& p, const AggregateParams<T>& agg);

#define UIERL_INTERACT_EXTERN(T)                                                                   \
    extern template struct InteractionParams<T>;                                                   \
    extern template struct AggregateParams<T>;                                                     \
    extern template Tensor<T> fli<T>(const Tensor<T>&, const Tensor<T>&,                           \
                                     const InteractionParams<T>&);                                 \
    extern template Tensor<T> cli<T>(const Tensor<T>&, const InteractionParams<T>&);               \
    extern template Tensor<T> pli<T>(const Tensor<T>&, const Tensor<T>&,                           \
                                     const InteractionParams<T>&);                                 \
    extern template Tensor<T> eai<T>(const Tensor<T>&, const Tensor<T>&,                           \
                                     const InteractionParams<T>&);                                 \
    extern template Tensor<T> aggregate_scene<T>(const std::vector<Tensor<T>>&,                    \
                                                 const AggregateParams<T>&);                       \
    extern template Tensor<T> iae<T>(const std::vector<Tensor<T>>&, const Tensor<T>&,              \
                                     const InteractionParams<T>&, const AggregateParams<T>&);

UIERL_INTERACT_EXTERN(float)
UIERL_INTERACT_EXTERN(double)
#undef UIERL_INTERACT_EXTERN

} // namespace uierl::interact
