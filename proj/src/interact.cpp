#include "uierl/interact.hpp"

namespace uierl::interact {

namespace op = uierl::ops;

template <typename T>
InteractionParams<T> InteractionParams<T>::make(ParamStore<T>& ps, const std::string& prefix,
                                                Rng& rng, bool cli_enabled, bool pli_enabled,
                                                bool pli_residual_cli) {
    InteractionParams<T> p;
    p.fli_unit = nn::ConvUnit<T>::make(ps, prefix + "/fli", 128, 64, 3, rng);
    p.cli_enabled = cli_enabled;
    p.pli_enabled = pli_enabled;
    p.pli_residual_cli = pli_residual_cli;
    if (cli_enabled) {
        p.cli_pre = nn::ConvUnit<T>::make(ps, prefix + "/cli_pre", 64, 64, 3, rng,
                                          /*stride=*/1, /*in=*/false, /*relu=*/true);
        p.cli_squeeze_w = ps.create(prefix + "/cli_squeeze/weight", {16, 64, 1, 1},
                                    Init::KaimingUniform, rng);
        p.cli_squeeze_b = ps.create(prefix + "/cli_squeeze/bias", {16}, Init::Zeros, rng);
        p.cli_excite_w = ps.create(prefix + "/cli_excite/weight", {64, 16, 1, 1},
                                   Init::KaimingUniform, rng);
        p.cli_excite_b = ps.create(prefix + "/cli_excite/bias", {64}, Init::Zeros, rng);
    }
    if (pli_enabled) {
        p.pli_reduce_w = ps.create(prefix + "/pli_reduce/weight", {16, 64, 1, 1},
                                   Init::KaimingUniform, rng);
        p.pli_reduce_b = ps.create(prefix + "/pli_reduce/bias", {16}, Init::Zeros, rng);
        p.pli_expand_w = ps.create(prefix + "/pli_expand/weight", {64, 16, 1, 1},
                                   Init::KaimingUniform, rng);
        p.pli_expand_b = ps.create(prefix + "/pli_expand/bias", {64}, Init::Zeros, rng);
    }
    return p;
}

template <typename T>
AggregateParams<T> AggregateParams<T>::make(ParamStore<T>& ps, const std::string& prefix,
                                            Rng& rng) {
    AggregateParams<T> p;
    p.transform = nn::ConvUnit<T>::make(ps, prefix + "/transform", 64, 64, 1, rng);
    return p;
}

namespace {

template <typename T>
void check_feat(const Tensor<T>& x, const char* op_name) {
    if (!x.defined() || x.ndim() != 3 || x.dim(0) != 64)
        throw UsageError(std::string(op_name) + ": expected 64xhxw feature, got " +
                         (x.defined() ? shape_str(x.shape()) : "undefined"));
}

} // namespace

template <typename T>
Tensor<T> fli(const Tensor<T>& first, const Tensor<T>& second, const InteractionParams<T>& p) {
    check_feat(first, "fli");
    check_feat(second, "fli");
    if (first.dim(1) != second.dim(1) || first.dim(2) != second.dim(2))
        throw UsageError("fli: interaction point misaligned, " + shape_str(first.shape()) +
                         " vs " + shape_str(second.shape()));
    return p.fli_unit.forward(op::concat<T>({first, second}, 0));
}

template <typename T>
Tensor<T> cli(const Tensor<T>& f_fli, const InteractionParams<T>& p) {
    check_feat(f_fli, "cli");
    auto pre = p.cli_pre.forward(f_fli);
    auto pooled = op::global_avg_pool(pre);
    auto squeezed = op::relu(op::conv2d(pooled, p.cli_squeeze_w, p.cli_squeeze_b));
    auto gate = op::sigmoid(op::conv2d(squeezed, p.cli_excite_w, p.cli_excite_b)); // (64,1,1)
    return op::add(op::mul(gate, f_fli), f_fli);
}

template <typename T>
Tensor<T> pli(const Tensor<T>& f_cli, const Tensor<T>& f_fli, const InteractionParams<T>& p) {
    check_feat(f_cli, "pli");
    check_feat(f_fli, "pli");
    auto reduced = op::relu(op::conv2d(f_cli, p.pli_reduce_w, p.pli_reduce_b));
    auto gate = op::sigmoid(op::conv2d(reduced, p.pli_expand_w, p.pli_expand_b)); // (64,h,w)
    const Tensor<T>& residual = p.pli_residual_cli ? f_cli : f_fli;
    return op::add(op::mul(gate, f_cli), residual);
}

template <typename T>
Tensor<T> eai(const Tensor<T>& external, const Tensor<T>& internal_i,
              const InteractionParams<T>& p) {
    auto fused = fli(external, internal_i, p);
    auto gated = p.cli_enabled ? cli(fused, p) : fused;
    return p.pli_enabled ? pli(gated, fused, p) : gated;
}

template <typename T>
Tensor<T> aggregate_scene(const std::vector<Tensor<T>>& features, const AggregateParams<T>& p) {
    if (features.empty()) throw UsageError("aggregate_scene: empty feature list");
    for (const auto& f : features) check_feat(f, "aggregate_scene");
    return p.transform.forward(op::mean_of_list(features));
}

template <typename T>
Tensor<T> iae(const std::vector<Tensor<T>>& internal_features, const Tensor<T>& external,
              const InteractionParams<T>& p, const AggregateParams<T>& agg) {
    check_feat(external, "iae");
    auto pooled = aggregate_scene(internal_features, agg);
    auto fused = fli(external, pooled, p);
    auto gated = p.cli_enabled ? cli(fused, p) : fused;
    return p.pli_enabled ? pli(gated, fused, p) : gated;
}

#define UIERL_INTERACT_INSTANTIATE(T)                                                              \
    template struct InteractionParams<T>;                                                          \
    template struct AggregateParams<T>;                                                            \
    template Tensor<T> fli<T>(const Tensor<T>&, const Tensor<T>&, const InteractionParams<T>&);    \
    template Tensor<T> cli<T>(const Tensor<T>&, const InteractionParams<T>&);                      \
    template Tensor<T> pli<T>(const Tensor<T>&, const Tensor<T>&, const InteractionParams<T>&);    \
    template Tensor<T> eai<T>(const Tensor<T>&, const Tensor<T>&, const InteractionParams<T>&);    \
    template Tensor<T> aggregate_scene<T>(const std::vector<Tensor<T>>&,                           \
                                          const AggregateParams<T>&);                              \
    template Tensor<T> iae<T>(const std::vector<Tensor<T>>&, const Tensor<T>&,                     \
                              const InteractionParams<T>&, const AggregateParams<T>&);

UIERL_INTERACT_INSTANTIATE(float)
UIERL_INTERACT_INSTANTIATE(double)

} // namespace uierl::interact
