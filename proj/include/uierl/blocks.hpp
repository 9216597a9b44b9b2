#pragma once

#include <string>

#include "uierl/ops.hpp"
#include "uierl/param_store.hpp"

namespace uierl::nn {

// Conv followed by optional instance norm and ReLU: the stacked unit the
// whole backbone is assembled from.
template <typename T>
struct ConvUnit {
    Tensor<T> w, b;
    Tensor<T> gamma, beta; // defined only when `in` is set
    int stride = 1;
    bool in = true;
    bool relu = true;

    static ConvUnit make(ParamStore<T>& ps, const std::string& prefix, int cin, int cout, int k,
                         Rng& rng, int stride = 1, bool in = true, bool relu = true) {
        ConvUnit u;
        u.w = ps.create(prefix + "/weight", {cout, cin, k, k}, Init::KaimingUniform, rng);
        u.b = ps.create(prefix + "/bias", {cout}, Init::Zeros, rng);
        if (in) {
            u.gamma = ps.create(prefix + "/in_gamma", {cout}, Init::Ones, rng);
            u.beta = ps.create(prefix + "/in_beta", {cout}, Init::Zeros, rng);
        }
        u.stride = stride;
        u.in = in;
        u.relu = relu;
        return u;
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        auto y = ops::conv2d(x, w, b, stride);
        if (in) y = ops::instance_norm(y, gamma, beta);
        if (relu) y = ops::relu(y);
        return y;
    }
};

extern template struct ConvUnit<float>;
extern template struct ConvUnit<double>;

} // namespace uierl::nn
