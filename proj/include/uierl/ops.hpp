#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "uierl/tensor.hpp"

namespace uierl::ops {

// ---- typed primitives ------------------------------------------------------
// All image-like tensors are channels-first (C x H x W). Every op checks its
// input shapes and throws UsageError naming the op and the offending
// dimensions. Gradient tracking follows the inputs: if any input requires
// grad, the output records a backward closure.

// weight (Co,Ci,kh,kw), bias (Co) or undefined. pad < 0 selects same-padding
// ((k-1)/2, odd kernels only).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride = 1, int pad = -1);

// Per-instance, per-channel statistics with learnable affine.
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                        double eps = 1e-5);

template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> tanh(const Tensor<T>& x);

// Softmax along an explicit axis; there is deliberately no default.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, int axis);

template <typename T> Tensor<T> max_pool(const Tensor<T>& x, int kernel, int stride);
template <typename T> Tensor<T> avg_pool(const Tensor<T>& x, int kernel, int stride);
template <typename T> Tensor<T> global_avg_pool(const Tensor<T>& x); // (C,H,W) -> (C,1,1)

template <typename T> Tensor<T> bilinear_upsample(const Tensor<T>& x, int out_h, int out_w);
template <typename T> Tensor<T> nearest_upsample(const Tensor<T>& x, int factor);

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b); // 2-D
template <typename T> Tensor<T> transpose(const Tensor<T>& a);                  // 2-D

// add/mul broadcast between equal-rank shapes whose dims match or are 1.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b); // same shape
template <typename T> Tensor<T> scale(const Tensor<T>& a, double s);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, double s);
template <typename T> Tensor<T> square(const Tensor<T>& x);
template <typename T> Tensor<T> abs(const Tensor<T>& x);
template <typename T> Tensor<T> rsqrt(const Tensor<T>& x); // x must be positive

template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape target);

template <typename T> Tensor<T> mean_all(const Tensor<T>& x); // scalar
template <typename T> Tensor<T> mean_over_axis(const Tensor<T>& x, int axis); // keeps axis as 1

// Mean over a list of same-shape tensors. Summation is per-element over the
// sorted values, so the result is bit-identical under any permutation of the
// list.
template <typename T> Tensor<T> mean_of_list(const std::vector<Tensor<T>>& xs);

template <typename T> Tensor<T> l1(const Tensor<T>& a, const Tensor<T>& b); // mean |a-b|
template <typename T> Tensor<T> l2(const Tensor<T>& a, const Tensor<T>& b); // sqrt(mean (a-b)^2)

// ---- string-keyed dispatch --------------------------------------------------
// The generic entry point used by contract tests and tooling; routes to the
// typed primitives above.

using AttrValue = std::variant<std::int64_t, double, std::string, std::vector<int>>;
using Attrs = std::map<std::string, AttrValue>;

template <typename T>
Tensor<T> primitive_forward(const std::string& op_id, const std::vector<Tensor<T>>& inputs,
                            const Attrs& attrs);

#define UIERL_OPS_EXTERN(T)                                                                        \
    extern template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                        int, int);                                                \
    extern template Tensor<T> instance_norm<T>(const Tensor<T>&, const Tensor<T>&,                \
                                               const Tensor<T>&, double);                          \
    extern template Tensor<T> relu<T>(const Tensor<T>&);                                           \
    extern template Tensor<T> sigmoid<T>(const Tensor<T>&);                                        \
    extern template Tensor<T> tanh<T>(const Tensor<T>&);                                           \
    extern template Tensor<T> softmax<T>(const Tensor<T>&, int);                                   \
    extern template Tensor<T> max_pool<T>(const Tensor<T>&, int, int);                             \
    extern template Tensor<T> avg_pool<T>(const Tensor<T>&, int, int);                             \
    extern template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                                \
    extern template Tensor<T> bilinear_upsample<T>(const Tensor<T>&, int, int);                    \
    extern template Tensor<T> nearest_upsample<T>(const Tensor<T>&, int);                          \
    extern template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                       \
    extern template Tensor<T> transpose<T>(const Tensor<T>&);                                      \
    extern template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                          \
    extern template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                          \
    extern template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                          \
    extern template Tensor<T> scale<T>(const Tensor<T>&, double);                                  \
    extern template Tensor<T> add_scalar<T>(const Tensor<T>&, double);                             \
    extern template Tensor<T> square<T>(const Tensor<T>&);                                         \
    extern template Tensor<T> abs<T>(const Tensor<T>&);                                            \
    extern template Tensor<T> rsqrt<T>(const Tensor<T>&);                                          \
    extern template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, int);                       \
    extern template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                 \
    extern template Tensor<T> mean_all<T>(const Tensor<T>&);                                       \
    extern template Tensor<T> mean_over_axis<T>(const Tensor<T>&, int);                            \
    extern template Tensor<T> mean_of_list<T>(const std::vector<Tensor<T>>&);                      \
    extern template Tensor<T> l1<T>(const Tensor<T>&, const Tensor<T>&);                           \
    extern template Tensor<T> l2<T>(const Tensor<T>&, const Tensor<T>&);                           \
    extern template Tensor<T> primitive_forward<T>(const std::string&,                             \
                                                   const std::vector<Tensor<T>>&, const Attrs&);

UIERL_OPS_EXTERN(float)
UIERL_OPS_EXTERN(double)
#undef UIERL_OPS_EXTERN

} // namespace uierl::ops
