#pragma once

#include <functional>
#include <string>

#include "uierl/param_store.hpp"
#include "uierl/tensor.hpp"

namespace uierl {

struct GradCheckReport {
    bool pass = false;
    double worst_err = 0.0; // |analytic - central| / max(1, |central|)
    std::string worst_param;
    std::int64_t worst_coord = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    int coords_checked = 0;
    std::string summary() const;
};

// Central-difference check of the reverse-mode gradients of a scalar-valued
// function of the stored parameters. Samples up to `coords_per_param`
// coordinates from every parameter (all of them when the parameter is small).
// max_params > 0 restricts the probe to that many randomly chosen parameters,
// bounding the cost on large models.
template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& scalar_fn, ParamStore<T>& params,
                           double epsilon, double tolerance, int coords_per_param, Rng& rng,
                           int max_params = 0);

extern template GradCheckReport grad_check<float>(const std::function<Tensor<float>()>&,
                                                  ParamStore<float>&, double, double, int, Rng&,
                                                  int);
extern template GradCheckReport grad_check<double>(const std::function<Tensor<double>()>&,
                                                   ParamStore<double>&, double, double, int, Rng&,
                                                   int);

} // namespace uierl
