#include "uierl/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace uierl {

std::string GradCheckReport::summary() const {
    std::string s = pass ? "pass" : "FAIL";
    s += " (worst " + std::to_string(worst_err) + " at " + worst_param + "[" +
         std::to_string(worst_coord) + "], analytic " + std::to_string(worst_analytic) +
         " vs central " + std::to_string(worst_numeric) + ", " + std::to_string(coords_checked) +
         " coords)";
    return s;
}

template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& scalar_fn, ParamStore<T>& params,
                           double epsilon, double tolerance, int coords_per_param, Rng& rng,
                           int max_params) {
    if (epsilon < 1e-6 || epsilon > 1e-3)
        throw UsageError("grad_check: epsilon must be in [1e-6, 1e-3]");
    if (coords_per_param < 1) throw UsageError("grad_check: coords_per_param must be >= 1");

    params.zero_grads();
    Tensor<T> out = scalar_fn();
    if (out.numel() != 1)
        throw UsageError("grad_check: function output must be scalar, got shape " +
                         shape_str(out.shape()));
    backward(out);

    // Snapshot analytic gradients (missing grad means identically zero).
    std::map<std::string, std::vector<T>> analytic;
    for (const auto& [path, e] : params.entries()) {
        if (e.tensor.has_grad())
            analytic[path] = e.tensor.grad();
        else
            analytic[path] = std::vector<T>(static_cast<size_t>(e.tensor.numel()), T(0));
    }

    std::vector<std::string> probe_paths;
    for (const auto& [path, e] : params.entries()) probe_paths.push_back(path);
    if (max_params > 0 && static_cast<int>(probe_paths.size()) > max_params) {
        // deterministic partial shuffle, then probe the prefix
        for (int i = 0; i < max_params; ++i) {
            const auto j = i + static_cast<std::int64_t>(
                                   rng.uniform_int(probe_paths.size() - static_cast<size_t>(i)));
            std::swap(probe_paths[static_cast<size_t>(i)], probe_paths[static_cast<size_t>(j)]);
        }
        probe_paths.resize(static_cast<size_t>(max_params));
        std::sort(probe_paths.begin(), probe_paths.end());
    }

    GradCheckReport rep;
    rep.pass = true;
    for (const auto& path : probe_paths) {
        Tensor<T> t = params.get(path);
        const std::int64_t n = t.numel();
        std::set<std::int64_t> coords;
        if (n <= coords_per_param) {
            for (std::int64_t i = 0; i < n; ++i) coords.insert(i);
        } else {
            while (static_cast<int>(coords.size()) < coords_per_param)
                coords.insert(static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(n))));
        }
        for (std::int64_t ci : coords) {
            T* v = t.data() + ci;
            const T saved = *v;
            *v = saved + static_cast<T>(epsilon);
            const double f_plus = static_cast<double>(scalar_fn().item());
            *v = saved - static_cast<T>(epsilon);
            const double f_minus = static_cast<double>(scalar_fn().item());
            *v = saved;
            const double central = (f_plus - f_minus) / (2.0 * epsilon);
            const double a = static_cast<double>(analytic[path][static_cast<size_t>(ci)]);
            const double err = std::fabs(a - central) / std::max(1.0, std::fabs(central));
            ++rep.coords_checked;
            if (err > rep.worst_err) {
                rep.worst_err = err;
                rep.worst_param = path;
                rep.worst_coord = ci;
                rep.worst_analytic = a;
                rep.worst_numeric = central;
            }
        }
    }
    rep.pass = rep.worst_err <= tolerance;
    return rep;
}

template GradCheckReport grad_check<float>(const std::function<Tensor<float>()>&,
                                           ParamStore<float>&, double, double, int, Rng&, int);
template GradCheckReport grad_check<double>(const std::function<Tensor<double>()>&,
                                            ParamStore<double>&, double, double, int, Rng&, int);

} // namespace uierl
