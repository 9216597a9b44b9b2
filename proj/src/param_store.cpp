#include "uierl/param_store.hpp"

#include <cmath>

namespace uierl {

std::string init_name(Init k) {
    switch (k) {
    case Init::KaimingUniform: return "kaiming_uniform";
    case Init::Zeros: return "zeros";
    case Init::Ones: return "ones";
    }
    return "?";
}

namespace {

// fan_in: conv weights are (O,I,Kh,Kw) -> I*Kh*Kw; matrices are (in,out) -> in.
std::int64_t fan_in_of(const Shape& s) {
    if (s.size() == 4) return static_cast<std::int64_t>(s[1]) * s[2] * s[3];
    if (s.size() == 2) return s[0];
    return static_cast<std::int64_t>(s.empty() ? 1 : s[0]);
}

} // namespace

template <typename T>
Tensor<T> ParamStore<T>::create(const std::string& path, Shape shape, Init init, Rng& rng) {
    if (entries_.count(path)) throw UsageError("param store: duplicate parameter '" + path + "'");
    Tensor<T> t;
    switch (init) {
    case Init::Zeros: t = Tensor<T>::zeros(shape); break;
    case Init::Ones: t = Tensor<T>::full(shape, T(1)); break;
    case Init::KaimingUniform: {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in_of(shape)));
        std::vector<T> data(static_cast<size_t>(shape_numel(shape)));
        for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
        t = Tensor<T>::from(shape, std::move(data));
        break;
    }
    }
    t.set_requires_grad(true);
    entries_.emplace(path, Entry{t, init_name(init)});
    return t;
}

template class ParamStore<float>;
template class ParamStore<double>;

} // namespace uierl
