#pragma once

#include <map>
#include <string>

#include "uierl/rng.hpp"
#include "uierl/tensor.hpp"

namespace uierl {

enum class Init { KaimingUniform, Zeros, Ones };

std::string init_name(Init k);

// Registry of named trainable tensors. Paths are unique; iteration order is
// the sorted path order, and creation order fixes how much of the rng stream
// each initializer consumes, so a given seed always yields the same weights.
template <typename T>
class ParamStore {
public:
    struct Entry {
        Tensor<T> tensor;
        std::string init;
    };

    Tensor<T> create(const std::string& path, Shape shape, Init init, Rng& rng);

    bool has(const std::string& path) const { return entries_.count(path) != 0; }

    Tensor<T> get(const std::string& path) const {
        auto it = entries_.find(path);
        if (it == entries_.end()) throw UsageError("param store: no parameter '" + path + "'");
        return it->second.tensor;
    }

    const std::map<std::string, Entry>& entries() const { return entries_; }

    std::int64_t total_params() const {
        std::int64_t n = 0;
        for (const auto& [k, e] : entries_) n += e.tensor.numel();
        return n;
    }

    void zero_grads() {
        for (auto& [k, e] : entries_) e.tensor.zero_grad();
    }

private:
    std::map<std::string, Entry> entries_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

} // namespace uierl
