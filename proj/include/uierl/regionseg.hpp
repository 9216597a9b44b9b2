#pragma once

#include <cstdint>
#include <vector>

#include "uierl/imaging.hpp"
#include "uierl/tensor.hpp"

namespace uierl::regionseg {

// K binary masks partitioning the image by depth cluster, ordered by
// ascending center (near to far). A cluster that ends up with no pixels is
// flagged empty and keeps an all-zero mask.
struct RegionMasks {
    std::vector<imaging::Raster> masks; // each 1xHxW, values exactly 0 or 1
    std::vector<double> centers;        // ascending over non-empty regions
    std::vector<bool> empty;

    int k() const { return static_cast<int>(masks.size()); }
    int height() const { return masks.empty() ? 0 : masks[0].dim(1); }
    int width() const { return masks.empty() ? 0 : masks[0].dim(2); }
    void validate() const; // disjoint, pixelwise sum == 1
};

// Lloyd's algorithm on scalar depth values with deterministic quantile
// initialization (centers at the (2i+1)/(2k) quantiles). A constant depth map
// (range < 1e-6) skips clustering and assigns everything to region 1.
RegionMasks kmeans_depth(const imaging::Raster& depth, int k = 3, double tol = 1e-4,
                         int max_iter = 100);

// I_k = I * M_k, broadcast over channels. Differentiable in the image.
template <typename T>
std::vector<Tensor<T>> extract_regions(const Tensor<T>& image, const RegionMasks& masks);

// sum_k F_k * M_k. Undefined feature slots (skipped empty regions) count as
// zero. Differentiable in the features.
template <typename T>
Tensor<T> combine_regions(const std::vector<Tensor<T>>& features, const RegionMasks& masks);

// Region index per pixel (0..k-1), row-major, for PNG label-map export.
std::vector<std::uint8_t> label_map(const RegionMasks& masks);

extern template std::vector<Tensor<float>> extract_regions<float>(const Tensor<float>&,
                                                                  const RegionMasks&);
extern template std::vector<Tensor<double>> extract_regions<double>(const Tensor<double>&,
                                                                    const RegionMasks&);
extern template Tensor<float> combine_regions<float>(const std::vector<Tensor<float>>&,
                                                     const RegionMasks&);
extern template Tensor<double> combine_regions<double>(const std::vector<Tensor<double>>&,
                                                       const RegionMasks&);

} // namespace uierl::regionseg
