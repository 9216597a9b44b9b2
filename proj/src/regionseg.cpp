#include "uierl/regionseg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uierl/ops.hpp"

namespace uierl::regionseg {

void RegionMasks::validate() const {
    if (masks.empty()) throw UsageError("region masks: empty");
    const int h = height(), w = width();
    for (const auto& m : masks)
        if (m.dim(1) != h || m.dim(2) != w)
            throw UsageError("region masks: inconsistent sizes");
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
        double s = 0;
        for (const auto& m : masks) {
            const double v = m.data()[i];
            if (v != 0.0 && v != 1.0)
                throw UsageError("region masks: non-binary value at pixel " + std::to_string(i));
            s += v;
        }
        if (s != 1.0)
            throw UsageError("region masks: pixel " + std::to_string(i) +
                             " covered by " + std::to_string(s) + " masks");
    }
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * (static_cast<double>(sorted.size()) - 1.0);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

} // namespace

RegionMasks kmeans_depth(const imaging::Raster& depth, int k, double tol, int max_iter) {
    if (!depth.defined() || depth.ndim() != 3 || depth.dim(0) != 1)
        throw UsageError("kmeans_depth: expected 1xHxW depth map");
    if (k < 1) throw UsageError("kmeans_depth: k must be >= 1");
    if (tol <= 0 || max_iter < 1) throw UsageError("kmeans_depth: bad tol/max_iter");
    const int h = depth.dim(1), w = depth.dim(2);
    const std::int64_t n = static_cast<std::int64_t>(h) * w;
    const double* d = depth.data();

    RegionMasks out;
    out.masks.resize(static_cast<size_t>(k));
    out.centers.assign(static_cast<size_t>(k), 0.0);
    out.empty.assign(static_cast<size_t>(k), true);

    double lo = d[0], hi = d[0];
    for (std::int64_t i = 0; i < n; ++i) {
        lo = std::min(lo, d[i]);
        hi = std::max(hi, d[i]);
    }

    std::vector<int> assign(static_cast<size_t>(n), 0);
    std::vector<double> centers(static_cast<size_t>(k));

    if (hi - lo < 1e-6) {
        // constant depth: everything lands in region 1
        centers.assign(static_cast<size_t>(k), lo);
    } else {
        std::vector<double> sorted(d, d + n);
        std::sort(sorted.begin(), sorted.end());
        for (int c = 0; c < k; ++c)
            centers[static_cast<size_t>(c)] =
                quantile_sorted(sorted, (2.0 * c + 1.0) / (2.0 * k));

        std::vector<double> sums(static_cast<size_t>(k));
        std::vector<std::int64_t> counts(static_cast<size_t>(k));
        for (int iter = 0; iter < max_iter; ++iter) {
            // assignment: nearest center, ties to the lower (nearer) index
            std::fill(sums.begin(), sums.end(), 0.0);
            std::fill(counts.begin(), counts.end(), 0);
            for (std::int64_t i = 0; i < n; ++i) {
                int best = 0;
                double bd = std::fabs(d[i] - centers[0]);
                for (int c = 1; c < k; ++c) {
                    const double dist = std::fabs(d[i] - centers[static_cast<size_t>(c)]);
                    if (dist < bd) {
                        bd = dist;
                        best = c;
                    }
                }
                assign[static_cast<size_t>(i)] = best;
                sums[static_cast<size_t>(best)] += d[i];
                ++counts[static_cast<size_t>(best)];
            }
            // update, reseeding emptied clusters at the most isolated value
            double moved = 0;
            for (int c = 0; c < k; ++c) {
                double nc;
                if (counts[static_cast<size_t>(c)] > 0) {
                    nc = sums[static_cast<size_t>(c)] / static_cast<double>(counts[static_cast<size_t>(c)]);
                } else {
                    std::int64_t far_i = 0;
                    double far_d = -1;
                    for (std::int64_t i = 0; i < n; ++i) {
                        double nearest = std::numeric_limits<double>::infinity();
                        for (int c2 = 0; c2 < k; ++c2) {
                            if (counts[static_cast<size_t>(c2)] == 0) continue;
                            nearest = std::min(nearest, std::fabs(d[i] - centers[static_cast<size_t>(c2)]));
                        }
                        if (nearest > far_d) {
                            far_d = nearest;
                            far_i = i;
                        }
                    }
                    nc = d[far_i];
                }
                moved = std::max(moved, std::fabs(nc - centers[static_cast<size_t>(c)]));
                centers[static_cast<size_t>(c)] = nc;
            }
            if (moved < tol) break;
        }
        // final assignment against the converged centers
        for (std::int64_t i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::fabs(d[i] - centers[0]);
            for (int c = 1; c < k; ++c) {
                const double dist = std::fabs(d[i] - centers[static_cast<size_t>(c)]);
                if (dist < bd) {
                    bd = dist;
                    best = c;
                }
            }
            assign[static_cast<size_t>(i)] = best;
        }
    }

    // order regions by ascending center; emptied clusters go last
    std::vector<std::int64_t> counts(static_cast<size_t>(k), 0);
    for (std::int64_t i = 0; i < n; ++i) ++counts[static_cast<size_t>(assign[static_cast<size_t>(i)])];
    std::vector<int> order(static_cast<size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const bool ea = counts[static_cast<size_t>(a)] == 0, eb = counts[static_cast<size_t>(b)] == 0;
        if (ea != eb) return !ea;
        return centers[static_cast<size_t>(a)] < centers[static_cast<size_t>(b)];
    });
    std::vector<int> rank(static_cast<size_t>(k));
    for (int r = 0; r < k; ++r) rank[static_cast<size_t>(order[static_cast<size_t>(r)])] = r;

    for (int r = 0; r < k; ++r) {
        const int src = order[static_cast<size_t>(r)];
        out.centers[static_cast<size_t>(r)] = centers[static_cast<size_t>(src)];
        out.empty[static_cast<size_t>(r)] = counts[static_cast<size_t>(src)] == 0;
        out.masks[static_cast<size_t>(r)] = imaging::Raster::zeros({1, h, w});
    }
    for (std::int64_t i = 0; i < n; ++i)
        out.masks[static_cast<size_t>(rank[static_cast<size_t>(assign[static_cast<size_t>(i)])])]
            .data()[i] = 1.0;
    return out;
}

template <typename T>
std::vector<Tensor<T>> extract_regions(const Tensor<T>& image, const RegionMasks& masks) {
    if (!image.defined() || image.ndim() != 3)
        throw UsageError("extract_regions: expected CxHxW image");
    if (image.dim(1) != masks.height() || image.dim(2) != masks.width())
        throw UsageError("extract_regions: image " + shape_str(image.shape()) +
                         " vs masks " + std::to_string(masks.height()) + "x" +
                         std::to_string(masks.width()));
    std::vector<Tensor<T>> out;
    for (const auto& m : masks.masks) {
        std::vector<T> mv(m.vec().size());
        for (size_t i = 0; i < mv.size(); ++i) mv[i] = static_cast<T>(m.data()[i]);
        out.push_back(ops::mul(image, Tensor<T>::from(m.shape(), std::move(mv))));
    }
    return out;
}

template <typename T>
Tensor<T> combine_regions(const std::vector<Tensor<T>>& features, const RegionMasks& masks) {
    if (features.size() != masks.masks.size())
        throw UsageError("combine_regions: " + std::to_string(features.size()) + " features vs " +
                         std::to_string(masks.masks.size()) + " masks");
    Tensor<T> acc;
    for (size_t i = 0; i < features.size(); ++i) {
        if (!features[i].defined()) continue; // skipped empty region counts as zero
        if (features[i].dim(1) != masks.height() || features[i].dim(2) != masks.width())
            throw UsageError("combine_regions: feature " + shape_str(features[i].shape()) +
                             " vs masks " + std::to_string(masks.height()) + "x" +
                             std::to_string(masks.width()));
        const auto& m = masks.masks[i];
        std::vector<T> mv(m.vec().size());
        for (size_t j = 0; j < mv.size(); ++j) mv[j] = static_cast<T>(m.data()[j]);
        auto term = ops::mul(features[i], Tensor<T>::from(m.shape(), std::move(mv)));
        acc = acc.defined() ? ops::add(acc, term) : term;
    }
    if (!acc.defined()) throw UsageError("combine_regions: no defined features");
    return acc;
}

std::vector<std::uint8_t> label_map(const RegionMasks& masks) {
    const int h = masks.height(), w = masks.width();
    std::vector<std::uint8_t> out(static_cast<size_t>(h) * w, 0);
    for (size_t r = 0; r < masks.masks.size(); ++r)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i)
            if (masks.masks[r].data()[i] != 0.0) out[static_cast<size_t>(i)] = static_cast<std::uint8_t>(r);
    return out;
}

template std::vector<Tensor<float>> extract_regions<float>(const Tensor<float>&, const RegionMasks&);
template std::vector<Tensor<double>> extract_regions<double>(const Tensor<double>&, const RegionMasks&);
template Tensor<float> combine_regions<float>(const std::vector<Tensor<float>>&, const RegionMasks&);
template Tensor<double> combine_regions<double>(const std::vector<Tensor<double>>&, const RegionMasks&);

} // namespace uierl::regionseg
