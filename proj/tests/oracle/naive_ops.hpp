#pragma once

// Straight-line reference kernels used as test oracles. Deliberately written
// as plain loops over flat double buffers, with no code shared with the
// library implementations they check.

#include <cmath>
#include <cstdint>
#include <vector>

namespace naive {

inline std::vector<double> conv2d(const std::vector<double>& x, int ci, int h, int w,
                                  const std::vector<double>& wgt, int co, int kh, int kw,
                                  const std::vector<double>& bias, int stride, int pad, int& ho,
                                  int& wo) {
    ho = (h + 2 * pad - kh) / stride + 1;
    wo = (w + 2 * pad - kw) / stride + 1;
    std::vector<double> y(static_cast<size_t>(co) * ho * wo, 0.0);
    for (int oc = 0; oc < co; ++oc)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double acc = bias.empty() ? 0.0 : bias[static_cast<size_t>(oc)];
                for (int ic = 0; ic < ci; ++ic)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = oy * stride - pad + ky;
                            const int ix = ox * stride - pad + kx;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += x[(static_cast<size_t>(ic) * h + iy) * w + ix] *
                                   wgt[((static_cast<size_t>(oc) * ci + ic) * kh + ky) * kw + kx];
                        }
                y[(static_cast<size_t>(oc) * ho + oy) * wo + ox] = acc;
            }
    return y;
}

inline std::vector<double> instance_norm(const std::vector<double>& x, int c, int h, int w,
                                         const std::vector<double>& gamma,
                                         const std::vector<double>& beta, double eps) {
    std::vector<double> y(x.size());
    const std::int64_t m = static_cast<std::int64_t>(h) * w;
    for (int ch = 0; ch < c; ++ch) {
        double mu = 0;
        for (std::int64_t i = 0; i < m; ++i) mu += x[static_cast<size_t>(ch * m + i)];
        mu /= static_cast<double>(m);
        double var = 0;
        for (std::int64_t i = 0; i < m; ++i) {
            const double d = x[static_cast<size_t>(ch * m + i)] - mu;
            var += d * d;
        }
        var /= static_cast<double>(m);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::int64_t i = 0; i < m; ++i)
            y[static_cast<size_t>(ch * m + i)] =
                (x[static_cast<size_t>(ch * m + i)] - mu) * inv * gamma[static_cast<size_t>(ch)] +
                beta[static_cast<size_t>(ch)];
    }
    return y;
}

inline std::vector<double> relu(const std::vector<double>& x) {
    std::vector<double> y(x.size());
    for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : 0.0;
    return y;
}

inline std::vector<double> sigmoid(const std::vector<double>& x) {
    std::vector<double> y(x.size());
    for (size_t i = 0; i < x.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
    return y;
}

inline std::vector<double> matmul(const std::vector<double>& a, int m, int k,
                                  const std::vector<double>& b, int n) {
    std::vector<double> c(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0;
            for (int p = 0; p < k; ++p)
                acc += a[static_cast<size_t>(i) * k + p] * b[static_cast<size_t>(p) * n + j];
            c[static_cast<size_t>(i) * n + j] = acc;
        }
    return c;
}

// softmax independently per row of an (n x c) matrix
inline std::vector<double> softmax_rows(const std::vector<double>& x, int n, int c) {
    std::vector<double> y(x.size());
    for (int i = 0; i < n; ++i) {
        double mx = x[static_cast<size_t>(i) * c];
        for (int j = 1; j < c; ++j) mx = std::max(mx, x[static_cast<size_t>(i) * c + j]);
        double s = 0;
        for (int j = 0; j < c; ++j) {
            y[static_cast<size_t>(i) * c + j] = std::exp(x[static_cast<size_t>(i) * c + j] - mx);
            s += y[static_cast<size_t>(i) * c + j];
        }
        for (int j = 0; j < c; ++j) y[static_cast<size_t>(i) * c + j] /= s;
    }
    return y;
}

inline std::vector<double> global_avg_pool(const std::vector<double>& x, int c, int h, int w) {
    std::vector<double> y(static_cast<size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
        double s = 0;
        for (int i = 0; i < h * w; ++i) s += x[static_cast<size_t>(ch) * h * w + i];
        y[static_cast<size_t>(ch)] = s / (h * w);
    }
    return y;
}

} // namespace naive
