#include "uierl/ops.hpp"

#include <algorithm>
#include <array>
#include <cblas.h>
#include <cmath>
#include <cstring>
#include <limits>

namespace uierl::ops {

namespace {

inline void blas_gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
                      const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
                k, alpha, a, lda, b, ldb, beta, c, ldc);
}
inline void blas_gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
                      const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
                k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
using NodeT = detail::Node<T>;

// Builds the output node. When no parent tracks gradients the node carries no
// graph edges at all, so pure data pipelines stay cheap.
template <typename T>
Tensor<T> make_node(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& parents,
                    std::function<void(NodeT<T>&)> bw, const char* op) {
    auto out = Tensor<T>::from(std::move(shape), std::move(data));
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.node().requires_grad;
    if (rg) {
        auto& n = out.node();
        n.requires_grad = true;
        n.is_leaf = false;
        n.op = op;
        for (const auto& p : parents) n.parents.push_back(p.node_ptr());
        n.backward_fn = std::move(bw);
    }
    return out;
}

template <typename T>
void check_defined(const Tensor<T>& x, const char* op) {
    if (!x.defined()) throw UsageError(std::string(op) + ": undefined tensor input");
}

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
    throw UsageError(std::string(op) + ": shape mismatch, " + detail);
}

// im2col for channels-first input. col is (Ci*kh*kw) x (Ho*Wo), row-major.
template <typename T>
void im2col(const T* x, int ci, int h, int w, int kh, int kw, int stride, int pad, int ho, int wo,
            T* col) {
    const int n = ho * wo;
    for (int c = 0; c < ci; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                T* dst = col + (static_cast<std::int64_t>(c) * kh * kw + ky * kw + kx) * n;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        std::memset(dst + oy * wo, 0, sizeof(T) * static_cast<size_t>(wo));
                        continue;
                    }
                    const T* src = x + (static_cast<std::int64_t>(c) * h + iy) * w;
                    const int x0 = -pad + kx;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + x0;
                        dst[oy * wo + ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_accum(const T* col, int ci, int h, int w, int kh, int kw, int stride, int pad, int ho,
                  int wo, T* dx) {
    const int n = ho * wo;
    for (int c = 0; c < ci; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const T* src = col + (static_cast<std::int64_t>(c) * kh * kw + ky * kw + kx) * n;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    T* dst = dx + (static_cast<std::int64_t>(c) * h + iy) * w;
                    const int x0 = -pad + kx;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + x0;
                        if (ix >= 0 && ix < w) dst[ix] += src[oy * wo + ox];
                    }
                }
            }
        }
    }
}

} // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int pad) {
    check_defined(input, "conv2d");
    check_defined(weight, "conv2d");
    if (input.ndim() != 3) shape_fail("conv2d", "input must be CxHxW, got " + shape_str(input.shape()));
    if (weight.ndim() != 4)
        shape_fail("conv2d", "weight must be OxIxKhxKw, got " + shape_str(weight.shape()));
    const int ci = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int co = weight.dim(0), wi = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
    if (wi != ci)
        shape_fail("conv2d", "input channels " + std::to_string(ci) + " vs weight in-channels " +
                                 std::to_string(wi));
    if (kh != kw) shape_fail("conv2d", "only square kernels supported, got " + shape_str(weight.shape()));
    if (stride < 1) throw UsageError("conv2d: stride must be >= 1");
    if (pad < 0) {
        if (kh % 2 == 0) throw UsageError("conv2d: same-padding requires an odd kernel");
        pad = (kh - 1) / 2;
    }
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (w + 2 * pad - kw) / stride + 1;
    if (ho <= 0 || wo <= 0)
        shape_fail("conv2d", "kernel " + std::to_string(kh) + " too large for input " +
                                 shape_str(input.shape()));
    if (bias.defined() && bias.numel() != co)
        shape_fail("conv2d", "bias size " + std::to_string(bias.numel()) + " vs out channels " +
                                 std::to_string(co));

    const int k = ci * kh * kw;
    const int n = ho * wo;
    std::vector<T> col(static_cast<size_t>(k) * n);
    im2col(input.data(), ci, h, w, kh, kw, stride, pad, ho, wo, col.data());
    std::vector<T> out(static_cast<size_t>(co) * n);
    blas_gemm(false, false, co, n, k, T(1), weight.data(), k, col.data(), n, T(0), out.data(), n);
    if (bias.defined()) {
        for (int c = 0; c < co; ++c) {
            const T b = bias.data()[c];
            T* row = out.data() + static_cast<std::int64_t>(c) * n;
            for (int i = 0; i < n; ++i) row[i] += b;
        }
    }

    std::vector<Tensor<T>> parents = {input, weight};
    if (bias.defined()) parents.push_back(bias);
    auto in_node = input.node_ptr();
    auto w_node = weight.node_ptr();
    auto b_node = bias.defined() ? bias.node_ptr() : nullptr;
    auto bw = [=](NodeT<T>& o) {
        const T* dy = o.grad.data(); // (co, n)
        if (b_node && b_node->requires_grad) {
            if (b_node->grad.empty()) b_node->grad.assign(b_node->data.size(), T(0));
            for (int c = 0; c < co; ++c) {
                T s = 0;
                const T* row = dy + static_cast<std::int64_t>(c) * n;
                for (int i = 0; i < n; ++i) s += row[i];
                b_node->grad[static_cast<size_t>(c)] += s;
            }
        }
        const bool need_w = w_node->requires_grad;
        const bool need_x = in_node->requires_grad;
        if (need_w) {
            std::vector<T> col2(static_cast<size_t>(k) * n);
            im2col(in_node->data.data(), ci, h, w, kh, kw, stride, pad, ho, wo, col2.data());
            if (w_node->grad.empty()) w_node->grad.assign(w_node->data.size(), T(0));
            // dW(co,k) += dY(co,n) * col(k,n)^T
            blas_gemm(false, true, co, k, n, T(1), dy, n, col2.data(), n, T(1), w_node->grad.data(),
                      k);
        }
        if (need_x) {
            std::vector<T> dcol(static_cast<size_t>(k) * n);
            // dcol(k,n) = W(co,k)^T * dY(co,n)
            blas_gemm(true, false, k, n, co, T(1), w_node->data.data(), k, dy, n, T(0), dcol.data(),
                      n);
            if (in_node->grad.empty()) in_node->grad.assign(in_node->data.size(), T(0));
            col2im_accum(dcol.data(), ci, h, w, kh, kw, stride, pad, ho, wo, in_node->grad.data());
        }
    };
    return make_node<T>({co, ho, wo}, std::move(out), parents, bw, "conv2d");
}

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                        double eps) {
    check_defined(x, "instance_norm");
    if (x.ndim() != 3)
        shape_fail("instance_norm", "input must be CxHxW, got " + shape_str(x.shape()));
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::int64_t m = static_cast<std::int64_t>(h) * w;
    if (gamma.numel() != c || beta.numel() != c)
        shape_fail("instance_norm", "affine size vs channels " + std::to_string(c));

    std::vector<T> out(x.vec().size());
    std::vector<T> mean(static_cast<size_t>(c)), inv(static_cast<size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
        const T* xi = x.data() + ch * m;
        double mu = 0;
        for (std::int64_t i = 0; i < m; ++i) mu += xi[i];
        mu /= static_cast<double>(m);
        double var = 0;
        for (std::int64_t i = 0; i < m; ++i) {
            const double d = xi[i] - mu;
            var += d * d;
        }
        var /= static_cast<double>(m);
        const double is = 1.0 / std::sqrt(var + eps);
        mean[static_cast<size_t>(ch)] = static_cast<T>(mu);
        inv[static_cast<size_t>(ch)] = static_cast<T>(is);
        const T g = gamma.data()[ch], b = beta.data()[ch];
        T* yo = out.data() + ch * m;
        for (std::int64_t i = 0; i < m; ++i)
            yo[i] = static_cast<T>((xi[i] - mu) * is) * g + b;
    }

    auto xn = x.node_ptr();
    auto gn = gamma.node_ptr();
    auto bn = beta.node_ptr();
    auto bw = [=](NodeT<T>& o) {
        const T* dy = o.grad.data();
        const bool need_x = xn->requires_grad;
        if (need_x && xn->grad.empty()) xn->grad.assign(xn->data.size(), T(0));
        if (gn->requires_grad && gn->grad.empty()) gn->grad.assign(gn->data.size(), T(0));
        if (bn->requires_grad && bn->grad.empty()) bn->grad.assign(bn->data.size(), T(0));
        for (int ch = 0; ch < c; ++ch) {
            const T* xi = xn->data.data() + ch * m;
            const T* gyi = dy + ch * m;
            const double mu = mean[static_cast<size_t>(ch)];
            const double is = inv[static_cast<size_t>(ch)];
            double gsum = 0, gxsum = 0;
            for (std::int64_t i = 0; i < m; ++i) {
                const double xh = (xi[i] - mu) * is;
                gsum += gyi[i];
                gxsum += gyi[i] * xh;
            }
            if (gn->requires_grad) gn->grad[static_cast<size_t>(ch)] += static_cast<T>(gxsum);
            if (bn->requires_grad) bn->grad[static_cast<size_t>(ch)] += static_cast<T>(gsum);
            if (need_x) {
                const double g = gamma.data()[ch];
                const double k1 = gsum / static_cast<double>(m);
                const double k2 = gxsum / static_cast<double>(m);
                T* dx = xn->grad.data() + ch * m;
                for (std::int64_t i = 0; i < m; ++i) {
                    const double xh = (xi[i] - mu) * is;
                    dx[i] += static_cast<T>(g * is * (gyi[i] - k1 - xh * k2));
                }
            }
        }
    };
    return make_node<T>(x.shape(), std::move(out), {x, gamma, beta}, bw, "instance_norm");
}

namespace {

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> pointwise(const Tensor<T>& x, const char* op, FwdFn f, BwdFn dfdx_from_xy) {
    check_defined(x, op);
    std::vector<T> out(x.vec().size());
    const T* xi = x.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(xi[i]);
    auto xn = x.node_ptr();
    auto bw = [xn, dfdx_from_xy](NodeT<T>& o) {
        if (!xn->requires_grad) return;
        if (xn->grad.empty()) xn->grad.assign(xn->data.size(), T(0));
        const T* dy = o.grad.data();
        const T* xv = xn->data.data();
        const T* yv = o.data.data();
        for (size_t i = 0; i < xn->data.size(); ++i)
            xn->grad[i] += dy[i] * dfdx_from_xy(xv[i], yv[i]);
    };
    return make_node<T>(x.shape(), std::move(out), {x}, bw, op);
}

} // namespace

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return pointwise(
        x, "relu", [](T v) { return v > T(0) ? v : T(0); },
        [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return pointwise(
        x, "sigmoid",
        [](T v) {
            if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
            const T e = std::exp(v);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
    return pointwise(
        x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
    return pointwise(
        x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
    return pointwise(
        x, "abs", [](T v) { return std::fabs(v); },
        [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> rsqrt(const Tensor<T>& x) {
    for (std::int64_t i = 0; i < x.numel(); ++i)
        if (!(x.data()[i] > T(0)))
            throw UsageError("rsqrt: input must be positive, got " +
                             std::to_string(static_cast<double>(x.data()[i])));
    return pointwise(
        x, "rsqrt", [](T v) { return T(1) / std::sqrt(v); },
        [](T v, T y) { return T(-0.5) * y / v; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double s) {
    const T sv = static_cast<T>(s);
    return pointwise(
        a, "scale", [sv](T v) { return v * sv; }, [sv](T, T) { return sv; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, double s) {
    const T sv = static_cast<T>(s);
    return pointwise(
        a, "add_scalar", [sv](T v) { return v + sv; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    check_defined(x, "softmax");
    const auto& s = x.shape();
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw UsageError("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(s));
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
    const std::int64_t nax = s[static_cast<size_t>(axis)];

    std::vector<T> out(x.vec().size());
    const T* xi = x.data();
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * nax * inner + in;
            T mx = xi[base];
            for (std::int64_t j = 1; j < nax; ++j) mx = std::max(mx, xi[base + j * inner]);
            double sum = 0;
            for (std::int64_t j = 0; j < nax; ++j) {
                const double e = std::exp(static_cast<double>(xi[base + j * inner] - mx));
                out[static_cast<size_t>(base + j * inner)] = static_cast<T>(e);
                sum += e;
            }
            const double isum = 1.0 / sum;
            for (std::int64_t j = 0; j < nax; ++j)
                out[static_cast<size_t>(base + j * inner)] =
                    static_cast<T>(out[static_cast<size_t>(base + j * inner)] * isum);
        }
    }
    auto xn = x.node_ptr();
    auto bw = [xn, outer, inner, nax](NodeT<T>& o) {
        if (!xn->requires_grad) return;
        if (xn->grad.empty()) xn->grad.assign(xn->data.size(), T(0));
        const T* dy = o.grad.data();
        const T* y = o.data.data();
        for (std::int64_t ot = 0; ot < outer; ++ot) {
            for (std::int64_t in = 0; in < inner; ++in) {
                const std::int64_t base = ot * nax * inner + in;
                double dot = 0;
                for (std::int64_t j = 0; j < nax; ++j)
                    dot += static_cast<double>(dy[base + j * inner]) * y[base + j * inner];
                for (std::int64_t j = 0; j < nax; ++j) {
                    const std::int64_t idx = base + j * inner;
                    xn->grad[static_cast<size_t>(idx)] +=
                        static_cast<T>(y[idx] * (dy[idx] - static_cast<T>(dot)));
                }
            }
        }
    };
    return make_node<T>(s, std::move(out), {x}, bw, "softmax");
}

namespace {

template <typename T>
void check_pool_args(const Tensor<T>& x, int kernel, int stride, const char* op) {
    check_defined(x, op);
    if (x.ndim() != 3) shape_fail(op, "input must be CxHxW, got " + shape_str(x.shape()));
    if (kernel < 1 || stride < 1) throw UsageError(std::string(op) + ": kernel/stride must be >= 1");
    if (x.dim(1) < kernel || x.dim(2) < kernel)
        shape_fail(op, "kernel " + std::to_string(kernel) + " larger than input " +
                           shape_str(x.shape()));
}

} // namespace

template <typename T>
Tensor<T> max_pool(const Tensor<T>& x, int kernel, int stride) {
    check_pool_args(x, kernel, stride, "max_pool");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int ho = (h - kernel) / stride + 1, wo = (w - kernel) / stride + 1;
    std::vector<T> out(static_cast<size_t>(c) * ho * wo);
    std::vector<std::int32_t> argmax(out.size());
    const T* xi = x.data();
    for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                T best = -std::numeric_limits<T>::infinity();
                std::int32_t bi = 0;
                for (int ky = 0; ky < kernel; ++ky) {
                    for (int kx = 0; kx < kernel; ++kx) {
                        const int iy = oy * stride + ky, ix = ox * stride + kx;
                        const std::int64_t idx = (static_cast<std::int64_t>(ch) * h + iy) * w + ix;
                        if (xi[idx] > best) {
                            best = xi[idx];
                            bi = static_cast<std::int32_t>(idx);
                        }
                    }
                }
                out[(static_cast<size_t>(ch) * ho + oy) * wo + ox] = best;
                argmax[(static_cast<size_t>(ch) * ho + oy) * wo + ox] = bi;
            }
        }
    }
    auto xn = x.node_ptr();
    auto bw = [xn, argmax = std::move(argmax)](NodeT<T>& o) {
        if (!xn->requires_grad) return;
        if (xn->grad.empty()) xn->grad.assign(xn->data.size(), T(0));
        for (size_t i = 0; i < o.grad.size(); ++i)
            xn->grad[static_cast<size_t>(argmax[i])] += o.grad[i];
    };
    return make_node<T>({c, ho, wo}, std::move(out), {x}, bw, "max_pool");
}

template <typename T>
Tensor<T> avg_pool(const Tensor<T>& x, int kernel, int stride) {
    check_pool_args(x, kernel, stride, "avg_pool");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int ho = (h - kernel) / stride + 1, wo = (w - kernel) / stride + 1;
    const T norm = T(1) / static_cast<T>(kernel * kernel);
    std::vector<T> out(static_cast<size_t>(c) * ho * wo);
    const T* xi = x.data();
    for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                double s = 0;
                for (int ky = 0; ky < kernel; ++ky)
                    for (int kx = 0; kx < kernel; ++kx)
                        s += xi[(static_cast<std::int64_t>(ch) * h + oy * stride + ky) * w +
                                ox * stride + kx];
                out[(static_cast<size_t>(ch) * ho + oy) * wo + ox] = static_cast<T>(s) * norm;
            }
        }
    }
    auto xn = x.node_ptr();
    auto bw = [xn, c, h, w, ho, wo, kernel, stride, norm](NodeT<T>& o) {
        if (!xn->requires_grad) return;
        if (xn->grad.empty()) xn->grad.assign(xn->data.size(), T(0));
        const T* dy = o.grad.data();
        for (int ch = 0; ch < c; ++ch)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    const T g = dy[(static_cast<std::int64_t>(ch) * ho + oy) * wo + ox] * norm;
                    for (int ky = 0; ky < kernel; ++ky)
                        for (int kx = 0; kx < kernel; ++kx)
                            xn->grad[(static_cast<size_t>(ch) * h + oy * stride + ky) * w +
                                     ox * stride + kx] += g;
                }
    };
    return make_node<T>({c, ho, wo}, std::move(out), {x}, bw, "avg_pool");
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    check_defined(x, "global_avg_pool");
    if (x.ndim() != 3)
        shape_fail("global_avg_pool", "input must be CxHxW, got " + shape_str(x.shape()));
    const int c = x.dim(0);
    const std::int64_t m = static_cast<std::int64_t>(x.dim(1)) * x.dim(2);
    std::vector<T> out(static_cast<size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
        double s = 0;
        const T* xi = x.data() + ch * m;
        for (std::int64_t i = 0; i < m; ++i) s += xi[i];
        out[static_cast<size_t>(ch)] = static_cast<T>(s / static_cast<double>(m));
    }
    auto xn = x.node_ptr();
    auto bw = [xn, c, m](NodeT<T>& o) {
        if (!xn->requires_grad) return;
        if (xn->grad.empty()) xn->grad.assign(xn->data.size(), T(0));
        for (int ch = 0; ch < c; ++ch) {
            const T g = o.grad[static_cast<size_t>(ch)] / static_cast<T>(m);
            T* dst = xn->grad.data() + ch * m;
            for (std::int64_t i = 0; i < m; ++i) dst[i] += g;
        }
    };
    return make_node<T>({c, 1, 1}, std::move(out), {x}, bw, "global_avg_pool");
}

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int out_h, int out_w) {
    check_defined(x, "bilinear_upsample");
    if (x.ndim() != 3)
        shape_fail("bilinear_upsample", "input must be CxHxW, got " + shape_str(x.shape()));
    if (out_h < 1 || out_w < 1) throw UsageError("bilinear_upsample: output size must be >= 1");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);

    // half-pixel-center source coordinates, clamped at the borders
    auto make_table = [](int in, int out, std::vector<int>& i0, std::vector<int>& i1,
                         std::vector<T>& frac) {
        i0.resize(static_cast<size_t>(out));
        i1.resize(static_cast<size_t>(out));
        frac.resize(static_cast<size_t>(out));
        const double scale = static_cast<double>(in) / out;
        for (int o = 0; o < out; ++o) {
            double src = (o + 0.5) * scale - 0.5;
            if (src < 0) src = 0;
            if (src > in - 1) src = in - 1;
            const int lo = static_cast<int>(src);
            i0[static_cast<size_t>(o)] = lo;
            i1[static_cast<size_t>(o)] = std::min(lo + 1, in - 1);
            frac[static_cast<size_t>(o)] = static_cast<T>(src - lo);
        }
    };
    std::vector<int> y0, y1, x0, x1;
    std::vector<T> fy, fx;
    make_table(h, out_h, y0, y1, fy);
    make_table(w, out_w, x0, x1, fx);

    std::vector<T> out(static_cast<size_t>(c) * out_h * out_w);
    const T* xi = x.data();
    for (int ch = 0; ch < c; ++ch) {
        const T* plane = xi + static_cast<std::int64_t>(ch) * h * w;
        T* op = out.data() + static_cast<std::int64_t>(ch) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const T wy = fy[static_cast<size_t>(oy)];
            const T* r0 = plane + static_cast<std::int64_t>(y0[static_cast<size_t>(oy)]) * w;
            const T* r1 = plane + static_cast<std::int64_t>(y1[static_cast<size_t>(oy)]) * w;
            for (int ox = 0; ox < out_w; ++ox) {
                const T wx = fx[static_cast<size_t>(ox)];
                const int a = x0[static_cast<size_t>(ox)], b = x1[static_cast<size_t>(ox)];
                const T top = r0[a] * (T(1) - wx) + r0[b] * wx;
                const T bot = r1[a] * (T(1) - wx) + r1[b] * wx;
                op[oy * out_w + ox] = top * (T(1) - wy) + bot * wy;
            }
        }
    }
    auto xn = x.node_ptr();
    auto bw = [xn, c, h, w, out_h, out_w, y0, y1, x0, x1, fy, fx](NodeT<T>& o) {
        if (!xn->requires_grad) return;
        if (xn->grad.empty()) xn->grad.assign(xn->data.size(), T(0));
        const T* dy = o.grad.data();
        for (int ch = 0; ch < c; ++ch) {
            T* dx = xn->grad.data() + static_cast<std::int64_t>(ch) * h * w;
            const T* gp = dy + static_cast<std::int64_t>(ch) * out_h * out_w;
            for (int oy = 0; oy < out_h; ++oy) {
                const T wy = fy[static_cast<size_t>(oy)];
                const int ya = y0[static_cast<size_t>(oy)], yb = y1[static_cast<size_t>(oy)];
                for (int ox = 0; ox < out_w; ++ox) {
                    const T wx = fx[static_cast<size_t>(ox)];
                    const int xa = x0[static_cast<size_t>(ox)], xb = x1[static_cast<size_t>(ox)];
                    const T g = gp[oy * out_w + ox];
                    dx[ya * w + xa] += g * (T(1) - wy) * (T(1) - wx);
                    dx[ya * w + xb] += g * (T(1) - wy) * wx;
                    dx[yb * w + xa] += g * wy * (T(1) - wx);
                    dx[yb * w + xb] += g * wy * wx;
                }
            }
        }
    };
    return make_node<T>({c, out_h, out_w}, std::move(out), {x}, bw, "bilinear_upsample");
}

template <typename T>
Tensor<T> nearest_upsample(const Tensor<T>& x, int factor) {
    check_defined(x, "nearest_upsample");
    if (x.ndim() != 3)
        shape_fail("nearest_upsample", "input must be CxHxW, got " + shape_str(x.shape()));
    if (factor < 1) throw UsageError("nearest_upsample: factor must be >= 1");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int oh = h * factor, ow = w * factor;
    std::vector<T> out(static_cast<size_t>(c) * oh * ow);
    const T* xi = x.data();
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                out[(static_cast<size_t>(ch) * oh + oy) * ow + ox] =
                    xi[(static_cast<std::int64_t>(ch) * h + oy / factor) * w + ox / factor];
    auto xn = x.node_ptr();
    auto bw = [xn, c, h, w, oh, ow, factor](NodeT<T>& o) {
        if (!xn->requires_grad) return;
        if (xn->grad.empty()) xn->grad.assign(xn->data.size(), T(0));
        const T* dy = o.grad.data();
        for (int ch = 0; ch < c; ++ch)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox)
                    xn->grad[(static_cast<size_t>(ch) * h + oy / factor) * w + ox / factor] +=
                        dy[(static_cast<std::int64_t>(ch) * oh + oy) * ow + ox];
    };
    return make_node<T>({c, oh, ow}, std::move(out), {x}, bw, "nearest_upsample");
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    check_defined(a, "matmul");
    check_defined(b, "matmul");
    if (a.ndim() != 2 || b.ndim() != 2)
        shape_fail("matmul", shape_str(a.shape()) + " x " + shape_str(b.shape()) + " (need 2-D)");
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        shape_fail("matmul", "inner dims " + std::to_string(k) + " vs " + std::to_string(k2));
    std::vector<T> out(static_cast<size_t>(m) * n);
    blas_gemm(false, false, m, n, k, T(1), a.data(), k, b.data(), n, T(0), out.data(), n);
    auto an = a.node_ptr();
    auto bn = b.node_ptr();
    auto bw = [an, bn, m, n, k](NodeT<T>& o) {
        const T* dy = o.grad.data();
        if (an->requires_grad) {
            if (an->grad.empty()) an->grad.assign(an->data.size(), T(0));
            blas_gemm(false, true, m, k, n, T(1), dy, n, bn->data.data(), n, T(1), an->grad.data(),
                      k);
        }
        if (bn->requires_grad) {
            if (bn->grad.empty()) bn->grad.assign(bn->data.size(), T(0));
            blas_gemm(true, false, k, n, m, T(1), an->data.data(), k, dy, n, T(1), bn->grad.data(),
                      n);
        }
    };
    return make_node<T>({m, n}, std::move(out), {a, b}, bw, "matmul");
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    check_defined(a, "transpose");
    if (a.ndim() != 2) shape_fail("transpose", "need 2-D, got " + shape_str(a.shape()));
    const int m = a.dim(0), n = a.dim(1);
    std::vector<T> out(static_cast<size_t>(m) * n);
    const T* ai = a.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = ai[static_cast<size_t>(i) * n + j];
    auto an = a.node_ptr();
    auto bw = [an, m, n](NodeT<T>& o) {
        if (!an->requires_grad) return;
        if (an->grad.empty()) an->grad.assign(an->data.size(), T(0));
        const T* dy = o.grad.data();
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < m; ++i)
                an->grad[static_cast<size_t>(i) * n + j] += dy[static_cast<size_t>(j) * m + i];
    };
    return make_node<T>({n, m}, std::move(out), {a}, bw, "transpose");
}

// ---- broadcasting binary ops ------------------------------------------------

namespace {

struct BcastPlan {
    Shape out;
    std::array<std::int64_t, 4> stride_a{}, stride_b{};
    std::array<std::int64_t, 4> dims{};
};

inline BcastPlan bcast_plan(const Shape& a, const Shape& b, const char* op) {
    if (a.size() != b.size() || a.size() > 4)
        throw UsageError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b) + " (need equal rank <= 4)");
    BcastPlan p;
    const size_t nd = a.size();
    p.out.resize(nd);
    for (size_t i = 0; i < nd; ++i) {
        if (a[i] != b[i] && a[i] != 1 && b[i] != 1)
            throw UsageError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                             shape_str(b) + " at dim " + std::to_string(i));
        p.out[i] = std::max(a[i], b[i]);
    }
    // pad to 4-D on the left
    std::array<std::int64_t, 4> da{1, 1, 1, 1}, db{1, 1, 1, 1}, dout{1, 1, 1, 1};
    for (size_t i = 0; i < nd; ++i) {
        da[4 - nd + i] = a[i];
        db[4 - nd + i] = b[i];
        dout[4 - nd + i] = p.out[i];
    }
    std::array<std::int64_t, 4> sa{}, sb{};
    std::int64_t ra = 1, rb = 1;
    for (int i = 3; i >= 0; --i) {
        sa[static_cast<size_t>(i)] = (da[static_cast<size_t>(i)] == 1) ? 0 : ra;
        sb[static_cast<size_t>(i)] = (db[static_cast<size_t>(i)] == 1) ? 0 : rb;
        ra *= da[static_cast<size_t>(i)];
        rb *= db[static_cast<size_t>(i)];
    }
    p.stride_a = sa;
    p.stride_b = sb;
    p.dims = dout;
    return p;
}

enum class BinOp { Add, Mul };

template <typename T>
Tensor<T> binary_bcast(const Tensor<T>& a, const Tensor<T>& b, BinOp kind, const char* opname) {
    check_defined(a, opname);
    check_defined(b, opname);
    const auto plan = bcast_plan(a.shape(), b.shape(), opname);
    const auto& d = plan.dims;
    std::vector<T> out(static_cast<size_t>(d[0] * d[1] * d[2] * d[3]));
    const T* av = a.data();
    const T* bv = b.data();
    std::int64_t o = 0;
    for (std::int64_t i0 = 0; i0 < d[0]; ++i0)
        for (std::int64_t i1 = 0; i1 < d[1]; ++i1)
            for (std::int64_t i2 = 0; i2 < d[2]; ++i2) {
                const std::int64_t base_a =
                    i0 * plan.stride_a[0] + i1 * plan.stride_a[1] + i2 * plan.stride_a[2];
                const std::int64_t base_b =
                    i0 * plan.stride_b[0] + i1 * plan.stride_b[1] + i2 * plan.stride_b[2];
                const std::int64_t sa = plan.stride_a[3], sb = plan.stride_b[3];
                for (std::int64_t i3 = 0; i3 < d[3]; ++i3, ++o) {
                    const T x = av[base_a + i3 * sa];
                    const T y = bv[base_b + i3 * sb];
                    out[static_cast<size_t>(o)] = (kind == BinOp::Add) ? x + y : x * y;
                }
            }
    auto an = a.node_ptr();
    auto bn = b.node_ptr();
    auto bw = [an, bn, plan, kind](NodeT<T>& onode) {
        const auto& d = plan.dims;
        const T* dy = onode.grad.data();
        const bool na = an->requires_grad, nb = bn->requires_grad;
        if (na && an->grad.empty()) an->grad.assign(an->data.size(), T(0));
        if (nb && bn->grad.empty()) bn->grad.assign(bn->data.size(), T(0));
        std::int64_t o = 0;
        for (std::int64_t i0 = 0; i0 < d[0]; ++i0)
            for (std::int64_t i1 = 0; i1 < d[1]; ++i1)
                for (std::int64_t i2 = 0; i2 < d[2]; ++i2) {
                    const std::int64_t base_a =
                        i0 * plan.stride_a[0] + i1 * plan.stride_a[1] + i2 * plan.stride_a[2];
                    const std::int64_t base_b =
                        i0 * plan.stride_b[0] + i1 * plan.stride_b[1] + i2 * plan.stride_b[2];
                    const std::int64_t sa = plan.stride_a[3], sb = plan.stride_b[3];
                    for (std::int64_t i3 = 0; i3 < d[3]; ++i3, ++o) {
                        const std::int64_t ia = base_a + i3 * sa, ib = base_b + i3 * sb;
                        const T g = dy[o];
                        if (kind == BinOp::Add) {
                            if (na) an->grad[static_cast<size_t>(ia)] += g;
                            if (nb) bn->grad[static_cast<size_t>(ib)] += g;
                        } else {
                            if (na) an->grad[static_cast<size_t>(ia)] += g * bn->data[static_cast<size_t>(ib)];
                            if (nb) bn->grad[static_cast<size_t>(ib)] += g * an->data[static_cast<size_t>(ia)];
                        }
                    }
                }
    };
    return make_node<T>(plan.out, std::move(out), {a, b}, bw, opname);
}

} // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_bcast(a, b, BinOp::Add, "add");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_bcast(a, b, BinOp::Mul, "mul");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    check_defined(a, "sub");
    check_defined(b, "sub");
    if (a.shape() != b.shape())
        shape_fail("sub", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<T> out(a.vec().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto an = a.node_ptr();
    auto bn = b.node_ptr();
    auto bw = [an, bn](NodeT<T>& o) {
        if (an->requires_grad) an->accum_grad(o.grad.data(), static_cast<std::int64_t>(o.grad.size()));
        if (bn->requires_grad) {
            if (bn->grad.empty()) bn->grad.assign(bn->data.size(), T(0));
            for (size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] -= o.grad[i];
        }
    };
    return make_node<T>(a.shape(), std::move(out), {a, b}, bw, "sub");
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
    if (xs.empty()) throw UsageError("concat: empty input list");
    for (const auto& x : xs) check_defined(x, "concat");
    const auto& s0 = xs[0].shape();
    if (axis < 0 || axis >= static_cast<int>(s0.size()))
        throw UsageError("concat: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s0));
    Shape out_shape = s0;
    for (size_t i = 1; i < xs.size(); ++i) {
        const auto& si = xs[i].shape();
        if (si.size() != s0.size()) shape_fail("concat", shape_str(si) + " vs " + shape_str(s0));
        for (size_t d = 0; d < s0.size(); ++d)
            if (d != static_cast<size_t>(axis) && si[d] != s0[d])
                shape_fail("concat", shape_str(si) + " vs " + shape_str(s0) + " at dim " +
                                         std::to_string(d));
        out_shape[static_cast<size_t>(axis)] += si[static_cast<size_t>(axis)];
    }
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s0[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s0.size(); ++i) inner *= s0[i];

    std::vector<T> out(static_cast<size_t>(shape_numel(out_shape)));
    const std::int64_t out_ax = out_shape[static_cast<size_t>(axis)];
    std::int64_t off = 0;
    std::vector<std::int64_t> offsets;
    for (const auto& x : xs) {
        offsets.push_back(off);
        const std::int64_t ax = x.dim(axis);
        for (std::int64_t ou = 0; ou < outer; ++ou)
            std::memcpy(out.data() + (ou * out_ax + off) * inner,
                        x.data() + ou * ax * inner, sizeof(T) * static_cast<size_t>(ax * inner));
        off += ax;
    }
    std::vector<std::shared_ptr<NodeT<T>>> pnodes;
    std::vector<std::int64_t> axes;
    for (const auto& x : xs) {
        pnodes.push_back(x.node_ptr());
        axes.push_back(x.dim(axis));
    }
    auto bw = [pnodes, axes, offsets, outer, inner, out_ax](NodeT<T>& o) {
        const T* dy = o.grad.data();
        for (size_t pi = 0; pi < pnodes.size(); ++pi) {
            auto& p = *pnodes[pi];
            if (!p.requires_grad) continue;
            if (p.grad.empty()) p.grad.assign(p.data.size(), T(0));
            const std::int64_t ax = axes[pi], off2 = offsets[pi];
            for (std::int64_t ou = 0; ou < outer; ++ou) {
                const T* src = dy + (ou * out_ax + off2) * inner;
                T* dst = p.grad.data() + ou * ax * inner;
                for (std::int64_t i = 0; i < ax * inner; ++i) dst[i] += src[i];
            }
        }
    };
    return make_node<T>(out_shape, std::move(out), xs, bw, "concat");
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape target) {
    check_defined(x, "reshape");
    if (shape_numel(target) != x.numel())
        shape_fail("reshape", shape_str(x.shape()) + " -> " + shape_str(target) +
                                  " (element counts differ)");
    std::vector<T> out(x.vec());
    auto xn = x.node_ptr();
    auto bw = [xn](NodeT<T>& o) {
        if (xn->requires_grad) xn->accum_grad(o.grad.data(), static_cast<std::int64_t>(o.grad.size()));
    };
    return make_node<T>(std::move(target), std::move(out), {x}, bw, "reshape");
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    check_defined(x, "mean_all");
    const std::int64_t n = x.numel();
    double s = 0;
    for (std::int64_t i = 0; i < n; ++i) s += x.data()[i];
    auto xn = x.node_ptr();
    auto bw = [xn, n](NodeT<T>& o) {
        if (!xn->requires_grad) return;
        if (xn->grad.empty()) xn->grad.assign(xn->data.size(), T(0));
        const T g = o.grad[0] / static_cast<T>(n);
        for (auto& v : xn->grad) v += g;
    };
    return make_node<T>({1}, {static_cast<T>(s / static_cast<double>(n))}, {x}, bw, "mean_all");
}

template <typename T>
Tensor<T> mean_over_axis(const Tensor<T>& x, int axis) {
    check_defined(x, "mean_over_axis");
    const auto& s = x.shape();
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw UsageError("mean_over_axis: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s));
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
    const std::int64_t nax = s[static_cast<size_t>(axis)];
    Shape out_shape = s;
    out_shape[static_cast<size_t>(axis)] = 1;
    std::vector<T> out(static_cast<size_t>(outer * inner));
    const T* xi = x.data();
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t in = 0; in < inner; ++in) {
            double acc = 0;
            for (std::int64_t j = 0; j < nax; ++j) acc += xi[(o * nax + j) * inner + in];
            out[static_cast<size_t>(o * inner + in)] = static_cast<T>(acc / static_cast<double>(nax));
        }
    auto xn = x.node_ptr();
    auto bw = [xn, outer, inner, nax](NodeT<T>& o) {
        if (!xn->requires_grad) return;
        if (xn->grad.empty()) xn->grad.assign(xn->data.size(), T(0));
        for (std::int64_t ou = 0; ou < outer; ++ou)
            for (std::int64_t in = 0; in < inner; ++in) {
                const T g = o.grad[static_cast<size_t>(ou * inner + in)] / static_cast<T>(nax);
                for (std::int64_t j = 0; j < nax; ++j)
                    xn->grad[static_cast<size_t>((ou * nax + j) * inner + in)] += g;
            }
    };
    return make_node<T>(out_shape, std::move(out), {x}, bw, "mean_over_axis");
}

template <typename T>
Tensor<T> mean_of_list(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw UsageError("mean_of_list: empty input list");
    const auto& s0 = xs[0].shape();
    for (const auto& x : xs) {
        check_defined(x, "mean_of_list");
        if (x.shape() != s0)
            shape_fail("mean_of_list", shape_str(x.shape()) + " vs " + shape_str(s0));
    }
    const size_t n = xs.size();
    const std::int64_t m = xs[0].numel();
    std::vector<T> out(static_cast<size_t>(m));
    std::vector<T> lane(n);
    for (std::int64_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < n; ++j) lane[j] = xs[j].data()[i];
        std::sort(lane.begin(), lane.end());
        double acc = 0;
        for (size_t j = 0; j < n; ++j) acc += lane[j];
        out[static_cast<size_t>(i)] = static_cast<T>(acc / static_cast<double>(n));
    }
    std::vector<std::shared_ptr<NodeT<T>>> pnodes;
    for (const auto& x : xs) pnodes.push_back(x.node_ptr());
    auto bw = [pnodes, n](NodeT<T>& o) {
        for (auto& pn : pnodes) {
            if (!pn->requires_grad) continue;
            if (pn->grad.empty()) pn->grad.assign(pn->data.size(), T(0));
            for (size_t i = 0; i < o.grad.size(); ++i)
                pn->grad[i] += o.grad[i] / static_cast<T>(n);
        }
    };
    return make_node<T>(s0, std::move(out), xs, bw, "mean_of_list");
}

template <typename T>
Tensor<T> l1(const Tensor<T>& a, const Tensor<T>& b) {
    check_defined(a, "l1");
    check_defined(b, "l1");
    if (a.shape() != b.shape()) shape_fail("l1", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::int64_t n = a.numel();
    double s = 0;
    for (std::int64_t i = 0; i < n; ++i) s += std::fabs(static_cast<double>(a.data()[i]) - b.data()[i]);
    auto an = a.node_ptr();
    auto bn = b.node_ptr();
    auto bw = [an, bn, n](NodeT<T>& o) {
        const T g = o.grad[0] / static_cast<T>(n);
        const bool na = an->requires_grad, nb = bn->requires_grad;
        if (na && an->grad.empty()) an->grad.assign(an->data.size(), T(0));
        if (nb && bn->grad.empty()) bn->grad.assign(bn->data.size(), T(0));
        for (std::int64_t i = 0; i < n; ++i) {
            const T d = an->data[static_cast<size_t>(i)] - bn->data[static_cast<size_t>(i)];
            const T sg = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
            if (na) an->grad[static_cast<size_t>(i)] += g * sg;
            if (nb) bn->grad[static_cast<size_t>(i)] -= g * sg;
        }
    };
    return make_node<T>({1}, {static_cast<T>(s / static_cast<double>(n))}, {a, b}, bw, "l1");
}

template <typename T>
Tensor<T> l2(const Tensor<T>& a, const Tensor<T>& b) {
    check_defined(a, "l2");
    check_defined(b, "l2");
    if (a.shape() != b.shape()) shape_fail("l2", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::int64_t n = a.numel();
    double s = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a.data()[i]) - b.data()[i];
        s += d * d;
    }
    const double val = std::sqrt(s / static_cast<double>(n));
    auto an = a.node_ptr();
    auto bn = b.node_ptr();
    auto bw = [an, bn, n, val](NodeT<T>& o) {
        // d/da sqrt(mean d^2) = d / (n * value); guard the value for the
        // exact-equality case so the subgradient is 0, not NaN
        const double denom = static_cast<double>(n) * std::max(val, 1e-12);
        const T g = o.grad[0];
        const bool na = an->requires_grad, nb = bn->requires_grad;
        if (na && an->grad.empty()) an->grad.assign(an->data.size(), T(0));
        if (nb && bn->grad.empty()) bn->grad.assign(bn->data.size(), T(0));
        for (std::int64_t i = 0; i < n; ++i) {
            const double d = static_cast<double>(an->data[static_cast<size_t>(i)]) -
                             bn->data[static_cast<size_t>(i)];
            const T t = static_cast<T>(d / denom) * g;
            if (na) an->grad[static_cast<size_t>(i)] += t;
            if (nb) bn->grad[static_cast<size_t>(i)] -= t;
        }
    };
    return make_node<T>({1}, {static_cast<T>(val)}, {a, b}, bw, "l2");
}

// ---- dispatch ----------------------------------------------------------------

namespace {

std::int64_t attr_int(const Attrs& attrs, const std::string& key, std::int64_t def) {
    auto it = attrs.find(key);
    if (it == attrs.end()) return def;
    if (const auto* v = std::get_if<std::int64_t>(&it->second)) return *v;
    if (const auto* v = std::get_if<double>(&it->second)) return static_cast<std::int64_t>(*v);
    throw UsageError("attribute '" + key + "' must be an integer");
}

std::int64_t attr_int_required(const Attrs& attrs, const std::string& key, const char* op) {
    auto it = attrs.find(key);
    if (it == attrs.end())
        throw UsageError(std::string(op) + ": required attribute '" + key + "' missing");
    return attr_int(attrs, key, 0);
}

double attr_double(const Attrs& attrs, const std::string& key, double def) {
    auto it = attrs.find(key);
    if (it == attrs.end()) return def;
    if (const auto* v = std::get_if<double>(&it->second)) return *v;
    if (const auto* v = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*v);
    throw UsageError("attribute '" + key + "' must be a number");
}

template <typename T>
const Tensor<T>& want(const std::vector<Tensor<T>>& xs, size_t i, const char* op) {
    if (i >= xs.size())
        throw UsageError(std::string(op) + ": expected at least " + std::to_string(i + 1) +
                         " inputs, got " + std::to_string(xs.size()));
    return xs[i];
}

} // namespace

template <typename T>
Tensor<T> primitive_forward(const std::string& op_id, const std::vector<Tensor<T>>& inputs,
                            const Attrs& attrs) {
    if (op_id == "conv2d") {
        Tensor<T> bias = inputs.size() > 2 ? inputs[2] : Tensor<T>{};
        int pad = static_cast<int>(attr_int(attrs, "padding", -1));
        if (auto it = attrs.find("padding");
            it != attrs.end() && std::holds_alternative<std::string>(it->second)) {
            if (std::get<std::string>(it->second) != "same")
                throw UsageError("conv2d: unknown padding '" + std::get<std::string>(it->second) + "'");
            pad = -1;
        }
        return conv2d(want(inputs, 0, "conv2d"), want(inputs, 1, "conv2d"), bias,
                      static_cast<int>(attr_int(attrs, "stride", 1)), pad);
    }
    if (op_id == "instance_norm")
        return instance_norm(want(inputs, 0, "instance_norm"), want(inputs, 1, "instance_norm"),
                             want(inputs, 2, "instance_norm"), attr_double(attrs, "eps", 1e-5));
    if (op_id == "relu") return relu(want(inputs, 0, "relu"));
    if (op_id == "sigmoid") return sigmoid(want(inputs, 0, "sigmoid"));
    if (op_id == "tanh") return tanh(want(inputs, 0, "tanh"));
    if (op_id == "softmax")
        return softmax(want(inputs, 0, "softmax"),
                       static_cast<int>(attr_int_required(attrs, "axis", "softmax")));
    if (op_id == "max_pool")
        return max_pool(want(inputs, 0, "max_pool"),
                        static_cast<int>(attr_int_required(attrs, "kernel", "max_pool")),
                        static_cast<int>(attr_int(attrs, "stride",
                                                  attr_int_required(attrs, "kernel", "max_pool"))));
    if (op_id == "avg_pool")
        return avg_pool(want(inputs, 0, "avg_pool"),
                        static_cast<int>(attr_int_required(attrs, "kernel", "avg_pool")),
                        static_cast<int>(attr_int(attrs, "stride",
                                                  attr_int_required(attrs, "kernel", "avg_pool"))));
    if (op_id == "global_avg_pool") return global_avg_pool(want(inputs, 0, "global_avg_pool"));
    if (op_id == "bilinear_upsample") {
        const auto& x = want(inputs, 0, "bilinear_upsample");
        if (attrs.count("factor")) {
            const int f = static_cast<int>(attr_int(attrs, "factor", 2));
            return bilinear_upsample(x, x.dim(1) * f, x.dim(2) * f);
        }
        return bilinear_upsample(
            x, static_cast<int>(attr_int_required(attrs, "out_h", "bilinear_upsample")),
            static_cast<int>(attr_int_required(attrs, "out_w", "bilinear_upsample")));
    }
    if (op_id == "nearest_upsample")
        return nearest_upsample(want(inputs, 0, "nearest_upsample"),
                                static_cast<int>(attr_int_required(attrs, "factor", "nearest_upsample")));
    if (op_id == "matmul") return matmul(want(inputs, 0, "matmul"), want(inputs, 1, "matmul"));
    if (op_id == "add") return add(want(inputs, 0, "add"), want(inputs, 1, "add"));
    if (op_id == "mul") return mul(want(inputs, 0, "mul"), want(inputs, 1, "mul"));
    if (op_id == "concat")
        return concat(inputs, static_cast<int>(attr_int_required(attrs, "axis", "concat")));
    if (op_id == "reshape") {
        auto it = attrs.find("shape");
        if (it == attrs.end() || !std::holds_alternative<std::vector<int>>(it->second))
            throw UsageError("reshape: required attribute 'shape' missing");
        return reshape(want(inputs, 0, "reshape"), std::get<std::vector<int>>(it->second));
    }
    if (op_id == "mean_over_axis") {
        const std::int64_t axis = attr_int(attrs, "axis", -1);
        if (axis < 0) return mean_all(want(inputs, 0, "mean_over_axis"));
        return mean_over_axis(want(inputs, 0, "mean_over_axis"), static_cast<int>(axis));
    }
    if (op_id == "l1") return l1(want(inputs, 0, "l1"), want(inputs, 1, "l1"));
    if (op_id == "l2") return l2(want(inputs, 0, "l2"), want(inputs, 1, "l2"));
    throw UsageError("primitive_forward: unknown op_id '" + op_id + "'");
}

#define UIERL_OPS_INSTANTIATE(T)                                                                   \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int); \
    template Tensor<T> instance_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                        double);                                                  \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                 \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                              \
    template Tensor<T> tanh<T>(const Tensor<T>&);                                                 \
    template Tensor<T> softmax<T>(const Tensor<T>&, int);                                         \
    template Tensor<T> max_pool<T>(const Tensor<T>&, int, int);                                   \
    template Tensor<T> avg_pool<T>(const Tensor<T>&, int, int);                                   \
    template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                                      \
    template Tensor<T> bilinear_upsample<T>(const Tensor<T>&, int, int);                          \
    template Tensor<T> nearest_upsample<T>(const Tensor<T>&, int);                                \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                             \
    template Tensor<T> transpose<T>(const Tensor<T>&);                                            \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> scale<T>(const Tensor<T>&, double);                                        \
    template Tensor<T> add_scalar<T>(const Tensor<T>&, double);                                   \
    template Tensor<T> square<T>(const Tensor<T>&);                                               \
    template Tensor<T> abs<T>(const Tensor<T>&);                                                  \
    template Tensor<T> rsqrt<T>(const Tensor<T>&);                                                \
    template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, int);                             \
    template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                       \
    template Tensor<T> mean_all<T>(const Tensor<T>&);                                             \
    template Tensor<T> mean_over_axis<T>(const Tensor<T>&, int);                                  \
    template Tensor<T> mean_of_list<T>(const std::vector<Tensor<T>>&);                            \
    template Tensor<T> l1<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> l2<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> primitive_forward<T>(const std::string&, const std::vector<Tensor<T>>&,    \
                                            const Attrs&);

UIERL_OPS_INSTANTIATE(float)
UIERL_OPS_INSTANTIATE(double)

} // namespace uierl::ops
