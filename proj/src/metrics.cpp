#include "uierl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace uierl::metrics {

namespace {

void check_image(const Raster& img, const char* what) {
    if (!img.defined() || img.ndim() != 3 || img.dim(0) != 3)
        throw UsageError(std::string(what) + ": expected 3xHxW image");
}

// de-normalize to 8-bit sample values (0..255 doubles)
std::vector<double> quantize255(const Raster& img01) {
    std::vector<double> out(img01.vec().size());
    for (size_t i = 0; i < out.size(); ++i) {
        const double v = std::min(1.0, std::max(0.0, img01.data()[i]));
        out[i] = static_cast<double>(std::lround(v * 255.0));
    }
    return out;
}

double percentile_sorted(const std::vector<double>& sorted, double p) {
    const double pos = p * (static_cast<double>(sorted.size()) - 1.0);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

struct MeanStd {
    double mean = 0, var = 0;
};

MeanStd mean_var(const std::vector<double>& v) {
    MeanStd r;
    for (double x : v) r.mean += x;
    r.mean /= static_cast<double>(v.size());
    for (double x : v) r.var += (x - r.mean) * (x - r.mean);
    r.var /= static_cast<double>(v.size());
    return r;
}

// sRGB (0..255) to CIELab with D65 white
void rgb_to_lab(double r, double g, double b, double& L, double& A, double& B) {
    auto lin = [](double c) {
        c /= 255.0;
        return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
    };
    const double rl = lin(r), gl = lin(g), bl = lin(b);
    const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
    auto f = [](double t) {
        constexpr double d3 = (6.0 / 29.0) * (6.0 / 29.0) * (6.0 / 29.0);
        return t > d3 ? std::cbrt(t) : t / (3.0 * (6.0 / 29.0) * (6.0 / 29.0)) + 4.0 / 29.0;
    };
    const double fx = f(x / 0.95047), fy = f(y / 1.0), fz = f(z / 1.08883);
    L = 116.0 * fy - 16.0;
    A = 500.0 * (fx - fy);
    B = 200.0 * (fy - fz);
}

// Sobel gradient magnitude with replicated borders
std::vector<double> sobel_magnitude(const std::vector<double>& plane, int h, int w) {
    std::vector<double> out(plane.size());
    auto at = [&](int y, int x) {
        y = std::min(h - 1, std::max(0, y));
        x = std::min(w - 1, std::max(0, x));
        return plane[static_cast<size_t>(y) * w + x];
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double gx = -at(y - 1, x - 1) + at(y - 1, x + 1) - 2 * at(y, x - 1) +
                              2 * at(y, x + 1) - at(y + 1, x - 1) + at(y + 1, x + 1);
            const double gy = -at(y - 1, x - 1) - 2 * at(y - 1, x) - at(y - 1, x + 1) +
                              at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1);
            out[static_cast<size_t>(y) * w + x] = std::sqrt(gx * gx + gy * gy);
        }
    return out;
}

// alpha-trimmed mean: drop the lowest and highest alpha fractions
double trimmed_mean(std::vector<double> v, double alpha) {
    std::sort(v.begin(), v.end());
    const auto n = static_cast<std::int64_t>(v.size());
    const auto t = static_cast<std::int64_t>(std::floor(alpha * static_cast<double>(n)));
    double s = 0;
    std::int64_t count = 0;
    for (std::int64_t i = t; i < n - t; ++i) {
        s += v[static_cast<size_t>(i)];
        ++count;
    }
    return count > 0 ? s / static_cast<double>(count) : 0.0;
}

// EME-style blockwise log contrast: (2/K) sum ln(max/min), zero-guarded
double block_eme(const std::vector<double>& plane, int h, int w, int block) {
    const int k1 = h / block, k2 = w / block;
    double s = 0;
    for (int by = 0; by < k1; ++by)
        for (int bx = 0; bx < k2; ++bx) {
            double mn = 1e300, mx = -1e300;
            for (int y = by * block; y < (by + 1) * block; ++y)
                for (int x = bx * block; x < (bx + 1) * block; ++x) {
                    const double v = plane[static_cast<size_t>(y) * w + x];
                    mn = std::min(mn, v);
                    mx = std::max(mx, v);
                }
            if (mn > 0 && mx > 0 && mx > mn) s += std::log(mx / mn);
        }
    return 2.0 / (static_cast<double>(k1) * k2) * s;
}

// PLIP-flavored blockwise Michelson entropy: -(1/K) sum (t/b) ln(t/b)
double block_logamee(const std::vector<double>& plane, int h, int w, int block) {
    const int k1 = h / block, k2 = w / block;
    double s = 0;
    for (int by = 0; by < k1; ++by)
        for (int bx = 0; bx < k2; ++bx) {
            double mn = 1e300, mx = -1e300;
            for (int y = by * block; y < (by + 1) * block; ++y)
                for (int x = bx * block; x < (bx + 1) * block; ++x) {
                    const double v = plane[static_cast<size_t>(y) * w + x];
                    mn = std::min(mn, v);
                    mx = std::max(mx, v);
                }
            const double top = mx - mn, bot = mx + mn;
            if (top > 0 && bot > 0) s += (top / bot) * std::log(top / bot);
        }
    return -s / (static_cast<double>(k1) * k2);
}

std::vector<double> luminance(const std::vector<double>& rgb, std::int64_t m) {
    std::vector<double> out(static_cast<size_t>(m));
    for (std::int64_t i = 0; i < m; ++i)
        out[static_cast<size_t>(i)] =
            0.299 * rgb[static_cast<size_t>(i)] + 0.587 * rgb[static_cast<size_t>(m + i)] +
            0.114 * rgb[static_cast<size_t>(2 * m + i)];
    return out;
}

} // namespace

double uciqe(const Raster& img01, const MetricWeights& w) {
    check_image(img01, "uciqe");
    const auto rgb = quantize255(img01);
    const std::int64_t m = static_cast<std::int64_t>(img01.dim(1)) * img01.dim(2);

    std::vector<double> chroma(static_cast<size_t>(m)), lum(static_cast<size_t>(m));
    std::vector<double> sat(static_cast<size_t>(m));
    for (std::int64_t i = 0; i < m; ++i) {
        double L, A, B;
        rgb_to_lab(rgb[static_cast<size_t>(i)], rgb[static_cast<size_t>(m + i)],
                   rgb[static_cast<size_t>(2 * m + i)], L, A, B);
        const double c = std::sqrt(A * A + B * B) / 100.0;
        chroma[static_cast<size_t>(i)] = c;
        lum[static_cast<size_t>(i)] = L / 100.0;
        sat[static_cast<size_t>(i)] = L < 1.0 ? 0.0 : c / (L / 100.0);
    }
    const auto cs = mean_var(chroma);
    auto sorted = lum;
    std::sort(sorted.begin(), sorted.end());
    const double contrast = percentile_sorted(sorted, 0.99) - percentile_sorted(sorted, 0.01);
    double mean_sat = 0;
    for (double s : sat) mean_sat += s;
    mean_sat /= static_cast<double>(m);
    return w.uciqe_c1 * std::sqrt(cs.var) + w.uciqe_c2 * contrast + w.uciqe_c3 * mean_sat;
}

double uiqm(const Raster& img01, const MetricWeights& w) {
    check_image(img01, "uiqm");
    const int h = img01.dim(1), wd = img01.dim(2);
    if (h < w.block || wd < w.block)
        throw UsageError("uiqm: image " + std::to_string(h) + "x" + std::to_string(wd) +
                         " smaller than one " + std::to_string(w.block) + "x" +
                         std::to_string(w.block) + " block");
    const auto rgb = quantize255(img01);
    const std::int64_t m = static_cast<std::int64_t>(h) * wd;

    // colorfulness from the opponent channels
    std::vector<double> rgv(static_cast<size_t>(m)), ybv(static_cast<size_t>(m));
    for (std::int64_t i = 0; i < m; ++i) {
        const double r = rgb[static_cast<size_t>(i)];
        const double g = rgb[static_cast<size_t>(m + i)];
        const double b = rgb[static_cast<size_t>(2 * m + i)];
        rgv[static_cast<size_t>(i)] = r - g;
        ybv[static_cast<size_t>(i)] = (r + g) / 2.0 - b;
    }
    const double mu_rg = trimmed_mean(rgv, w.alpha_trim);
    const double mu_yb = trimmed_mean(ybv, w.alpha_trim);
    double var_rg = 0, var_yb = 0;
    for (std::int64_t i = 0; i < m; ++i) {
        var_rg += (rgv[static_cast<size_t>(i)] - mu_rg) * (rgv[static_cast<size_t>(i)] - mu_rg);
        var_yb += (ybv[static_cast<size_t>(i)] - mu_yb) * (ybv[static_cast<size_t>(i)] - mu_yb);
    }
    var_rg /= static_cast<double>(m);
    var_yb /= static_cast<double>(m);
    const double uicm = w.uicm_w1 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb) +
                        w.uicm_w2 * std::sqrt(var_rg + var_yb);

    // sharpness: Sobel-weighted EME per channel, luma-weighted sum
    const double lam[3] = {0.299, 0.587, 0.114};
    double uism = 0;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> plane(rgb.begin() + c * m, rgb.begin() + (c + 1) * m);
        auto mag = sobel_magnitude(plane, h, wd);
        for (std::int64_t i = 0; i < m; ++i) mag[static_cast<size_t>(i)] *= plane[static_cast<size_t>(i)];
        uism += lam[c] * block_eme(mag, h, wd, w.block);
    }

    // contrast: blockwise logAMEE on the luminance
    const double uiconm = block_logamee(luminance(rgb, m), h, wd, w.block);

    return w.uiqm_c1 * uicm + w.uiqm_c2 * uism + w.uiqm_c3 * uiconm;
}

double ccf(const Raster& img01, const MetricWeights& w) {
    check_image(img01, "ccf");
    const auto rgb = quantize255(img01);
    const std::int64_t m = static_cast<std::int64_t>(img01.dim(1)) * img01.dim(2);

    std::vector<double> rgv(static_cast<size_t>(m)), ybv(static_cast<size_t>(m));
    std::vector<double> dark(static_cast<size_t>(m));
    for (std::int64_t i = 0; i < m; ++i) {
        const double r = rgb[static_cast<size_t>(i)];
        const double g = rgb[static_cast<size_t>(m + i)];
        const double b = rgb[static_cast<size_t>(2 * m + i)];
        rgv[static_cast<size_t>(i)] = r - g;
        ybv[static_cast<size_t>(i)] = (r + g) / 2.0 - b;
        dark[static_cast<size_t>(i)] = std::min(r, std::min(g, b));
    }
    const auto rs = mean_var(rgv);
    const auto ys = mean_var(ybv);
    const double colorfulness = std::sqrt(rs.var + ys.var) +
                                0.3 * std::sqrt(rs.mean * rs.mean + ys.mean * ys.mean);
    const double contrast = std::sqrt(mean_var(luminance(rgb, m)).var);
    double dmean = 0;
    for (double v : dark) dmean += v;
    const double clarity = 1.0 - dmean / static_cast<double>(m) / 255.0;
    return w.ccf_w1 * colorfulness + w.ccf_w2 * contrast + w.ccf_w3 * clarity;
}

double edge_intensity(const Raster& img01) {
    check_image(img01, "edge_intensity");
    const int h = img01.dim(1), wd = img01.dim(2);
    const auto rgb = quantize255(img01);
    const std::int64_t m = static_cast<std::int64_t>(h) * wd;
    const auto mag = sobel_magnitude(luminance(rgb, m), h, wd);
    double s = 0;
    for (double v : mag) s += v;
    return s / static_cast<double>(m);
}

double angular_error_deg(const Raster& enhanced01, const Raster& reference01) {
    check_image(enhanced01, "angular_error");
    check_image(reference01, "angular_error");
    if (enhanced01.shape() != reference01.shape())
        throw UsageError("angular_error: shapes " + shape_str(enhanced01.shape()) + " vs " +
                         shape_str(reference01.shape()));
    const std::int64_t m = static_cast<std::int64_t>(enhanced01.dim(1)) * enhanced01.dim(2);
    double sum = 0;
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < m; ++i) {
        const double e0 = enhanced01.data()[i], e1 = enhanced01.data()[m + i],
                     e2 = enhanced01.data()[2 * m + i];
        const double r0 = reference01.data()[i], r1 = reference01.data()[m + i],
                     r2 = reference01.data()[2 * m + i];
        const double ne = std::sqrt(e0 * e0 + e1 * e1 + e2 * e2);
        const double nr = std::sqrt(r0 * r0 + r1 * r1 + r2 * r2);
        if (ne == 0.0 || nr == 0.0) continue;
        double cosv = (e0 * r0 + e1 * r1 + e2 * r2) / (ne * nr);
        cosv = std::min(1.0, std::max(-1.0, cosv));
        // rounding in the dot/norm ratio leaves parallel vectors a few ulps
        // under 1; snap those to an exact zero angle
        if (cosv > 1.0 - 1e-12) cosv = 1.0;
        sum += std::acos(cosv) * 180.0 / 3.14159265358979323846;
        ++count;
    }
    if (count == 0) throw DataError("angular_error: no pixels with nonzero norm in both images");
    return sum / static_cast<double>(count);
}

double psnr_db(const Raster& a01, const Raster& b01) {
    check_image(a01, "psnr");
    check_image(b01, "psnr");
    if (a01.shape() != b01.shape())
        throw UsageError("psnr: shapes " + shape_str(a01.shape()) + " vs " +
                         shape_str(b01.shape()));
    double mse = 0;
    for (std::int64_t i = 0; i < a01.numel(); ++i) {
        const double d = a01.data()[i] - b01.data()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a01.numel());
    if (mse == 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

MetricRow MetricReport::means() const {
    MetricRow m;
    m.image = "mean";
    if (rows.empty()) return m;
    double asum = 0, psum = 0;
    std::int64_t acount = 0, pcount = 0;
    for (const auto& r : rows) {
        m.uiqm += r.uiqm;
        m.uciqe += r.uciqe;
        m.ccf += r.ccf;
        m.edge += r.edge;
        if (r.angular) {
            asum += *r.angular;
            ++acount;
        }
        if (r.psnr) {
            psum += *r.psnr;
            ++pcount;
        }
    }
    const double n = static_cast<double>(rows.size());
    m.uiqm /= n;
    m.uciqe /= n;
    m.ccf /= n;
    m.edge /= n;
    if (acount) m.angular = asum / static_cast<double>(acount);
    if (pcount) m.psnr = psum / static_cast<double>(pcount);
    return m;
}

void write_report_csv(const std::filesystem::path& path, const MetricReport& report) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write metrics report '" + path.string() + "'");
    f << "image_path,uiqm,uciqe,ccf,edge,angular_error,psnr\n";
    char buf[64];
    auto emit = [&](const MetricRow& r) {
        f << r.image;
        auto num = [&](double v) {
            std::snprintf(buf, sizeof(buf), ",%.9g", v);
            f << buf;
        };
        num(r.uiqm);
        num(r.uciqe);
        num(r.ccf);
        num(r.edge);
        if (r.angular) num(*r.angular); else f << ",";
        if (r.psnr) num(*r.psnr); else f << ",";
        f << "\n";
    };
    for (const auto& r : report.rows) emit(r);
    emit(report.means());
}

} // namespace uierl::metrics
