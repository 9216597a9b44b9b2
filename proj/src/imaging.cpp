#include "uierl/imaging.hpp"

#include <algorithm>
#include <cmath>

namespace uierl::imaging {

namespace {

void check_image(const Raster& img, const char* what) {
    if (!img.defined() || img.ndim() != 3 || img.dim(0) != 3)
        throw UsageError(std::string(what) + ": expected 3xHxW image, got " +
                         (img.defined() ? shape_str(img.shape()) : "undefined"));
}

void check_depth(const Raster& d, int h, int w, const char* what) {
    if (!d.defined() || d.ndim() != 3 || d.dim(0) != 1)
        throw UsageError(std::string(what) + ": expected 1xHxW depth, got " +
                         (d.defined() ? shape_str(d.shape()) : "undefined"));
    if (d.dim(1) != h || d.dim(2) != w)
        throw UsageError(std::string(what) + ": depth " + shape_str(d.shape()) +
                         " does not match image " + std::to_string(h) + "x" + std::to_string(w));
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

} // namespace

void WaterParams::validate() const {
    for (int c = 0; c < 3; ++c) {
        if (!(beta[static_cast<size_t>(c)] > 0.0) || beta[static_cast<size_t>(c)] > 10.0)
            throw UsageError("water params: beta[" + std::to_string(c) + "] = " +
                             std::to_string(beta[static_cast<size_t>(c)]) + " outside (0, 10]");
        if (ambient[static_cast<size_t>(c)] < 0.0 || ambient[static_cast<size_t>(c)] > 1.0)
            throw UsageError("water params: ambient[" + std::to_string(c) + "] = " +
                             std::to_string(ambient[static_cast<size_t>(c)]) + " outside [0, 1]");
    }
}

int SceneBatch::height() const { return views.empty() ? 0 : views[0].degraded.dim(1); }
int SceneBatch::width() const { return views.empty() ? 0 : views[0].degraded.dim(2); }

bool SceneBatch::has_references() const {
    for (const auto& v : views)
        if (!v.reference) return false;
    return !views.empty();
}

void SceneBatch::validate() const {
    if (views.empty()) throw UsageError("scene batch '" + scene_id + "': needs at least one view");
    const int h = views[0].degraded.dim(1), w = views[0].degraded.dim(2);
    const bool ref0 = views[0].reference.has_value();
    for (size_t i = 0; i < views.size(); ++i) {
        check_image(views[i].degraded, "scene view");
        if (views[i].degraded.dim(1) != h || views[i].degraded.dim(2) != w)
            throw UsageError("scene batch '" + scene_id + "': view sizes differ");
        if (views[i].reference.has_value() != ref0)
            throw UsageError("scene batch '" + scene_id +
                             "': references must be present for all views or none");
    }
}

Raster degrade(const Raster& clean, const Raster& depth, const WaterParams& water) {
    check_image(clean, "degrade");
    check_depth(depth, clean.dim(1), clean.dim(2), "degrade");
    water.validate();
    const std::int64_t m = static_cast<std::int64_t>(clean.dim(1)) * clean.dim(2);
    for (std::int64_t i = 0; i < 3 * m; ++i) {
        const double v = clean.data()[i];
        if (v < 0.0 || v > 1.0)
            throw UsageError("degrade: clean image value " + std::to_string(v) + " outside [0,1]");
    }
    std::vector<double> out(static_cast<size_t>(3 * m));
    for (int c = 0; c < 3; ++c) {
        const double b = water.beta[static_cast<size_t>(c)];
        const double a = water.ambient[static_cast<size_t>(c)];
        for (std::int64_t i = 0; i < m; ++i) {
            const double t = std::exp(-b * depth.data()[i]);
            out[static_cast<size_t>(c * m + i)] = clean.data()[c * m + i] * t + a * (1.0 - t);
        }
    }
    return Raster::from(clean.shape(), std::move(out));
}

Raster restore_oracle(const Raster& degraded, const Raster& depth, const WaterParams& water) {
    check_image(degraded, "restore_oracle");
    check_depth(depth, degraded.dim(1), degraded.dim(2), "restore_oracle");
    water.validate();
    const std::int64_t m = static_cast<std::int64_t>(degraded.dim(1)) * degraded.dim(2);
    std::vector<double> out(static_cast<size_t>(3 * m));
    for (int c = 0; c < 3; ++c) {
        const double b = water.beta[static_cast<size_t>(c)];
        const double a = water.ambient[static_cast<size_t>(c)];
        for (std::int64_t i = 0; i < m; ++i) {
            const double t = std::exp(-b * depth.data()[i]);
            if (t < 1e-4)
                throw NumericError("restore_oracle: transmission " + std::to_string(t) +
                                   " below 1e-4 at pixel " + std::to_string(i) + ", channel " +
                                   std::to_string(c) + " (unstable inverse)");
            out[static_cast<size_t>(c * m + i)] = (degraded.data()[c * m + i] - a * (1.0 - t)) / t;
        }
    }
    return Raster::from(degraded.shape(), std::move(out));
}

Raster hflip(const Raster& img) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    std::vector<double> out(img.vec().size());
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out[(static_cast<size_t>(ch) * h + y) * w + x] =
                    img.data()[(static_cast<std::int64_t>(ch) * h + y) * w + (w - 1 - x)];
    return Raster::from(img.shape(), std::move(out));
}

Raster rot90(const Raster& img, int k) {
    k = ((k % 4) + 4) % 4;
    if (k == 0) return img.clone();
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (k == 2) {
        std::vector<double> out(img.vec().size());
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    out[(static_cast<size_t>(ch) * h + y) * w + x] =
                        img.data()[(static_cast<std::int64_t>(ch) * h + (h - 1 - y)) * w + (w - 1 - x)];
        return Raster::from(img.shape(), std::move(out));
    }
    // quarter turn: output is CxWxH; k=1 counterclockwise, k=3 clockwise
    std::vector<double> out(img.vec().size());
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < w; ++y)
            for (int x = 0; x < h; ++x) {
                const int sy = (k == 1) ? x : (h - 1 - x);
                const int sx = (k == 1) ? (w - 1 - y) : y;
                out[(static_cast<size_t>(ch) * w + y) * h + x] =
                    img.data()[(static_cast<std::int64_t>(ch) * h + sy) * w + sx];
            }
    return Raster::from({c, w, h}, std::move(out));
}

Raster crop_resize(const Raster& img, int y0, int x0, int crop_h, int crop_w, int out_h, int out_w) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (crop_h < 1 || crop_w < 1 || y0 < 0 || x0 < 0 || y0 + crop_h > h || x0 + crop_w > w)
        throw UsageError("crop_resize: crop " + std::to_string(crop_h) + "x" +
                         std::to_string(crop_w) + "+" + std::to_string(y0) + "+" +
                         std::to_string(x0) + " outside image " + shape_str(img.shape()));
    std::vector<double> out(static_cast<size_t>(c) * out_h * out_w);
    const double sy = static_cast<double>(crop_h) / out_h;
    const double sx = static_cast<double>(crop_w) / out_w;
    for (int ch = 0; ch < c; ++ch) {
        const double* plane = img.data() + static_cast<std::int64_t>(ch) * h * w;
        for (int oy = 0; oy < out_h; ++oy) {
            double fy = (oy + 0.5) * sy - 0.5;
            fy = std::min(std::max(fy, 0.0), crop_h - 1.0);
            const int iy0 = static_cast<int>(fy);
            const int iy1 = std::min(iy0 + 1, crop_h - 1);
            const double wy = fy - iy0;
            for (int ox = 0; ox < out_w; ++ox) {
                double fx = (ox + 0.5) * sx - 0.5;
                fx = std::min(std::max(fx, 0.0), crop_w - 1.0);
                const int ix0 = static_cast<int>(fx);
                const int ix1 = std::min(ix0 + 1, crop_w - 1);
                const double wx = fx - ix0;
                const double v00 = plane[(y0 + iy0) * w + (x0 + ix0)];
                const double v01 = plane[(y0 + iy0) * w + (x0 + ix1)];
                const double v10 = plane[(y0 + iy1) * w + (x0 + ix0)];
                const double v11 = plane[(y0 + iy1) * w + (x0 + ix1)];
                out[(static_cast<size_t>(ch) * out_h + oy) * out_w + ox] =
                    (v00 * (1 - wx) + v01 * wx) * (1 - wy) + (v10 * (1 - wx) + v11 * wx) * wy;
            }
        }
    }
    return Raster::from({c, out_h, out_w}, std::move(out));
}

SceneBatch synth_scene(const Raster& clean, const Raster& depth, const WaterParams& water,
                       int n_views, const JitterSpec& jitter, Rng& rng,
                       const std::string& scene_id) {
    check_image(clean, "synth_scene");
    check_depth(depth, clean.dim(1), clean.dim(2), "synth_scene");
    water.validate();
    if (n_views < 1 || n_views > 17)
        throw UsageError("synth_scene: n_views " + std::to_string(n_views) + " outside [1, 17]");
    const int h = clean.dim(1), w = clean.dim(2);

    SceneBatch batch;
    batch.scene_id = scene_id;
    batch.base_water = water;
    batch.jitter = jitter;
    for (int v = 0; v < n_views; ++v) {
        WaterParams wp = water;
        for (int c = 0; c < 3; ++c) {
            const double ub = rng.uniform(-1.0, 1.0);
            wp.beta[static_cast<size_t>(c)] = std::min(
                10.0, std::max(1e-6, wp.beta[static_cast<size_t>(c)] * (1.0 + ub * jitter.beta_frac)));
            const double ua = rng.uniform(-1.0, 1.0);
            wp.ambient[static_cast<size_t>(c)] =
                clamp01(wp.ambient[static_cast<size_t>(c)] + ua * jitter.ambient_abs);
        }
        const double frac = rng.uniform(0.0, jitter.max_crop);
        const int ch = std::max(1, static_cast<int>(std::lround(h * (1.0 - frac))));
        const int cw = std::max(1, static_cast<int>(std::lround(w * (1.0 - frac))));
        const int y0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h - ch + 1)));
        const int x0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w - cw + 1)));
        Raster ref = crop_resize(clean, y0, x0, ch, cw, h, w);
        Raster dep = crop_resize(depth, y0, x0, ch, cw, h, w);
        if (jitter.hflip && rng.coin()) {
            ref = hflip(ref);
            dep = hflip(dep);
        }
        SceneView view;
        view.degraded = degrade(ref, dep, wp);
        view.reference = std::move(ref);
        view.depth = std::move(dep);
        view.water = wp;
        batch.views.push_back(std::move(view));
    }
    return batch;
}

DepthProvider depth_provider_from_string(const std::string& s) {
    if (s == "ground_truth") return DepthProvider::GroundTruth;
    if (s == "red_channel_prior") return DepthProvider::RedChannelPrior;
    if (s == "constant") return DepthProvider::Constant;
    throw UsageError("unknown depth provider '" + s + "'");
}

std::string to_string(DepthProvider p) {
    switch (p) {
    case DepthProvider::GroundTruth: return "ground_truth";
    case DepthProvider::RedChannelPrior: return "red_channel_prior";
    case DepthProvider::Constant: return "constant";
    }
    return "?";
}

Raster estimate_depth(const SceneView& view, DepthProvider provider) {
    check_image(view.degraded, "estimate_depth");
    const int h = view.degraded.dim(1), w = view.degraded.dim(2);
    switch (provider) {
    case DepthProvider::GroundTruth:
        if (!view.depth)
            throw DataError("estimate_depth: ground_truth provider requested but the view has no "
                            "stored depth map");
        return view.depth->clone();
    case DepthProvider::Constant:
        return Raster::full({1, h, w}, 0.5);
    case DepthProvider::RedChannelPrior: {
        // 1 - red intensity, smoothed by an 11x11 box (windowed mean near the
        // borders), then min-max normalized; a constant map normalizes to 0.
        std::vector<double> d0(static_cast<size_t>(h) * w);
        for (int i = 0; i < h * w; ++i) d0[static_cast<size_t>(i)] = 1.0 - view.degraded.data()[i];
        std::vector<double> sm(d0.size());
        const int r = 5;
        for (int y = 0; y < h; ++y) {
            const int ya = std::max(0, y - r), yb = std::min(h - 1, y + r);
            for (int x = 0; x < w; ++x) {
                const int xa = std::max(0, x - r), xb = std::min(w - 1, x + r);
                double s = 0;
                for (int yy = ya; yy <= yb; ++yy)
                    for (int xx = xa; xx <= xb; ++xx) s += d0[static_cast<size_t>(yy) * w + xx];
                sm[static_cast<size_t>(y) * w + x] = s / ((yb - ya + 1) * (xb - xa + 1));
            }
        }
        double lo = sm[0], hi = sm[0];
        for (double v : sm) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo < 1e-9) {
            std::fill(sm.begin(), sm.end(), 0.0);
        } else {
            for (double& v : sm) v = (v - lo) / (hi - lo);
        }
        return Raster::from({1, h, w}, std::move(sm));
    }
    }
    throw UsageError("estimate_depth: invalid provider");
}

ProceduralScene procedural_scene(int h, int w, Rng& rng) {
    if (h < 8 || w < 8) throw UsageError("procedural_scene: size too small");
    std::vector<double> img(static_cast<size_t>(3) * h * w);
    std::vector<double> dep(static_cast<size_t>(h) * w);

    // background: color gradient + depth ramp receding toward the top
    double c0[3], c1[3];
    for (int c = 0; c < 3; ++c) {
        c0[c] = rng.uniform(0.08, 0.92);
        c1[c] = rng.uniform(0.08, 0.92);
    }
    const int dir = static_cast<int>(rng.uniform_int(3)); // 0 vertical, 1 horizontal, 2 diagonal
    const double far_d = rng.uniform(0.75, 0.95);
    const double near_d = rng.uniform(0.2, 0.45);
    const double wobble = rng.uniform(0.0, 0.05);
    const double wphase = rng.uniform(0.0, 6.283185307179586);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double t;
            if (dir == 0)
                t = static_cast<double>(y) / (h - 1);
            else if (dir == 1)
                t = static_cast<double>(x) / (w - 1);
            else
                t = 0.5 * (static_cast<double>(y) / (h - 1) + static_cast<double>(x) / (w - 1));
            for (int c = 0; c < 3; ++c)
                img[(static_cast<size_t>(c) * h + y) * w + x] = c0[c] + (c1[c] - c0[c]) * t;
            const double ty = static_cast<double>(y) / (h - 1);
            double d = far_d + (near_d - far_d) * ty +
                       wobble * std::sin(wphase + 6.0 * static_cast<double>(x) / w);
            dep[static_cast<size_t>(y) * w + x] = std::min(0.98, std::max(0.02, d));
        }
    }

    // foreground shapes at distinct depths; nearer shapes overwrite
    const int n_shapes = 3 + static_cast<int>(rng.uniform_int(4));
    for (int s = 0; s < n_shapes; ++s) {
        const bool circle = rng.coin();
        double col[3];
        for (int c = 0; c < 3; ++c) col[c] = rng.uniform(0.05, 0.98);
        const double sd = rng.uniform(0.05, 0.85);
        const int cy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h)));
        const int cx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w)));
        const int ry = 2 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h / 4)));
        const int rx = 2 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w / 4)));
        for (int y = std::max(0, cy - ry); y <= std::min(h - 1, cy + ry); ++y) {
            for (int x = std::max(0, cx - rx); x <= std::min(w - 1, cx + rx); ++x) {
                if (circle) {
                    const double dy = static_cast<double>(y - cy) / ry;
                    const double dx = static_cast<double>(x - cx) / rx;
                    if (dy * dy + dx * dx > 1.0) continue;
                }
                if (sd >= dep[static_cast<size_t>(y) * w + x]) continue; // occluded
                dep[static_cast<size_t>(y) * w + x] = sd;
                for (int c = 0; c < 3; ++c)
                    img[(static_cast<size_t>(c) * h + y) * w + x] = col[c];
            }
        }
    }

    // mild multiplicative texture so references are not piecewise constant
    const double tex_amp = rng.uniform(0.03, 0.1);
    const double fx = rng.uniform(2.0, 6.0), fy = rng.uniform(2.0, 6.0);
    const double ph = rng.uniform(0.0, 6.283185307179586);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double m = 1.0 + tex_amp * std::sin(ph + fx * 6.283185307179586 * x / w) *
                                       std::cos(fy * 6.283185307179586 * y / h);
            for (int c = 0; c < 3; ++c) {
                auto& v = img[(static_cast<size_t>(c) * h + y) * w + x];
                v = clamp01(v * m);
            }
        }

    ProceduralScene out;
    out.clean = Raster::from({3, h, w}, std::move(img));
    out.depth = Raster::from({1, h, w}, std::move(dep));
    return out;
}

WaterParams random_water(Rng& rng) {
    WaterParams w;
    w.beta[0] = rng.uniform(0.8, 1.6); // red attenuates fastest
    w.beta[1] = rng.uniform(0.3, 0.8);
    w.beta[2] = rng.uniform(0.15, 0.6);
    w.ambient[0] = rng.uniform(0.05, 0.25);
    w.ambient[1] = rng.uniform(0.35, 0.65);
    w.ambient[2] = rng.uniform(0.45, 0.8);
    return w;
}

Raster to_network_range(const Raster& img01) {
    std::vector<double> out(img01.vec().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = img01.data()[i] * 2.0 - 1.0;
    return Raster::from(img01.shape(), std::move(out));
}

Raster from_network_range(const Raster& net) {
    std::vector<double> out(net.vec().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = clamp01((net.data()[i] + 1.0) * 0.5);
    return Raster::from(net.shape(), std::move(out));
}

} // namespace uierl::imaging
