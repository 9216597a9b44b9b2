#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uierl/imaging.hpp"

namespace uierl::metrics {

using imaging::Raster;

// Coefficients for the composed quality scores, kept in one place. UCIQE
// follows Yang & Sowmya (2015), UIQM follows Panetta, Gao & Agaian (2016).
// The CCF composition (colorfulness, contrast, fog clarity) follows the
// published three-factor regression shape with a rescaled clarity term; the
// weights are configurable because the exact published variant differs
// between implementations.
struct MetricWeights {
    double uciqe_c1 = 0.4680, uciqe_c2 = 0.2745, uciqe_c3 = 0.2576;
    double uiqm_c1 = 0.0282, uiqm_c2 = 0.2953, uiqm_c3 = 3.5753;
    double uicm_w1 = -0.0268, uicm_w2 = 0.1586;
    double alpha_trim = 0.1;
    int block = 8;
    double ccf_w1 = 0.17593, ccf_w2 = 0.29178, ccf_w3 = 20.0;
};

// The no-reference scores operate on 8-bit-quantized values, matching the
// published implementations; angular error and PSNR work on the float data.
double uciqe(const Raster& img01, const MetricWeights& w = {});
double uiqm(const Raster& img01, const MetricWeights& w = {});
double ccf(const Raster& img01, const MetricWeights& w = {});
double edge_intensity(const Raster& img01);

// Mean per-pixel angle between RGB vectors, in degrees; pixels with a zero
// norm on either side are excluded.
double angular_error_deg(const Raster& enhanced01, const Raster& reference01);

// 10*log10(1/MSE) on [0,1] data, capped at the 99 dB sentinel.
double psnr_db(const Raster& a01, const Raster& b01);

struct MetricRow {
    std::string image;
    double uiqm = 0, uciqe = 0, ccf = 0, edge = 0;
    std::optional<double> angular;
    std::optional<double> psnr;
};

struct MetricReport {
    std::vector<MetricRow> rows;
    MetricRow means() const;
};

// image_path, uiqm, uciqe, ccf, edge, angular_error, psnr with a trailing
// means row; reference columns stay blank when absent.
void write_report_csv(const std::filesystem::path& path, const MetricReport& report);

} // namespace uierl::metrics
