#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "laconv/tensor.hpp"

namespace laconv {

/// Every constant of the evaluation indices, pinned for reproducibility.
struct MetricConfig {
    Index resolution_ratio = 4;  // r in ERGAS and the Ds degradation
    Index q2n_block = 32;        // non-overlapping; trailing partials dropped
    double qnr_alpha = 1.0;
    double qnr_beta = 1.0;
    Index ssim_window = 11;
    double ssim_sigma = 1.5;
    double ssim_k1 = 0.01;
    double ssim_k2 = 0.03;
    double psnr_peak = 1.0;
    double psnr_cap = 100.0;  // reported on exact equality

    void validate() const {
        if (resolution_ratio < 1) throw ConfigError("MetricConfig: ratio must be >= 1");
        if (q2n_block < 1) throw ConfigError("MetricConfig: q2n_block must be >= 1");
        if (ssim_window < 1 || ssim_window % 2 == 0)
            throw ConfigError("MetricConfig: ssim window must be odd");
        if (ssim_sigma <= 0.0 || psnr_peak <= 0.0)
            throw ConfigError("MetricConfig: ssim sigma and psnr peak must be > 0");
    }
};

/// Mean per-pixel spectral angle, in degrees; pixels where either spectral
/// vector is zero contribute 0.
double sam_degrees(const Tensor4d& x, const Tensor4d& y);

/// (100/r) * sqrt((1/C) * sum_c (RMSE_c / mean_c(ref))^2). Bands whose
/// reference mean is zero are excluded with a warning.
double ergas(const Tensor4d& x, const Tensor4d& ref, Index ratio);

/// Mean over bands of the Pearson correlation between Laplacian-filtered
/// (4-neighbor kernel, zero padding) images. Zero-variance bands
/// contribute 0 with a warning.
double scc(const Tensor4d& x, const Tensor4d& ref);

/// Hypercomplex (Cayley-Dickson) generalization of the universal image
/// quality index over 2^m components, averaged over non-overlapping
/// blocks; bands are zero-padded up to the next power of two. With one
/// band it reduces to the classical scalar UIQI (modulus form).
double q2n(const Tensor4d& x, const Tensor4d& ref, const MetricConfig& cfg);

/// Per-band 10*log10(peak^2/MSE) averaged over bands, capped (and reported
/// as the cap on exact equality).
double psnr(const Tensor4d& x, const Tensor4d& ref, const MetricConfig& cfg);

/// Gaussian-window SSIM per band over the valid region, averaged.
double ssim(const Tensor4d& x, const Tensor4d& ref, const MetricConfig& cfg);

struct QnrResult {
    double qnr = 0.0;
    double d_lambda = 0.0;
    double d_s = 0.0;
};

/// No-reference full-resolution suite. Dl compares inter-band UIQI of the
/// fused image against the low-resolution bands; Ds compares each band
/// against the PAN and its degraded counterpart (Gaussian blur 3x3
/// sigma 0.5 plus decimation, the data simulator's degradation; identity
/// when ratio is 1). QNR = (1-Dl)^alpha * (1-Ds)^beta.
QnrResult qnr_suite(const Tensor4d& fused, const Tensor4d& ms_lowres, const Tensor4d& pan,
                    const MetricConfig& cfg);

/// Named per-sample metric values with recomputable aggregates.
struct MetricReport {
    std::vector<std::string> sample_ids;
    std::vector<std::string> metric_order;
    std::map<std::string, std::vector<double>> values;

    void add(const std::string& sample_id, const std::string& metric, double value);
    double mean(const std::string& metric) const;
    double stddev(const std::string& metric) const;  // sample std, 0 for n < 2

    /// CSV rows (sample_id, metric, value) followed by one summary row per
    /// metric in "mean ± std" style.
    void write_csv(const std::filesystem::path& path) const;
};

}  // namespace laconv
