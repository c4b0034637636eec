#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace coastal::metrics {

/// Masked root mean square error; mask is per element (same length as a/b).
double rmse(const std::vector<double>& a, const std::vector<double>& b, const std::vector<uint8_t>& mask);

/// Masked mean absolute error.
double mae(const std::vector<double>& a, const std::vector<double>& b, const std::vector<uint8_t>& mask);

/// Mean error (signed), used by the rmse >= |mean error| property.
double mean_error(const std::vector<double>& a, const std::vector<double>& b, const std::vector<uint8_t>& mask);

/// SSIM between single-channel images in [0,1] with an 11x11 Gaussian window
/// (sigma 1.5, K1 0.01, K2 0.03, L 1). Windows containing any land pixel are
/// excluded from the mean.
double ssim(const std::vector<double>& a, const std::vector<double>& b, const std::vector<uint8_t>& mask,
            int h, int w);

/// Gradient-magnitude similarity deviation with 3x3 Prewitt gradients and
/// c = 170/255^2; standard deviation of GMS over interior all-water pixels.
double gmsd(const std::vector<double>& a, const std::vector<double>& b, const std::vector<uint8_t>& mask,
            int h, int w);

/// 8-bit residual image round(255 * clamp(|a - b| * gain, 0, 1)).
std::vector<uint8_t> residual_map(const std::vector<double>& a, const std::vector<double>& b, double gain);

/// One metric row of the evaluation report.
struct SampleMetrics {
    int sample_id = 0;
    int frame = 0;    // 0..2 within the output triple
    int channel = 0;  // 0 = U, 1 = V, 2 = xi
    double rmse = 0, mae = 0, ssim = 0, gmsd = 0;
    bool inter = false;  // middle (temporally interpolated) frame
};

/// Writes report.csv rows: sample id, frame, channel, metrics, intra/inter
/// tag and an empty lpips column that external tooling may fill.
void write_report_csv(const std::string& path, const std::vector<SampleMetrics>& rows);

/// Column means over rows, optionally restricted to inter/intra frames.
struct Aggregate {
    double rmse = 0, mae = 0, ssim = 0, gmsd = 0;
    int n = 0;
};
Aggregate aggregate(const std::vector<SampleMetrics>& rows, int inter_filter = -1);

}  // namespace coastal::metrics
