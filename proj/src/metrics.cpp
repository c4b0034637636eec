#include "coastal/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "coastal/errors.hpp"

namespace coastal::metrics {

namespace {

void check_sizes(const std::vector<double>& a, const std::vector<double>& b, const std::vector<uint8_t>& mask) {
    if (a.size() != b.size() || a.size() != mask.size()) throw ConfigError("metric: size mismatch");
}

}  // namespace

double rmse(const std::vector<double>& a, const std::vector<double>& b, const std::vector<uint8_t>& mask) {
    check_sizes(a, b, mask);
    double s = 0;
    int64_t n = 0;
    for (size_t i = 0; i < a.size(); ++i)
        if (mask[i]) {
            const double d = a[i] - b[i];
            s += d * d;
            ++n;
        }
    if (n == 0) throw ConfigError("metric: empty mask");
    return std::sqrt(s / (double)n);
}

double mae(const std::vector<double>& a, const std::vector<double>& b, const std::vector<uint8_t>& mask) {
    check_sizes(a, b, mask);
    double s = 0;
    int64_t n = 0;
    for (size_t i = 0; i < a.size(); ++i)
        if (mask[i]) {
            s += std::abs(a[i] - b[i]);
            ++n;
        }
    if (n == 0) throw ConfigError("metric: empty mask");
    return s / (double)n;
}

double mean_error(const std::vector<double>& a, const std::vector<double>& b, const std::vector<uint8_t>& mask) {
    check_sizes(a, b, mask);
    double s = 0;
    int64_t n = 0;
    for (size_t i = 0; i < a.size(); ++i)
        if (mask[i]) {
            s += a[i] - b[i];
            ++n;
        }
    if (n == 0) throw ConfigError("metric: empty mask");
    return s / (double)n;
}

double ssim(const std::vector<double>& a, const std::vector<double>& b, const std::vector<uint8_t>& mask,
            int h, int w) {
    if ((int64_t)a.size() != (int64_t)h * w) throw ConfigError("ssim: shape mismatch");
    check_sizes(a, b, mask);
    constexpr int K = 11;
    constexpr double sigma = 1.5;
    constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;

    double kernel[K][K];
    double ksum = 0;
    for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) {
            const double dy = i - K / 2, dx = j - K / 2;
            kernel[i][j] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            ksum += kernel[i][j];
        }
    for (auto& row : kernel)
        for (auto& k : row) k /= ksum;

    double total = 0;
    int64_t n_win = 0;
    for (int y0 = 0; y0 + K <= h; ++y0)
        for (int x0 = 0; x0 + K <= w; ++x0) {
            bool valid = true;
            for (int i = 0; i < K && valid; ++i)
                for (int j = 0; j < K; ++j)
                    if (!mask[(size_t)(y0 + i) * w + (x0 + j)]) {
                        valid = false;
                        break;
                    }
            if (!valid) continue;
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < K; ++i)
                for (int j = 0; j < K; ++j) {
                    const double kij = kernel[i][j];
                    const double av = a[(size_t)(y0 + i) * w + (x0 + j)];
                    const double bv = b[(size_t)(y0 + i) * w + (x0 + j)];
                    ma += kij * av;
                    mb += kij * bv;
                    saa += kij * av * av;
                    sbb += kij * bv * bv;
                    sab += kij * av * bv;
                }
            const double va = saa - ma * ma, vb = sbb - mb * mb, cab = sab - ma * mb;
            total += ((2 * ma * mb + C1) * (2 * cab + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
            ++n_win;
        }
    if (n_win == 0) throw ConfigError("ssim: no all-water window");
    return total / (double)n_win;
}

double gmsd(const std::vector<double>& a, const std::vector<double>& b, const std::vector<uint8_t>& mask,
            int h, int w) {
    if ((int64_t)a.size() != (int64_t)h * w) throw ConfigError("gmsd: shape mismatch");
    check_sizes(a, b, mask);
    constexpr double c = 170.0 / (255.0 * 255.0);

    auto grad_mag = [&](const std::vector<double>& img, int y, int x) {
        // 3x3 Prewitt, 1/3 normalization
        double gx = 0, gy = 0;
        for (int dy = -1; dy <= 1; ++dy) {
            const size_t row = (size_t)(y + dy) * w + x;
            gx += img[row - 1] - img[row + 1];
            gy += img[(size_t)(y - 1) * w + (x + dy)] - img[(size_t)(y + 1) * w + (x + dy)];
        }
        gx /= 3.0;
        gy /= 3.0;
        return std::sqrt(gx * gx + gy * gy);
    };

    std::vector<double> gms;
    gms.reserve((size_t)(h - 2) * (w - 2));
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x) {
            bool valid = true;
            for (int dy = -1; dy <= 1 && valid; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    if (!mask[(size_t)(y + dy) * w + (x + dx)]) {
                        valid = false;
                        break;
                    }
            if (!valid) continue;
            const double ma = grad_mag(a, y, x), mb = grad_mag(b, y, x);
            gms.push_back((2 * ma * mb + c) / (ma * ma + mb * mb + c));
        }
    if (gms.empty()) throw ConfigError("gmsd: no valid water pixel");
    double mean = 0;
    for (double g : gms) mean += g;
    mean /= (double)gms.size();
    double var = 0;
    for (double g : gms) var += (g - mean) * (g - mean);
    return std::sqrt(var / (double)gms.size());
}

std::vector<uint8_t> residual_map(const std::vector<double>& a, const std::vector<double>& b, double gain) {
    if (a.size() != b.size()) throw ConfigError("residual_map: size mismatch");
    std::vector<uint8_t> out(a.size());
    for (size_t i = 0; i < a.size(); ++i) {
        const double v = std::clamp(std::abs(a[i] - b[i]) * gain, 0.0, 1.0);
        out[i] = (uint8_t)std::lround(255.0 * v);
    }
    return out;
}

void write_report_csv(const std::string& path, const std::vector<SampleMetrics>& rows) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write " + path);
    f << "sample_id,frame,channel,rmse,mae,ssim,gmsd,frame_kind,lpips\n";
    for (const auto& r : rows)
        f << r.sample_id << "," << r.frame << "," << r.channel << "," << r.rmse << "," << r.mae << ","
          << r.ssim << "," << r.gmsd << "," << (r.inter ? "inter" : "intra") << ",\n";
}

Aggregate aggregate(const std::vector<SampleMetrics>& rows, int inter_filter) {
    Aggregate agg;
    for (const auto& r : rows) {
        if (inter_filter >= 0 && (int)r.inter != inter_filter) continue;
        agg.rmse += r.rmse;
        agg.mae += r.mae;
        agg.ssim += r.ssim;
        agg.gmsd += r.gmsd;
        ++agg.n;
    }
    if (agg.n) {
        agg.rmse /= agg.n;
        agg.mae /= agg.n;
        agg.ssim /= agg.n;
        agg.gmsd /= agg.n;
    }
    return agg;
}

}  // namespace coastal::metrics
