#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace polm::metrics {

// PSNR value reported when MSE is exactly zero.
inline constexpr double kPsnrSaturated = 99.0;

struct PsnrResult {
    double db = 0.0;
    bool saturated = false;
};

PsnrResult psnr(std::span<const double> reference, std::span<const double> test, double peak);

// Mean local SSIM over a dense sliding window with uniform weighting.
double ssim(const double* reference, const double* test, int H, int W, double peak,
            int window = 8, double k1 = 0.01, double k2 = 0.03);

struct Roi {
    int x0 = 0, y0 = 0, width = 0, height = 0;
};

// mean^2 / population variance over the region. Rejects zero-variance
// regions and regions smaller than 16 pixels.
double enl(const double* image, int H, int W, const Roi& roi);

struct MetricRow {
    std::string metric;
    std::string channel;
    std::string region;
    double value = 0.0;
    std::string flags;
};

struct MetricsReport {
    std::vector<MetricRow> rows;
};

// CSV with header "metric,channel,region,value,flags"; '.' decimal
// separator regardless of locale.
void write_csv(const MetricsReport& report, std::ostream& os);

}  // namespace polm::metrics
