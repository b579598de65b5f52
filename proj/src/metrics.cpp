#include "polm/metrics.hpp"

#include <cmath>
#include <locale>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace polm::metrics {

PsnrResult psnr(std::span<const double> reference, std::span<const double> test, double peak) {
    if (reference.size() != test.size())
        throw std::invalid_argument("psnr: shape mismatch");
    if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
    if (reference.empty()) throw std::invalid_argument("psnr: empty image");
    double mse = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const double d = reference[i] - test[i];
        mse += d * d;
    }
    mse /= static_cast<double>(reference.size());
    if (mse == 0.0) return {kPsnrSaturated, true};
    return {10.0 * std::log10(peak * peak / mse), false};
}

double ssim(const double* reference, const double* test, int H, int W, double peak,
            int window, double k1, double k2) {
    if (H < window || W < window)
        throw std::invalid_argument("ssim: extents smaller than window");
    const double c1 = (k1 * peak) * (k1 * peak);
    const double c2 = (k2 * peak) * (k2 * peak);
    const double inv_n = 1.0 / (static_cast<double>(window) * window);

    double total = 0.0;
    std::size_t windows = 0;
    for (int y0 = 0; y0 + window <= H; ++y0) {
        for (int x0 = 0; x0 + window <= W; ++x0) {
            double mx = 0.0, my = 0.0;
            for (int y = y0; y < y0 + window; ++y)
                for (int x = x0; x < x0 + window; ++x) {
                    mx += reference[y * W + x];
                    my += test[y * W + x];
                }
            mx *= inv_n;
            my *= inv_n;
            double vx = 0.0, vy = 0.0, cov = 0.0;
            for (int y = y0; y < y0 + window; ++y)
                for (int x = x0; x < x0 + window; ++x) {
                    const double dx = reference[y * W + x] - mx;
                    const double dy = test[y * W + x] - my;
                    vx += dx * dx;
                    vy += dy * dy;
                    cov += dx * dy;
                }
            vx *= inv_n;
            vy *= inv_n;
            cov *= inv_n;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                     ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++windows;
        }
    }
    return total / static_cast<double>(windows);
}

double enl(const double* image, int H, int W, const Roi& roi) {
    if (roi.x0 < 0 || roi.y0 < 0 || roi.width <= 0 || roi.height <= 0 ||
        roi.x0 + roi.width > W || roi.y0 + roi.height > H)
        throw std::invalid_argument("enl: roi out of bounds");
    const std::size_t n = static_cast<std::size_t>(roi.width) * roi.height;
    if (n < 16) throw std::invalid_argument("enl: roi area must be >= 16");
    double mean = 0.0;
    for (int y = roi.y0; y < roi.y0 + roi.height; ++y)
        for (int x = roi.x0; x < roi.x0 + roi.width; ++x) mean += image[y * W + x];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (int y = roi.y0; y < roi.y0 + roi.height; ++y)
        for (int x = roi.x0; x < roi.x0 + roi.width; ++x) {
            const double d = image[y * W + x] - mean;
            var += d * d;
        }
    var /= static_cast<double>(n);
    if (var == 0.0) throw std::domain_error("enl: degenerate region (zero variance)");
    return mean * mean / var;
}

void write_csv(const MetricsReport& report, std::ostream& os) {
    std::ostringstream buf;
    buf.imbue(std::locale::classic());
    buf.precision(12);
    buf << "metric,channel,region,value,flags\n";
    for (const auto& row : report.rows)
        buf << row.metric << ',' << row.channel << ',' << row.region << ',' << row.value << ','
            << row.flags << '\n';
    os << buf.str();
}

}  // namespace polm::metrics
