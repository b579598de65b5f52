#include "polm/speckle.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace polm::speckle {

namespace {

void correlate_rows(const std::vector<double>& taps, int H, int W, double* plane) {
    const int k = static_cast<int>(taps.size());
    const int p = k / 2;
    std::vector<double> row(W);
    for (int y = 0; y < H; ++y) {
        double* src = plane + static_cast<std::size_t>(y) * W;
        for (int x = 0; x < W; ++x) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t) {
                int xi = x + t - p;
                if (xi < 0) xi = -xi;
                if (xi >= W) xi = 2 * W - 2 - xi;
                acc += taps[t] * src[xi];
            }
            row[x] = acc;
        }
        std::copy(row.begin(), row.end(), src);
    }
}

void correlate_cols(const std::vector<double>& taps, int H, int W, double* plane) {
    const int k = static_cast<int>(taps.size());
    const int p = k / 2;
    std::vector<double> col(H);
    for (int x = 0; x < W; ++x) {
        for (int y = 0; y < H; ++y) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t) {
                int yi = y + t - p;
                if (yi < 0) yi = -yi;
                if (yi >= H) yi = 2 * H - 2 - yi;
                acc += taps[t] * plane[static_cast<std::size_t>(yi) * W + x];
            }
            col[y] = acc;
        }
        for (int y = 0; y < H; ++y) plane[static_cast<std::size_t>(y) * W + x] = col[y];
    }
}

}  // namespace

CovarianceField CovarianceField::constant(int H, int W, double rhh, double rvv, double rhv) {
    CovarianceField f;
    f.H = H;
    f.W = W;
    const std::size_t n = static_cast<std::size_t>(H) * W;
    f.r_hh.assign(n, rhh);
    f.r_vv.assign(n, rvv);
    f.r_hv.assign(n, rhv);
    return f;
}

void CovarianceField::validate() const {
    const std::size_t n = static_cast<std::size_t>(H) * W;
    if (r_hh.size() != n || r_vv.size() != n || r_hv.size() != n)
        throw std::invalid_argument("CovarianceField: field size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(r_hh[i] > 0.0) || !(r_vv[i] > 0.0) || !(r_hv[i] * r_hv[i] < r_hh[i] * r_vv[i])) {
            const int y = static_cast<int>(i) / W, x = static_cast<int>(i) % W;
            throw std::invalid_argument("CovarianceField: not positive definite at pixel (" +
                                        std::to_string(x) + ", " + std::to_string(y) + ")");
        }
    }
}

SinglePolField sample_single_pol(const std::vector<double>& r, int H, int W, std::uint64_t seed) {
    const std::size_t n = static_cast<std::size_t>(H) * W;
    if (r.size() != n) throw std::invalid_argument("sample_single_pol: field size mismatch");
    for (std::size_t i = 0; i < n; ++i)
        if (!(r[i] >= 0.0)) throw std::invalid_argument("sample_single_pol: negative reflectance");

    SinglePolField f;
    f.H = H;
    f.W = W;
    f.a.resize(n);
    f.b.resize(n);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double sigma = std::sqrt(r[i] / 2.0);
        f.a[i] = sigma * normal(rng);
        f.b[i] = sigma * normal(rng);
    }
    return f;
}

PolStack sample_dual_pol(const CovarianceField& cov, std::uint64_t seed) {
    cov.validate();
    PolStack out(4, cov.H, cov.W);
    out.labels = default_pol_labels(2);
    std::mt19937_64 rng(seed);
    // Components of the circular complex standard normal have variance 1/2.
    std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
    const std::size_t n = out.plane();
    double* ahh = out.channel(0);
    double* bhh = out.channel(1);
    double* avv = out.channel(2);
    double* bvv = out.channel(3);
    for (std::size_t i = 0; i < n; ++i) {
        const double l11 = std::sqrt(cov.r_hh[i]);
        const double l21 = cov.r_hv[i] / l11;
        const double l22 = std::sqrt(cov.r_vv[i] - l21 * l21);
        const double u1r = normal(rng), u1i = normal(rng);
        const double u2r = normal(rng), u2i = normal(rng);
        ahh[i] = l11 * u1r;
        bhh[i] = l11 * u1i;
        avv[i] = l21 * u1r + l22 * u2r;
        bvv[i] = l21 * u1i + l22 * u2i;
    }
    return out;
}

PolStack apply_spatial_correlation(const PolStack& stack, const SpatialCorrelationKernel& kernel) {
    if (kernel.taps.empty()) throw std::invalid_argument("apply_spatial_correlation: empty kernel");
    double sum = 0.0;
    for (double t : kernel.taps) {
        if (!std::isfinite(t)) throw std::invalid_argument("apply_spatial_correlation: non-finite tap");
        sum += t;
    }
    if (!(sum > 0.0)) throw std::invalid_argument("apply_spatial_correlation: tap sum must be positive");

    std::vector<double> taps = kernel.taps;
    if (kernel.normalize)
        for (double& t : taps) t /= sum;

    PolStack out = stack;
    if (taps.size() == 1) {
        for (double& v : out.data) v *= taps[0];
        return out;
    }
    for (int c = 0; c < out.C; ++c) {
        correlate_rows(taps, out.H, out.W, out.channel(c));
        correlate_cols(taps, out.H, out.W, out.channel(c));
    }
    return out;
}

PolStack synth_gamma_stack(const std::vector<double>& clean, int H, int W, int P, std::uint64_t seed) {
    const std::size_t n = static_cast<std::size_t>(H) * W;
    if (clean.size() != n * static_cast<std::size_t>(P))
        throw std::invalid_argument("synth_gamma_stack: clean size mismatch");
    for (double v : clean)
        if (!(v >= 0.0)) throw std::invalid_argument("synth_gamma_stack: negative clean value");

    PolStack out(2 * P, H, W);
    out.labels = default_pol_labels(P);
    std::mt19937_64 rng(seed);
    // Gamma with mean 1 and variance 1 is the unit exponential.
    std::exponential_distribution<double> gamma11(1.0);
    for (int p = 0; p < P; ++p) {
        const double* cp = clean.data() + static_cast<std::size_t>(p) * n;
        double* a = out.channel(2 * p);
        double* b = out.channel(2 * p + 1);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = cp[i] * gamma11(rng);
            b[i] = cp[i] * gamma11(rng);
        }
    }
    return out;
}

CovEstimate empirical_cross_covariance(const PolStack& stack) {
    const std::size_t n = stack.plane();
    if (n < 10000)
        throw std::invalid_argument("empirical_cross_covariance: needs at least 10^4 pixels");
    const int C = stack.C;

    CovEstimate est;
    est.dim = C;
    est.samples = n;
    est.cov.assign(static_cast<std::size_t>(C) * C, 0.0);
    est.se.assign(static_cast<std::size_t>(C) * C, 0.0);

    std::vector<double> mean(C, 0.0);
    for (int c = 0; c < C; ++c) {
        const double* p = stack.channel(c);
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += p[i];
        mean[c] = acc / static_cast<double>(n);
    }
    for (int i = 0; i < C; ++i) {
        const double* pi = stack.channel(i);
        for (int j = i; j < C; ++j) {
            const double* pj = stack.channel(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += (pi[k] - mean[i]) * (pj[k] - mean[j]);
            const double cij = acc / static_cast<double>(n);
            est.cov[i * C + j] = est.cov[j * C + i] = cij;
        }
    }
    for (int i = 0; i < C; ++i) {
        for (int j = 0; j < C; ++j) {
            const double cii = est.cov[i * C + i], cjj = est.cov[j * C + j], cij = est.cov[i * C + j];
            est.se[i * C + j] = std::sqrt(std::max(cii * cjj + cij * cij, 0.0) / static_cast<double>(n));
        }
    }
    return est;
}

}  // namespace polm::speckle
