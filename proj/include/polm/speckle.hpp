#pragma once

#include <cstdint>
#include <vector>

#include "polm/raster.hpp"

namespace polm::speckle {

// One complex observation field z = a + jb per pixel.
struct SinglePolField {
    int H = 0, W = 0;
    std::vector<double> a;
    std::vector<double> b;
};

// Per-pixel real covariance of a dual-pol observation:
//   [[r_hh, r_hv], [r_hv, r_vv]], positive definite.
struct CovarianceField {
    int H = 0, W = 0;
    std::vector<double> r_hh;
    std::vector<double> r_vv;
    std::vector<double> r_hv;

    static CovarianceField constant(int H, int W, double rhh, double rvv, double rhv);
    void validate() const;  // throws with the first offending pixel
};

// Separable 1-D correlation kernel applied along rows then columns,
// reflect boundary. normalize divides the taps by their sum.
struct SpatialCorrelationKernel {
    std::vector<double> taps{0.25, 0.5, 0.25};
    bool normalize = false;
};

// a, b i.i.d. Normal(0, r/2) per pixel, so E[|z|^2] = r.
SinglePolField sample_single_pol(const std::vector<double>& r, int H, int W, std::uint64_t seed);

// Dual-pol draw via the real Cholesky factor of the 2x2 covariance applied
// to a circular complex standard normal. Output channels [a_hh, b_hh, a_vv, b_vv].
PolStack sample_dual_pol(const CovarianceField& cov, std::uint64_t seed);

// Convolves every channel with the same separable real kernel.
PolStack apply_spatial_correlation(const PolStack& stack, const SpatialCorrelationKernel& kernel);

// Synthetic-noise protocol: each clean channel gets two replicas with
// independent unit-mean unit-variance gamma speckle, interleaved as the
// real/imaginary components of a pseudo-polarization.
PolStack synth_gamma_stack(const std::vector<double>& clean, int H, int W, int P, std::uint64_t seed);

struct CovEstimate {
    int dim = 0;
    std::vector<double> cov;     // dim x dim row-major
    std::vector<double> se;      // matching standard errors
    std::size_t samples = 0;

    double cov_at(int i, int j) const { return cov[i * dim + j]; }
    double se_at(int i, int j) const { return se[i * dim + j]; }
};

// Sample covariance over pixels with per-entry normal-approximation
// standard errors. Requires at least 10^4 pixels.
CovEstimate empirical_cross_covariance(const PolStack& stack);

}  // namespace polm::speckle
