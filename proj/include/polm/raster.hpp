#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace polm {

// Channel-planar row-major raster of doubles. Polarimetric stacks use the
// channel order [a1, b1, a2, b2, ...] (real/imaginary component pairs per
// polarization), so C == 2 * P for a stack of P polarizations.
struct Raster {
    int C = 0;
    int H = 0;
    int W = 0;
    std::vector<double> data;
    std::vector<std::string> labels;

    Raster() = default;
    Raster(int c, int h, int w)
        : C(c), H(h), W(w), data(static_cast<std::size_t>(c) * h * w, 0.0) {}

    std::size_t plane() const { return static_cast<std::size_t>(H) * W; }
    std::size_t size() const { return static_cast<std::size_t>(C) * plane(); }

    double& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * W + x]; }
    double at(int c, int y, int x) const { return data[c * plane() + static_cast<std::size_t>(y) * W + x]; }

    double* channel(int c) { return data.data() + c * plane(); }
    const double* channel(int c) const { return data.data() + c * plane(); }
};

// A P-polarization component stack. Invariant: raster C == 2 * P.
using PolStack = Raster;

inline int polarizations(const PolStack& s) { return s.C / 2; }

// Default labels a_1, b_1, ... or hh/vv names for P == 2.
std::vector<std::string> default_pol_labels(int P);

}  // namespace polm
