#pragma once

#include <cstdint>
#include <vector>

#include "polm/raster.hpp"

namespace polm::masking {

enum class ComponentStack { Re, Im };

// Hides the full real (a) or imaginary (b) component stack of a P-pol image.
struct ChannelMask {
    int P = 0;
    ComponentStack target = ComponentStack::Re;

    // Channel order is [a1, b1, a2, b2, ...]; Re channels are the even ones.
    bool hides(int channel) const {
        return (channel % 2 == 0) == (target == ComponentStack::Re);
    }
    std::vector<int> hidden_channels() const;
};

// Per-pixel-per-channel Bernoulli(1-p) keep map over H x W x 2P.
struct SpatialMask {
    int H = 0, W = 0, C = 0;
    double p = 0.0;
    std::vector<std::uint8_t> keep;  // 1 = pass through, 0 = drop

    bool kept(int c, int y, int x) const {
        return keep[(static_cast<std::size_t>(c) * H + y) * W + x] != 0;
    }
};

ChannelMask make_channel_mask(int P, ComponentStack target);

// per_channel=false draws one H x W map shared by every channel.
SpatialMask make_spatial_mask(int H, int W, int P, double p, std::uint64_t seed,
                              bool per_channel = true);

// Hadamard product M_c o M_s o x. Either mask may be null (identity).
PolStack apply_masks(const PolStack& x, const ChannelMask* mc, const SpatialMask* ms);

// The combined mask as a dense multiplier, for building loss graphs.
std::vector<double> mask_multiplier(int H, int W, int P, const ChannelMask* mc,
                                    const SpatialMask* ms);

}  // namespace polm::masking
