#include "polm/masking.hpp"

#include <random>
#include <stdexcept>

namespace polm::masking {

std::vector<int> ChannelMask::hidden_channels() const {
    std::vector<int> out;
    for (int c = 0; c < 2 * P; ++c)
        if (hides(c)) out.push_back(c);
    return out;
}

ChannelMask make_channel_mask(int P, ComponentStack target) {
    if (P < 1) throw std::invalid_argument("make_channel_mask: P must be >= 1");
    return ChannelMask{P, target};
}

SpatialMask make_spatial_mask(int H, int W, int P, double p, std::uint64_t seed, bool per_channel) {
    if (!(p >= 0.0 && p < 1.0))
        throw std::invalid_argument("make_spatial_mask: p must be in [0, 1)");
    SpatialMask mask;
    mask.H = H;
    mask.W = W;
    mask.C = 2 * P;
    mask.p = p;
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    mask.keep.assign(plane * mask.C, 1);
    if (p == 0.0) return mask;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    if (per_channel) {
        for (auto& k : mask.keep) k = uniform(rng) < p ? 0 : 1;
    } else {
        std::vector<std::uint8_t> shared(plane);
        for (auto& k : shared) k = uniform(rng) < p ? 0 : 1;
        for (int c = 0; c < mask.C; ++c)
            std::copy(shared.begin(), shared.end(), mask.keep.begin() + c * plane);
    }
    return mask;
}

PolStack apply_masks(const PolStack& x, const ChannelMask* mc, const SpatialMask* ms) {
    const int P = polarizations(x);
    if (mc && mc->P != P) throw std::invalid_argument("apply_masks: channel mask P mismatch");
    if (ms && (ms->H != x.H || ms->W != x.W || ms->C != x.C))
        throw std::invalid_argument("apply_masks: spatial mask shape mismatch");

    PolStack out = x;
    const std::size_t plane = x.plane();
    for (int c = 0; c < x.C; ++c) {
        double* ch = out.channel(c);
        if (mc && mc->hides(c)) {
            std::fill(ch, ch + plane, 0.0);
            continue;
        }
        if (ms) {
            const std::uint8_t* keep = ms->keep.data() + static_cast<std::size_t>(c) * plane;
            for (std::size_t i = 0; i < plane; ++i)
                if (!keep[i]) ch[i] = 0.0;
        }
    }
    return out;
}

std::vector<double> mask_multiplier(int H, int W, int P, const ChannelMask* mc,
                                    const SpatialMask* ms) {
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::vector<double> m(plane * 2 * P, 1.0);
    for (int c = 0; c < 2 * P; ++c) {
        double* ch = m.data() + static_cast<std::size_t>(c) * plane;
        if (mc && mc->hides(c)) {
            std::fill(ch, ch + plane, 0.0);
            continue;
        }
        if (ms) {
            const std::uint8_t* keep = ms->keep.data() + static_cast<std::size_t>(c) * plane;
            for (std::size_t i = 0; i < plane; ++i)
                if (!keep[i]) ch[i] = 0.0;
        }
    }
    return m;
}

}  // namespace polm::masking
