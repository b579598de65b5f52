#pragma once

#include <cstdint>
#include <vector>

#include "polm/masking.hpp"
#include "polm/raster.hpp"
#include "polm/tensor.hpp"

namespace polm::net {

using ad::TensorPtr;

struct UNetConfig {
    int in_channels = 4;   // 2P
    int out_channels = 2;  // P
    int base_width = 16;
    int depth = 2;
    int kernel = 3;
    double leaky_slope = 0.1;
    ad::Padding padding = ad::Padding::Reflect;
};

// Offset added to squared magnitudes before the log, so masked zeros map to
// a finite, recognizable value.
inline constexpr double kLogEps = 1e-6;

// Per-input-channel mean/std of log-intensity over the training set.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

struct ConvSpec {
    int in = 0, out = 0, k = 3;
    bool zero_init = false;
};

// The conv layers of the U-Net in execution order:
// encoder pairs, bottleneck pair, decoder pairs, final 1x1 projection.
std::vector<ConvSpec> conv_specs(const UNetConfig& cfg);

class UNet {
public:
    UNetConfig cfg;
    std::vector<TensorPtr> weights;
    std::vector<TensorPtr> biases;

    // Kaiming fan-in init for the conv kernels, zero biases, zero-init
    // final layer (so an untrained net outputs log r = 0, i.e. r = 1).
    static UNet init(const UNetConfig& cfg, std::uint64_t seed);

    std::vector<TensorPtr> parameters() const;
    std::size_t parameter_count() const;

    // input is 2P x H x W with extents divisible by 2^depth; output is the
    // raw log-reflectance, P x H x W.
    TensorPtr forward(const TensorPtr& input) const;
};

struct Checkpoint {
    UNet net;
    NormStats stats;
    ad::AdamWParams hp;
    ad::AdamWState opt;
    std::int64_t epoch = 0;
    std::vector<double> loss_history;

    int P() const { return net.cfg.out_channels; }
};

// log(v^2 + eps) for every entry of the stack, channel-planar.
std::vector<double> log_intensity(const PolStack& x);

NormStats fit_norm_stats(const std::vector<PolStack>& dataset);

// Standardized log-intensity as a (constant) network input tensor.
TensorPtr preprocess(const PolStack& x_masked, const NormStats& stats);

// preprocess + forward. The result is log r in physical scale.
TensorPtr forward_log_r(const Checkpoint& ckpt, const PolStack& x_masked);

// Eq.-style negative log likelihood in the log-r parameterization:
// sum over pixels and polarizations of 1/2 * log_r + gamma^2 * exp(-log_r).
// gamma holds the raw-scale target components, P x H x W planar.
TensorPtr nll_loss(const TensorPtr& log_r, const std::vector<double>& gamma);

// Both channel-mask directions per step: mask Re, score against the Im
// components, mask Im, score against Re; fresh independent spatial masks
// per pass. Returns the summed scalar loss node.
TensorPtr polmerlin_step_loss(const Checkpoint& ckpt, const PolStack& x, double p_spatial,
                              std::uint64_t seed, bool per_channel_mask = true);

// Extracts the raw component stack used as the likelihood target:
// the b channels when Re is masked, the a channels otherwise.
std::vector<double> likelihood_target(const PolStack& x, masking::ComponentStack masked);

// Analytic flop count of one forward pass: 2 flops per conv multiply-add,
// one per bias add, one per activation element, four per pooled output
// element; upsampling and concatenation are counted as free copies.
std::int64_t count_flops(const UNetConfig& cfg, int H, int W);

// Flop count of a single same-size conv layer on an H x W plane under the
// same convention; activation adds one flop per output element.
std::int64_t conv_flops(const ConvSpec& spec, int H, int W, bool activated);

}  // namespace polm::net
