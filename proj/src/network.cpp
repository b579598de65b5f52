#include "polm/network.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace polm::net {

std::vector<ConvSpec> conv_specs(const UNetConfig& cfg) {
    std::vector<ConvSpec> specs;
    const int k = cfg.kernel;
    int in = cfg.in_channels;
    for (int l = 0; l < cfg.depth; ++l) {
        const int w = cfg.base_width << l;
        specs.push_back({in, w, k, false});
        specs.push_back({w, w, k, false});
        in = w;
    }
    const int wd = cfg.base_width << cfg.depth;
    specs.push_back({in, wd, k, false});
    specs.push_back({wd, wd, k, false});
    for (int l = cfg.depth - 1; l >= 0; --l) {
        const int w = cfg.base_width << l;
        const int above = cfg.base_width << (l + 1);
        specs.push_back({above + w, w, k, false});
        specs.push_back({w, w, k, false});
    }
    specs.push_back({cfg.base_width, cfg.out_channels, 1, true});
    return specs;
}

UNet UNet::init(const UNetConfig& cfg, std::uint64_t seed) {
    if (cfg.kernel % 2 == 0) throw std::invalid_argument("UNet: kernel size must be odd");
    if (cfg.depth < 1 || cfg.base_width < 1 || cfg.out_channels < 1)
        throw std::invalid_argument("UNet: invalid config");
    UNet net;
    net.cfg = cfg;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const ConvSpec& s : conv_specs(cfg)) {
        auto w = ad::make_tensor({s.out, s.in, s.k, s.k}, true);
        if (!s.zero_init) {
            const double std = std::sqrt(2.0 / (static_cast<double>(s.in) * s.k * s.k));
            for (double& v : w->data) v = std * normal(rng);
        }
        net.weights.push_back(w);
        net.biases.push_back(ad::make_tensor({s.out}, true));
    }
    return net;
}

std::vector<TensorPtr> UNet::parameters() const {
    std::vector<TensorPtr> params;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        params.push_back(weights[i]);
        params.push_back(biases[i]);
    }
    return params;
}

std::size_t UNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p->size();
    return n;
}

TensorPtr UNet::forward(const TensorPtr& input) const {
    if (!input || input->shape.size() != 3 || input->shape[0] != cfg.in_channels)
        throw std::invalid_argument("UNet::forward: expected " + std::to_string(cfg.in_channels) +
                                    " input channels");
    const int div = 1 << cfg.depth;
    if (input->shape[1] % div != 0 || input->shape[2] % div != 0)
        throw std::invalid_argument("UNet::forward: extents must be divisible by " +
                                    std::to_string(div) + "; pad the patch accordingly");

    auto act = [&](const TensorPtr& t) { return ad::leaky_relu(t, cfg.leaky_slope); };
    std::size_t li = 0;
    auto conv = [&](const TensorPtr& t) {
        auto out = ad::conv2d(t, weights[li], biases[li], cfg.padding);
        ++li;
        return out;
    };

    TensorPtr t = input;
    std::vector<TensorPtr> skips;
    for (int l = 0; l < cfg.depth; ++l) {
        t = act(conv(t));
        t = act(conv(t));
        skips.push_back(t);
        t = ad::downsample_stride2(t);
    }
    t = act(conv(t));
    t = act(conv(t));
    for (int l = cfg.depth - 1; l >= 0; --l) {
        t = ad::upsample_nearest2x(t);
        t = ad::concat_channels(t, skips[l]);
        t = act(conv(t));
        t = act(conv(t));
    }
    return conv(t);
}

std::vector<double> log_intensity(const PolStack& x) {
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        v[i] = std::log(x.data[i] * x.data[i] + kLogEps);
    return v;
}

NormStats fit_norm_stats(const std::vector<PolStack>& dataset) {
    if (dataset.empty()) throw std::invalid_argument("fit_norm_stats: empty dataset");
    const int C = dataset.front().C;
    NormStats stats;
    stats.mean.assign(C, 0.0);
    stats.stddev.assign(C, 0.0);
    std::vector<std::size_t> count(C, 0);
    for (const auto& patch : dataset) {
        if (patch.C != C) throw std::invalid_argument("fit_norm_stats: mixed channel counts");
        const auto v = log_intensity(patch);
        const std::size_t plane = patch.plane();
        for (int c = 0; c < C; ++c) {
            const double* p = v.data() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) stats.mean[c] += p[i];
            count[c] += plane;
        }
    }
    for (int c = 0; c < C; ++c) stats.mean[c] /= static_cast<double>(count[c]);
    for (const auto& patch : dataset) {
        const auto v = log_intensity(patch);
        const std::size_t plane = patch.plane();
        for (int c = 0; c < C; ++c) {
            const double* p = v.data() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double d = p[i] - stats.mean[c];
                stats.stddev[c] += d * d;
            }
        }
    }
    for (int c = 0; c < C; ++c) {
        stats.stddev[c] = std::sqrt(stats.stddev[c] / static_cast<double>(count[c]));
        if (stats.stddev[c] < 1e-12) stats.stddev[c] = 1.0;  // constant channel
    }
    return stats;
}

TensorPtr preprocess(const PolStack& x_masked, const NormStats& stats) {
    if (static_cast<int>(stats.mean.size()) != x_masked.C ||
        static_cast<int>(stats.stddev.size()) != x_masked.C)
        throw std::invalid_argument("preprocess: stats channel count mismatch");
    auto v = log_intensity(x_masked);
    const std::size_t plane = x_masked.plane();
    for (int c = 0; c < x_masked.C; ++c) {
        double* p = v.data() + c * plane;
        const double mean = stats.mean[c], sd = stats.stddev[c];
        for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - mean) / sd;
    }
    return ad::make_tensor({x_masked.C, x_masked.H, x_masked.W}, std::move(v));
}

TensorPtr forward_log_r(const Checkpoint& ckpt, const PolStack& x_masked) {
    return ckpt.net.forward(preprocess(x_masked, ckpt.stats));
}

TensorPtr nll_loss(const TensorPtr& log_r, const std::vector<double>& gamma) {
    if (log_r->size() != gamma.size())
        throw std::invalid_argument("nll_loss: target size mismatch");
    std::vector<double> gamma_sq(gamma.size());
    for (std::size_t i = 0; i < gamma.size(); ++i) {
        if (!std::isfinite(gamma[i])) throw std::invalid_argument("nll_loss: non-finite target");
        gamma_sq[i] = gamma[i] * gamma[i];
    }
    auto gsq = ad::make_tensor(log_r->shape, std::move(gamma_sq));
    auto term = ad::add(ad::scalar_mul(log_r, 0.5), ad::mul(gsq, ad::exp(ad::negate(log_r))));
    return ad::reduce_sum(term);
}

std::vector<double> likelihood_target(const PolStack& x, masking::ComponentStack masked) {
    const int P = polarizations(x);
    const std::size_t plane = x.plane();
    std::vector<double> target(static_cast<std::size_t>(P) * plane);
    for (int p = 0; p < P; ++p) {
        // Score against the component stack that was hidden from the input:
        // the estimate from the visible stack is judged by the independent
        // replica the network could not see, which is what makes the
        // training self-supervised rather than an identity fit.
        const int c = 2 * p + (masked == masking::ComponentStack::Re ? 0 : 1);
        const double* src = x.channel(c);
        std::copy(src, src + plane, target.begin() + p * plane);
    }
    return target;
}

TensorPtr polmerlin_step_loss(const Checkpoint& ckpt, const PolStack& x, double p_spatial,
                              std::uint64_t seed, bool per_channel_mask) {
    const int P = polarizations(x);
    if (P != ckpt.P())
        throw std::invalid_argument("polmerlin_step_loss: polarization count mismatch");

    auto pass = [&](masking::ComponentStack target, std::uint64_t mask_seed) {
        const auto mc = masking::make_channel_mask(P, target);
        const auto ms =
            masking::make_spatial_mask(x.H, x.W, P, p_spatial, mask_seed, per_channel_mask);
        const auto masked = masking::apply_masks(x, &mc, &ms);
        auto log_r = forward_log_r(ckpt, masked);
        return nll_loss(log_r, likelihood_target(x, target));
    };

    auto loss_re = pass(masking::ComponentStack::Re, seed);
    auto loss_im = pass(masking::ComponentStack::Im, seed ^ 0x9e3779b97f4a7c15ULL);
    return ad::add(loss_re, loss_im);
}

std::int64_t conv_flops(const ConvSpec& spec, int H, int W, bool activated) {
    if (H <= 0 || W <= 0) throw std::invalid_argument("conv_flops: invalid shape");
    const std::int64_t px = static_cast<std::int64_t>(H) * W;
    std::int64_t f = 2 * static_cast<std::int64_t>(spec.out) * spec.in * spec.k * spec.k * px;
    f += static_cast<std::int64_t>(spec.out) * px;                 // bias
    if (activated) f += static_cast<std::int64_t>(spec.out) * px;  // leaky relu
    return f;
}

std::int64_t count_flops(const UNetConfig& cfg, int H, int W) {
    if (H <= 0 || W <= 0) throw std::invalid_argument("count_flops: invalid shape");
    std::int64_t flops = 0;
    const auto specs = conv_specs(cfg);
    std::size_t li = 0;
    int h = H, w = W;
    auto conv_cost = [&](const ConvSpec& s, int hh, int ww, bool activated) {
        return conv_flops(s, hh, ww, activated);
    };
    for (int l = 0; l < cfg.depth; ++l) {
        flops += conv_cost(specs[li++], h, w, true);
        flops += conv_cost(specs[li++], h, w, true);
        h /= 2;
        w /= 2;
        flops += 4 * static_cast<std::int64_t>(cfg.base_width << l) * h * w;  // 2x2 mean
    }
    flops += conv_cost(specs[li++], h, w, true);
    flops += conv_cost(specs[li++], h, w, true);
    for (int l = cfg.depth - 1; l >= 0; --l) {
        h *= 2;
        w *= 2;
        flops += conv_cost(specs[li++], h, w, true);
        flops += conv_cost(specs[li++], h, w, true);
    }
    flops += conv_cost(specs[li++], h, w, false);
    return flops;
}

}  // namespace polm::net
