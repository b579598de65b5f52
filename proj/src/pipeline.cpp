#include "polm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace polm::pipeline {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

PolStack slice_polarization(const PolStack& stack, int p) {
    PolStack out(2, stack.H, stack.W);
    const std::size_t plane = stack.plane();
    std::copy(stack.channel(2 * p), stack.channel(2 * p) + 2 * plane, out.data.begin());
    return out;
}

void append_axis(std::vector<int>& offsets, int extent, int size, int stride) {
    for (int o = 0; o + size <= extent; o += stride) offsets.push_back(o);
    if (offsets.empty() || offsets.back() + size < extent) offsets.push_back(extent - size);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ splitmix64(b));
}

PatchGrid make_patch_grid(int H, int W, int size, int stride, OverlapPolicy policy) {
    if (size <= 0 || stride <= 0) throw std::invalid_argument("make_patch_grid: invalid size/stride");
    if (H < size || W < size)
        throw std::invalid_argument("make_patch_grid: image smaller than patch size");
    PatchGrid grid;
    grid.H = H;
    grid.W = W;
    grid.size = size;
    grid.stride = stride;
    grid.policy = policy;
    std::vector<int> ys, xs;
    append_axis(ys, H, size, stride);
    append_axis(xs, W, size, stride);
    for (int y : ys)
        for (int x : xs) grid.origins.emplace_back(y, x);
    return grid;
}

std::vector<Raster> extract_patches(const Raster& image, const PatchGrid& grid) {
    if (image.H != grid.H || image.W != grid.W)
        throw std::invalid_argument("extract_patches: image/grid extent mismatch");
    std::vector<Raster> patches;
    patches.reserve(grid.origins.size());
    for (auto [y0, x0] : grid.origins) {
        Raster patch(image.C, grid.size, grid.size);
        patch.labels = image.labels;
        for (int c = 0; c < image.C; ++c)
            for (int y = 0; y < grid.size; ++y) {
                const double* src = image.channel(c) + static_cast<std::size_t>(y0 + y) * image.W + x0;
                std::copy(src, src + grid.size, patch.channel(c) + static_cast<std::size_t>(y) * grid.size);
            }
        patches.push_back(std::move(patch));
    }
    return patches;
}

Raster stitch_patches(const std::vector<Raster>& patches, const PatchGrid& grid, int C) {
    if (patches.size() != grid.origins.size())
        throw std::invalid_argument("stitch_patches: patch count mismatch");
    for (const auto& p : patches)
        if (p.C != C || p.H != grid.size || p.W != grid.size)
            throw std::invalid_argument("stitch_patches: patch shape mismatch");

    Raster out(C, grid.H, grid.W);
    if (!patches.empty()) out.labels = patches.front().labels;
    std::vector<double> count;
    if (grid.policy == OverlapPolicy::Average) count.assign(out.size(), 0.0);

    for (std::size_t i = 0; i < patches.size(); ++i) {
        const auto [y0, x0] = grid.origins[i];
        const Raster& patch = patches[i];
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < grid.size; ++y)
                for (int x = 0; x < grid.size; ++x) {
                    const std::size_t di =
                        c * out.plane() + static_cast<std::size_t>(y0 + y) * grid.W + (x0 + x);
                    const double v = patch.at(c, y, x);
                    if (grid.policy == OverlapPolicy::Average) {
                        out.data[di] += v;
                        count[di] += 1.0;
                    } else {
                        out.data[di] = v;
                    }
                }
    }
    if (grid.policy == OverlapPolicy::Average)
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] /= count[i];
    return out;
}

TrainResult train(const std::vector<PolStack>& patches, const TrainConfig& cfg,
                  const std::vector<Raster>* clean, const EpochSampler& sampler) {
    if (patches.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.batch < 1) throw std::invalid_argument("train: batch must be >= 1");
    if (!(cfg.mask_p >= 0.0 && cfg.mask_p < 1.0))
        throw std::invalid_argument("train: mask_p must be in [0, 1)");
    const int C = patches.front().C, H = patches.front().H, W = patches.front().W;
    for (const auto& p : patches)
        if (p.C != C || p.H != H || p.W != W)
            throw std::invalid_argument("train: mixed patch shapes");
    const int P_data = C / 2;
    if (cfg.mode == TrainMode::SupervisedMse &&
        (!clean || clean->size() != patches.size()))
        throw std::invalid_argument("train: supervised mode needs aligned clean targets");

    const bool single_pol = cfg.mode == TrainMode::MerlinSinglePol;
    const int P_model = single_pol ? 1 : P_data;
    // channel_only is defined as the zero-spatial-mask variant; the other
    // self-supervised modes keep spatial masking. For the single-pol
    // baseline it is the only source of pressure toward spatial context.
    const double p_spatial =
        cfg.mode == TrainMode::PolMerlin || cfg.mode == TrainMode::MerlinSinglePol ? cfg.mask_p
                                                                                   : 0.0;

    TrainResult result;
    net::UNetConfig ncfg;
    ncfg.in_channels = 2 * P_model;
    ncfg.out_channels = P_model;
    ncfg.base_width = cfg.base_width;
    ncfg.depth = cfg.depth;
    ncfg.kernel = cfg.kernel;
    result.ckpt.net = net::UNet::init(ncfg, mix_seed(cfg.seed, 0x1717));
    result.ckpt.hp.lr = cfg.lr;
    result.ckpt.hp.weight_decay = cfg.weight_decay;

    // Normalization statistics come from the unmasked training set.
    if (single_pol) {
        std::vector<PolStack> slices;
        for (const auto& patch : patches)
            for (int p = 0; p < P_data; ++p) slices.push_back(slice_polarization(patch, p));
        result.ckpt.stats = net::fit_norm_stats(slices);
    } else {
        result.ckpt.stats = net::fit_norm_stats(patches);
    }

    auto params = result.ckpt.net.parameters();
    std::mt19937_64 rng_batch(mix_seed(cfg.seed, 0xBA7C));

    int global_step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.lr_final >= 0.0 && cfg.epochs > 1) {
            const double t = static_cast<double>(epoch) / (cfg.epochs - 1);
            result.ckpt.hp.lr =
                cfg.lr_final +
                0.5 * (cfg.lr - cfg.lr_final) * (1.0 + std::cos(std::numbers::pi * t));
        }
        // Epoch sample list: single-pol mode trains on every polarization
        // slice of every patch, which reduces to the plain patch list at
        // P = 1 (preserving the channel_only equivalence bit-exactly).
        std::vector<std::pair<int, int>> order;  // (patch index, polarization)
        for (int i = 0; i < static_cast<int>(patches.size()); ++i)
            for (int p = 0; p < (single_pol ? P_data : 1); ++p) order.emplace_back(i, p);
        std::shuffle(order.begin(), order.end(), rng_batch);

        double epoch_loss = 0.0;
        int epoch_samples = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t end = std::min(order.size(), start + cfg.batch);
            const double inv_n = 1.0 / static_cast<double>(end - start);
            for (auto& p : params) p->zero_grad();

            double batch_loss = 0.0;
            for (std::size_t bi = start; bi < end; ++bi) {
                const auto [idx, pol] = order[bi];
                const PolStack raw = sampler ? sampler(epoch, idx) : patches[idx];
                if (raw.C != C || raw.H != H || raw.W != W)
                    throw std::invalid_argument("train: sampler returned a mismatched stack");
                const PolStack sample = single_pol ? slice_polarization(raw, pol) : raw;
                const std::uint64_t mask_seed =
                    mix_seed(cfg.seed, 0xA5C0000ULL + static_cast<std::uint64_t>(global_step) * 65536 + bi);

                ad::TensorPtr loss;
                if (cfg.mode == TrainMode::SupervisedMse) {
                    // Same masked two-pass protocol, scored against the known
                    // clean reflectance in log scale.
                    const Raster& cl = (*clean)[idx];
                    std::vector<double> target(cl.size());
                    for (std::size_t i = 0; i < cl.size(); ++i)
                        target[i] = std::log(4.0 * cl.data[i] * cl.data[i] + net::kLogEps);
                    auto pass = [&](masking::ComponentStack dir, std::uint64_t ms_seed) {
                        const auto mc = masking::make_channel_mask(P_model, dir);
                        const auto ms = masking::make_spatial_mask(H, W, P_model, p_spatial, ms_seed,
                                                                  cfg.per_channel_mask);
                        const auto masked = masking::apply_masks(sample, &mc, &ms);
                        auto log_r = net::forward_log_r(result.ckpt, masked);
                        auto target_t = ad::make_tensor(log_r->shape, target);
                        return ad::reduce_sum(ad::square(ad::sub(log_r, target_t)));
                    };
                    loss = ad::add(pass(masking::ComponentStack::Re, mask_seed),
                                   pass(masking::ComponentStack::Im, mask_seed ^ 0x5A5AULL));
                } else if (cfg.alternate_mask_direction) {
                    const auto dir = (global_step % 2 == 0) ? masking::ComponentStack::Re
                                                            : masking::ComponentStack::Im;
                    const auto mc = masking::make_channel_mask(P_model, dir);
                    const auto ms = masking::make_spatial_mask(H, W, P_model, p_spatial, mask_seed,
                                                              cfg.per_channel_mask);
                    const auto masked = masking::apply_masks(sample, &mc, &ms);
                    auto log_r = net::forward_log_r(result.ckpt, masked);
                    loss = net::nll_loss(log_r, net::likelihood_target(sample, dir));
                } else {
                    loss = net::polmerlin_step_loss(result.ckpt, sample, p_spatial, mask_seed,
                                                   cfg.per_channel_mask);
                }
                batch_loss += loss->data[0];
                ad::backward(ad::scalar_mul(loss, inv_n));
            }
            if (cfg.clip_norm > 0.0) {
                double sq = 0.0;
                for (const auto& p : params)
                    for (double g : p->grad) sq += g * g;
                const double norm = std::sqrt(sq);
                if (norm > cfg.clip_norm) {
                    const double scale = cfg.clip_norm / norm;
                    for (auto& p : params)
                        for (double& g : p->grad) g *= scale;
                }
            }
            ad::adamw_step(params, result.ckpt.opt, result.ckpt.hp);

            const double mean_loss = batch_loss * inv_n;
            result.log.push_back({epoch, global_step, mean_loss});
            epoch_loss += batch_loss;
            epoch_samples += static_cast<int>(end - start);
            ++global_step;
        }
        const double epoch_mean = epoch_loss / static_cast<double>(epoch_samples);
        result.epoch_mean_loss.push_back(epoch_mean);
        result.ckpt.loss_history.push_back(epoch_mean);
        result.ckpt.epoch += 1;
    }
    return result;
}

namespace {

// Inference forward without building backward closures.
struct GradGuard {
    std::vector<ad::TensorPtr> params;
    explicit GradGuard(const net::Checkpoint& ckpt) : params(ckpt.net.parameters()) {
        for (auto& p : params) p->requires_grad = false;
    }
    ~GradGuard() {
        for (auto& p : params) p->requires_grad = true;
    }
};

Raster despeckle_patch(const PolStack& patch, const net::Checkpoint& ckpt) {
    const int P = polarizations(patch);
    Raster out(P, patch.H, patch.W);
    auto run = [&](masking::ComponentStack dir) {
        const auto mc = masking::make_channel_mask(P, dir);
        const auto masked = masking::apply_masks(patch, &mc, nullptr);
        return net::forward_log_r(ckpt, masked);
    };
    auto log_r_re = run(masking::ComponentStack::Re);
    auto log_r_im = run(masking::ComponentStack::Im);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = 0.5 * (std::exp(log_r_re->data[i]) + std::exp(log_r_im->data[i]));
    return out;
}

}  // namespace

Raster despeckle(const PolStack& image, const net::Checkpoint& ckpt, int patch_size) {
    const int P = polarizations(image);
    if (ckpt.P() != P) {
        if (ckpt.P() == 1 && P > 1) {
            Raster out(P, image.H, image.W);
            for (int p = 0; p < P; ++p) {
                const Raster single = despeckle(slice_polarization(image, p), ckpt, patch_size);
                std::copy(single.data.begin(), single.data.end(), out.channel(p));
            }
            return out;
        }
        throw std::invalid_argument("despeckle: checkpoint polarization count mismatch");
    }

    GradGuard guard(ckpt);
    const auto grid =
        make_patch_grid(image.H, image.W, patch_size, patch_size, OverlapPolicy::Average);
    const auto patches = extract_patches(image, grid);
    std::vector<Raster> outputs;
    outputs.reserve(patches.size());
    for (const auto& patch : patches) outputs.push_back(despeckle_patch(patch, ckpt));
    return stitch_patches(outputs, grid, P);
}

Raster calibrate_gamma_synthetic(const Raster& reflectance) {
    Raster out = reflectance;
    for (double& v : out.data) v = 0.5 * std::sqrt(std::max(v, 0.0));
    return out;
}

metrics::MetricsReport evaluate_synthetic(const Raster& clean, const Raster& despeckled,
                                          const PolStack& noisy,
                                          const std::vector<metrics::Roi>& rois, double peak) {
    const int P = clean.C;
    if (despeckled.C != P || noisy.C != 2 * P || despeckled.H != clean.H ||
        despeckled.W != clean.W || noisy.H != clean.H || noisy.W != clean.W)
        throw std::invalid_argument("evaluate_synthetic: shape mismatch");

    metrics::MetricsReport report;
    const std::size_t plane = clean.plane();
    for (int p = 0; p < P; ++p) {
        const std::string ch = "pol" + std::to_string(p);
        std::vector<double> noisy_intensity(plane);
        for (std::size_t i = 0; i < plane; ++i)
            noisy_intensity[i] = 0.5 * (noisy.channel(2 * p)[i] + noisy.channel(2 * p + 1)[i]);

        auto add_pair = [&](const char* metric, const double* test) {
            const auto ps = metrics::psnr({clean.channel(p), plane}, {test, plane}, peak);
            report.rows.push_back({std::string("psnr_") + metric, ch, "full", ps.db,
                                   ps.saturated ? "saturated" : ""});
            const double s =
                metrics::ssim(clean.channel(p), test, clean.H, clean.W, peak);
            report.rows.push_back({std::string("ssim_") + metric, ch, "full", s, ""});
        };
        add_pair("despeckled", despeckled.channel(p));
        add_pair("noisy", noisy_intensity.data());

        for (const auto& roi : rois) {
            const std::string region = "roi_" + std::to_string(roi.x0) + "_" +
                                       std::to_string(roi.y0) + "_" + std::to_string(roi.width) +
                                       "_" + std::to_string(roi.height);
            // A perfectly flat region has unbounded ENL; report it as such
            // instead of failing the whole evaluation.
            auto add_enl = [&](const char* metric, const double* img) {
                try {
                    report.rows.push_back(
                        {metric, ch, region, metrics::enl(img, clean.H, clean.W, roi), ""});
                } catch (const std::domain_error&) {
                    report.rows.push_back({metric, ch, region,
                                           std::numeric_limits<double>::infinity(), "degenerate"});
                }
            };
            add_enl("enl_despeckled", despeckled.channel(p));
            add_enl("enl_noisy", noisy_intensity.data());
        }
    }
    return report;
}

Raster make_shapes_image(int H, int W, std::uint64_t seed) {
    Raster img(1, H, W);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> value(0.1, 1.0);
    std::uniform_int_distribution<int> nshapes(6, 12);
    std::uniform_int_distribution<int> xs(0, W - 1), ys(0, H - 1);
    std::uniform_int_distribution<int> extent(std::max(2, W / 16), std::max(3, W / 3));
    std::bernoulli_distribution is_disk(0.5);

    const double bg = value(rng);
    std::fill(img.data.begin(), img.data.end(), bg);
    const int n = nshapes(rng);
    for (int s = 0; s < n; ++s) {
        const double v = value(rng);
        if (is_disk(rng)) {
            const int cx = xs(rng), cy = ys(rng), rad = extent(rng) / 2 + 1;
            for (int y = std::max(0, cy - rad); y <= std::min(H - 1, cy + rad); ++y)
                for (int x = std::max(0, cx - rad); x <= std::min(W - 1, cx + rad); ++x)
                    if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= rad * rad)
                        img.at(0, y, x) = v;
        } else {
            const int x0 = xs(rng), y0 = ys(rng);
            const int w = extent(rng), h = extent(rng);
            for (int y = y0; y < std::min(H, y0 + h); ++y)
                for (int x = x0; x < std::min(W, x0 + w); ++x) img.at(0, y, x) = v;
        }
    }
    return img;
}

}  // namespace polm::pipeline
