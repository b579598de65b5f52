#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "polm/metrics.hpp"
#include "polm/network.hpp"
#include "polm/raster.hpp"

namespace polm::pipeline {

enum class OverlapPolicy { None, Average };

// Non-overlapping tiling with far-border anchoring: the last row/column of
// patches is shifted so every pixel is covered, which may overlap its
// neighbour on non-divisible image sizes.
struct PatchGrid {
    int H = 0, W = 0;
    int size = 0, stride = 0;
    OverlapPolicy policy = OverlapPolicy::Average;
    std::vector<std::pair<int, int>> origins;  // (y, x), row-major
};

PatchGrid make_patch_grid(int H, int W, int size, int stride,
                          OverlapPolicy policy = OverlapPolicy::Average);

std::vector<Raster> extract_patches(const Raster& image, const PatchGrid& grid);

// Inverse of extract_patches. Policy None lets later patches overwrite;
// Average takes the per-pixel coverage-weighted mean.
Raster stitch_patches(const std::vector<Raster>& patches, const PatchGrid& grid, int C);

enum class TrainMode { PolMerlin, ChannelOnly, MerlinSinglePol, SupervisedMse };

struct TrainConfig {
    int epochs = 100;
    int batch = 16;
    double lr = 1e-5;
    double mask_p = 0.02;
    double weight_decay = 0.0;
    // When >= 0, cosine-anneal the learning rate from lr to lr_final over
    // the epochs; < 0 keeps lr constant. Decaying toward zero settles the
    // weights and gives visibly smoother output.
    double lr_final = -1.0;
    // Global L2 gradient-norm clip applied per optimizer step; <= 0 disables.
    // The likelihood's gamma^2 / r term can spike when r collapses locally,
    // so clipping keeps long runs stable.
    double clip_norm = 1e4;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::PolMerlin;
    int base_width = 16;
    int depth = 2;
    int kernel = 3;
    bool per_channel_mask = true;
    // Alternate the channel-mask direction per step instead of summing both
    // directions every step.
    bool alternate_mask_direction = false;
};

struct LossRow {
    int epoch = 0;
    int step = 0;
    double loss = 0.0;
};

struct TrainResult {
    net::Checkpoint ckpt;
    std::vector<LossRow> log;
    std::vector<double> epoch_mean_loss;
};

// Optional per-epoch data hook: returns the stack to train on for patch
// `index` during `epoch`, e.g. a fresh simulated speckle draw of a fixed
// clean corpus. When unset the fixed `patches` are reused every epoch.
// Normalization statistics always come from `patches`.
using EpochSampler = std::function<PolStack(int epoch, int index)>;

// clean is required for SupervisedMse (one P-channel raster per patch,
// aligned with `patches`) and ignored otherwise.
TrainResult train(const std::vector<PolStack>& patches, const TrainConfig& cfg,
                  const std::vector<Raster>* clean = nullptr,
                  const EpochSampler& sampler = nullptr);

// Patch-based inference: per patch, forward with Re masked and with Im
// masked (no spatial masking), output (r_Re + r_Im) / 2 in linear
// intensity, stitched back to full size. A single-pol checkpoint is applied
// to each polarization of a multi-pol image in turn.
Raster despeckle(const PolStack& image, const net::Checkpoint& ckpt, int patch_size = 64);

// Maps the estimated reflectance of the unit-gamma synthetic protocol back
// to the clean image scale: the likelihood optimum there is r = 4 * clean^2,
// so the calibrated image is sqrt(r) / 2.
Raster calibrate_gamma_synthetic(const Raster& reflectance);

// Per polarization: PSNR/SSIM of despeckled-vs-clean and of
// noisy-intensity-vs-clean (noisy intensity = mean of the two replicas),
// plus ENL of both over the given flat ROIs.
metrics::MetricsReport evaluate_synthetic(const Raster& clean, const Raster& despeckled,
                                          const PolStack& noisy,
                                          const std::vector<metrics::Roi>& rois = {},
                                          double peak = 1.0);

// Procedural test image: random rectangles and disks, values in [0.1, 1].
Raster make_shapes_image(int H, int W, std::uint64_t seed);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace polm::pipeline
