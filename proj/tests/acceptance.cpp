// Acceptance harness: eight numbered end-to-end checks, one verdict line each.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "polm/gradcheck_suite.hpp"
#include "polm/io.hpp"
#include "polm/masking.hpp"
#include "polm/metrics.hpp"
#include "polm/network.hpp"
#include "polm/pipeline.hpp"
#include "polm/speckle.hpp"

using namespace polm;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void verdict(int n, const char* what, bool pass, const std::string& detail) {
    std::printf("criterion %d (%s): %s%s%s\n", n, what, pass ? "PASS" : "FAIL",
                detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
}

// ---------------------------------------------------------------------------
// 1. Autodiff soundness
bool criterion1() {
    const auto t0 = Clock::now();
    const auto results = check::run_autodiff_suite(7, 1e-4);
    double worst = 0.0;
    std::string worst_name;
    for (const auto& r : results)
        if (r.max_rel_err > worst) {
            worst = r.max_rel_err;
            worst_name = r.name;
        }
    const double elapsed = seconds_since(t0);
    const bool pass = check::all_pass(results) && elapsed < 120.0;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu checks, worst %.2e (%s), %.1f s", results.size(), worst,
                  worst_name.c_str(), elapsed);
    verdict(1, "autodiff gradient checks", pass, buf);
    return pass;
}

// 2. Single-pol speckle statistics
bool criterion2() {
    const auto t0 = Clock::now();
    const int H = 1000, W = 1000;
    const double r0 = 4.0;
    const auto field = speckle::sample_single_pol(
        std::vector<double>(static_cast<std::size_t>(H) * W, r0), H, W, 1234);

    double intensity = 0.0;
    for (std::size_t i = 0; i < field.a.size(); ++i)
        intensity += field.a[i] * field.a[i] + field.b[i] * field.b[i];
    intensity /= static_cast<double>(field.a.size());

    PolStack ab(2, H, W);
    std::copy(field.a.begin(), field.a.end(), ab.channel(0));
    std::copy(field.b.begin(), field.b.end(), ab.channel(1));
    const auto est = speckle::empirical_cross_covariance(ab);
    const double cross = est.cov_at(0, 1), cross_se = est.se_at(0, 1);

    const double rel = std::abs(intensity - r0) / r0;
    const double elapsed = seconds_since(t0);
    const bool pass = rel <= 0.01 && std::abs(cross) <= 3.0 * cross_se && elapsed < 30.0;
    char buf[160];
    std::snprintf(buf, sizeof buf, "mean|z|^2 = %.4f (rel %.4f), cov(a,b) = %.2e (3se %.2e), %.1f s",
                  intensity, rel, cross, 3.0 * cross_se, elapsed);
    verdict(2, "single-pol speckle statistics", pass, buf);
    return pass;
}

// 3. Dual-pol covariance structure, raw and spatially correlated
bool criterion3() {
    const int H = 1000, W = 1000;
    const double rhh = 2.0, rvv = 2.0, rhv = 1.0;
    const auto cov = speckle::CovarianceField::constant(H, W, rhh, rvv, rhv);
    const auto stack = speckle::sample_dual_pol(cov, 777);

    const double expect[4][4] = {{1.0, 0.0, 0.5, 0.0},
                                 {0.0, 1.0, 0.0, 0.5},
                                 {0.5, 0.0, 1.0, 0.0},
                                 {0.0, 0.5, 0.0, 1.0}};
    const auto est = speckle::empirical_cross_covariance(stack);
    double worst_sigma = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            worst_sigma = std::max(
                worst_sigma, std::abs(est.cov_at(i, j) - expect[i][j]) / est.se_at(i, j));

    // A real spatial correlation operator must keep Re and Im uncorrelated.
    const auto correlated =
        speckle::apply_spatial_correlation(stack, speckle::SpatialCorrelationKernel{});
    const auto est2 = speckle::empirical_cross_covariance(correlated);
    double worst_mix = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if ((i + j) % 2 == 1)
                worst_mix = std::max(worst_mix, std::abs(est2.cov_at(i, j)) / est2.se_at(i, j));

    const bool pass = worst_sigma <= 3.0 && worst_mix <= 3.0;
    char buf[160];
    std::snprintf(buf, sizeof buf, "worst entry %.2f sigma, worst Re/Im mix after T %.2f sigma",
                  worst_sigma, worst_mix);
    verdict(3, "dual-pol covariance structure", pass, buf);
    return pass;
}

// 4. Loss optimum identity
bool criterion4() {
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> u(0.05, 3.0);
    double worst_rel = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const double gamma = u(rng);
        const double g2 = gamma * gamma;
        // Ternary search on the convex objective 0.5 log r + g2 / r.
        auto f = [&](double r) { return 0.5 * std::log(r) + g2 / r; };
        double lo = 1e-8, hi = 1e4;
        for (int it = 0; it < 500; ++it) {
            const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
            if (f(m1) < f(m2))
                hi = m2;
            else
                lo = m1;
        }
        const double r_star = 0.5 * (lo + hi);
        worst_rel = std::max(worst_rel, std::abs(r_star - 2.0 * g2) / (2.0 * g2));
    }

    const int H = 1000, W = 1000;
    const double r0 = 4.0;
    const auto field = speckle::sample_single_pol(
        std::vector<double>(static_cast<std::size_t>(H) * W, r0), H, W, 4321);
    double mean_est = 0.0;
    for (double v : field.a) mean_est += 2.0 * v * v;
    mean_est /= static_cast<double>(field.a.size());
    const double rel = std::abs(mean_est - r0) / r0;

    const bool pass = worst_rel <= 1e-6 && rel <= 0.01;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "minimizer vs 2*gamma^2 worst rel %.2e, mean(2a^2) = %.4f (rel %.4f)", worst_rel,
                  mean_est, rel);
    verdict(4, "likelihood optimum identity", pass, buf);
    return pass;
}

// Shared state between criteria 5 and 6: the trained polmerlin model.
struct TrendResult {
    bool pass = false;
    net::Checkpoint polmerlin_ckpt;
};

Raster replicate_pols(const Raster& gray, int P) {
    Raster clean(P, gray.H, gray.W);
    for (int p = 0; p < P; ++p)
        std::copy(gray.data.begin(), gray.data.end(), clean.channel(p));
    return clean;
}

// 5. End-to-end synthetic trend across the three self-supervised modes
TrendResult criterion5() {
    const auto t0 = Clock::now();
    const int N = 32, train_n = 24, P = 3, size = 64;

    std::vector<Raster> clean;
    std::vector<PolStack> noisy;
    for (int i = 0; i < N; ++i) {
        clean.push_back(replicate_pols(pipeline::make_shapes_image(size, size, 1000 + i), P));
        noisy.push_back(speckle::synth_gamma_stack(clean.back().data, size, size, P, 2000 + i));
    }
    const std::vector<PolStack> train_set(noisy.begin(), noisy.begin() + train_n);

    pipeline::TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch = 16;
    cfg.lr = 3e-3;
    cfg.lr_final = 1e-5;  // cosine decay settles the weights for smooth output
    cfg.mask_p = 0.02;
    cfg.per_channel_mask = false;  // one shared H x W drop map across channels
    cfg.seed = 11;
    cfg.base_width = 8;
    cfg.depth = 2;

    auto mean_psnr = [&](const std::vector<Raster>& images) {
        double acc = 0.0;
        int count = 0;
        for (int i = train_n; i < N; ++i) {
            const Raster& img = images[i];
            for (int p = 0; p < P; ++p) {
                acc += metrics::psnr({clean[i].channel(p), clean[i].plane()},
                                     {img.channel(p), img.plane()}, 1.0)
                           .db;
                ++count;
            }
        }
        return acc / count;
    };

    std::vector<Raster> noisy_intensity(N);
    for (int i = 0; i < N; ++i) {
        Raster inten(P, size, size);
        for (int p = 0; p < P; ++p)
            for (std::size_t k = 0; k < inten.plane(); ++k)
                inten.channel(p)[k] =
                    0.5 * (noisy[i].channel(2 * p)[k] + noisy[i].channel(2 * p + 1)[k]);
        noisy_intensity[i] = inten;
    }
    const double psnr_noisy = mean_psnr(noisy_intensity);

    TrendResult out;
    double psnr_mode[3] = {0, 0, 0};
    const pipeline::TrainMode modes[3] = {pipeline::TrainMode::MerlinSinglePol,
                                          pipeline::TrainMode::ChannelOnly,
                                          pipeline::TrainMode::PolMerlin};
    const char* names[3] = {"merlin_single_pol", "channel_only", "polmerlin"};
    for (int m = 0; m < 3; ++m) {
        auto mode_cfg = cfg;
        mode_cfg.mode = modes[m];
        const auto result = pipeline::train(train_set, mode_cfg);
        std::vector<Raster> despeckled(N);
        for (int i = train_n; i < N; ++i)
            despeckled[i] = pipeline::calibrate_gamma_synthetic(
                pipeline::despeckle(noisy[i], result.ckpt, size));
        psnr_mode[m] = mean_psnr(despeckled);
        std::printf("  [5] %-18s held-out PSNR %.2f dB (noisy %.2f dB) after %.0f s\n", names[m],
                    psnr_mode[m], psnr_noisy, seconds_since(t0));
        std::fflush(stdout);
        if (modes[m] == pipeline::TrainMode::PolMerlin) out.polmerlin_ckpt = result.ckpt;
    }

    const double elapsed = seconds_since(t0);
    const bool gain = psnr_mode[0] >= psnr_noisy + 3.0 && psnr_mode[1] >= psnr_noisy + 3.0 &&
                      psnr_mode[2] >= psnr_noisy + 3.0;
    const bool order = psnr_mode[2] >= psnr_mode[1] - 0.2 && psnr_mode[1] >= psnr_mode[0] - 0.2;
    out.pass = gain && order && elapsed < 45.0 * 60.0;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "noisy %.2f, merlin %.2f, channel_only %.2f, polmerlin %.2f dB, %.0f s",
                  psnr_noisy, psnr_mode[0], psnr_mode[1], psnr_mode[2], elapsed);
    verdict(5, "synthetic despeckling trend", out.pass, buf);
    return out;
}

// 6. ENL on a homogeneous region
bool criterion6(const net::Checkpoint& ckpt) {
    const int P = 3, size = 128;
    const Raster clean = replicate_pols([&] {
        Raster flat(1, size, size);
        std::fill(flat.data.begin(), flat.data.end(), 0.5);
        return flat;
    }(), P);
    const auto noisy = speckle::synth_gamma_stack(clean.data, size, size, P, 31337);

    const metrics::Roi full{0, 0, size, size};
    const double enl_noisy = metrics::enl(noisy.channel(0), size, size, full);

    const auto despeckled = pipeline::despeckle(noisy, ckpt, 64);
    double enl_out = 1e18;
    for (int p = 0; p < P; ++p)
        enl_out = std::min(enl_out, metrics::enl(despeckled.channel(p), size, size, full));

    const bool pass = enl_noisy >= 0.95 && enl_noisy <= 1.05 && enl_out >= 5.0;
    char buf[160];
    std::snprintf(buf, sizeof buf, "noisy ENL %.3f, despeckled ENL (worst pol) %.1f", enl_noisy,
                  enl_out);
    verdict(6, "flat-region ENL", pass, buf);
    return pass;
}

// 7. Leakage invariance under channel masking
bool criterion7() {
    const int P = 2, size = 32;
    net::UNetConfig ncfg;
    ncfg.in_channels = 2 * P;
    ncfg.out_channels = P;
    ncfg.base_width = 4;
    ncfg.depth = 2;
    net::Checkpoint ckpt;
    ckpt.net = net::UNet::init(ncfg, 606);
    for (double& v : ckpt.net.weights.back()->data) v = 0.1;  // non-degenerate output

    std::mt19937_64 rng(607);
    std::normal_distribution<double> normal(0.0, 1.0);
    PolStack x(2 * P, size, size);
    for (double& v : x.data) v = normal(rng);
    ckpt.stats = net::fit_norm_stats({x});

    bool identical = true;
    std::uniform_real_distribution<double> wild(-1e6, 1e6);
    for (auto dir : {masking::ComponentStack::Re, masking::ComponentStack::Im}) {
        const auto mc = masking::make_channel_mask(P, dir);
        const auto baseline = net::forward_log_r(ckpt, masking::apply_masks(x, &mc, nullptr));
        for (int trial = 0; trial < 100 && identical; ++trial) {
            PolStack perturbed = x;
            for (int c : mc.hidden_channels())
                for (std::size_t i = 0; i < perturbed.plane(); ++i)
                    perturbed.channel(c)[i] = wild(rng);
            const auto probe =
                net::forward_log_r(ckpt, masking::apply_masks(perturbed, &mc, nullptr));
            identical = probe->data == baseline->data;
        }
    }
    verdict(7, "masked-channel leakage invariance", identical,
            identical ? "200 perturbed passes bit-identical" : "output changed");
    return identical;
}

// 8. Plumbing exactness
bool criterion8() {
    const fs::path dir =
        fs::temp_directory_path() / ("polm_acceptance_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
    bool pass = true;
    std::string detail;

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    };

    // PFR round trip on float-representable data, byte-for-byte stable.
    {
        Raster r(4, 17, 23);
        r.labels = default_pol_labels(2);
        std::mt19937_64 rng(88);
        std::uniform_int_distribution<int> q(-4096, 4096);
        for (double& v : r.data) v = static_cast<double>(q(rng)) / 256.0;
        io::write_pfr((dir / "a.pfr").string(), r);
        const Raster back = io::read_pfr((dir / "a.pfr").string());
        io::write_pfr((dir / "b.pfr").string(), back);
        if (back.data != r.data || back.labels != r.labels ||
            slurp(dir / "a.pfr") != slurp(dir / "b.pfr")) {
            pass = false;
            detail += "pfr round trip differs; ";
        }
    }

    // Checkpoint round trip, byte-for-byte stable.
    {
        net::UNetConfig ncfg;
        ncfg.in_channels = 4;
        ncfg.out_channels = 2;
        ncfg.base_width = 4;
        ncfg.depth = 2;
        net::Checkpoint ckpt;
        ckpt.net = net::UNet::init(ncfg, 99);
        ckpt.stats.mean = {0.25, -1.5, 0.125, 2.0};
        ckpt.stats.stddev = {1.0, 0.5, 2.0, 4.0};
        ckpt.epoch = 7;
        ckpt.loss_history = {5.0, 4.5, 4.25};
        auto params = ckpt.net.parameters();
        for (auto& p : params) {
            p->ensure_grad();
            for (double& g : p->grad) g = 0.5;
        }
        ad::adamw_step(params, ckpt.opt, ckpt.hp);
        io::save_checkpoint((dir / "a.pmck").string(), ckpt);
        const auto back = io::load_checkpoint((dir / "a.pmck").string());
        io::save_checkpoint((dir / "b.pmck").string(), back);
        if (slurp(dir / "a.pmck") != slurp(dir / "b.pmck")) {
            pass = false;
            detail += "checkpoint round trip differs; ";
        }
    }

    // Patch round trips: divisible and far-border-anchored layouts.
    for (auto [H, W] : {std::pair{64, 64}, std::pair{50, 70}}) {
        PolStack img(4, H, W);
        std::mt19937_64 rng(H * 1000 + W);
        std::normal_distribution<double> n(0.0, 1.0);
        for (double& v : img.data) v = n(rng);
        for (auto policy : {pipeline::OverlapPolicy::None, pipeline::OverlapPolicy::Average}) {
            const auto grid = pipeline::make_patch_grid(H, W, 32, 32, policy);
            const auto back =
                pipeline::stitch_patches(pipeline::extract_patches(img, grid), grid, img.C);
            if (back.data != img.data) {
                pass = false;
                detail += "stitch round trip differs at " + std::to_string(H) + "x" +
                          std::to_string(W) + "; ";
            }
        }
    }

    // Flop count against a fully hand-expanded small configuration.
    {
        if (net::conv_flops(net::ConvSpec{1, 1, 1, false}, 4, 4, false) != 48) {
            pass = false;
            detail += "1x1 conv flops != 48; ";
        }
        net::UNetConfig ncfg;
        ncfg.in_channels = 2;
        ncfg.out_channels = 1;
        ncfg.base_width = 1;
        ncfg.depth = 1;
        // Hand count on 4x4: two encoder convs, pool, two bottleneck convs at
        // 2x2, two decoder convs, final 1x1.
        const std::int64_t hand = (2 * 1 * 2 * 9 * 16 + 16 + 16) +  // 2->1 conv
                                  (2 * 1 * 1 * 9 * 16 + 16 + 16) +  // 1->1 conv
                                  (4 * 1 * 2 * 2) +                 // 2x2 mean pool
                                  (2 * 2 * 1 * 9 * 4 + 8 + 8) +     // 1->2 conv
                                  (2 * 2 * 2 * 9 * 4 + 8 + 8) +     // 2->2 conv
                                  (2 * 1 * 3 * 9 * 16 + 16 + 16) +  // concat(2+1)->1 conv
                                  (2 * 1 * 1 * 9 * 16 + 16 + 16) +  // 1->1 conv
                                  (2 * 1 * 1 * 1 * 16 + 16);        // final 1x1, no activation
        if (net::count_flops(ncfg, 4, 4) != hand) {
            pass = false;
            detail += "count_flops != hand count " + std::to_string(hand) + "; ";
        }
    }

    std::error_code ec;
    fs::remove_all(dir, ec);
    verdict(8, "serialization and bookkeeping exactness", pass,
            pass ? "all round trips bit-identical, flop count exact" : detail);
    return pass;
}

}  // namespace

int main() {
    int failures = 0;
    failures += !criterion1();
    failures += !criterion2();
    failures += !criterion3();
    failures += !criterion4();
    const auto trend = criterion5();
    failures += !trend.pass;
    failures += !criterion6(trend.polmerlin_ckpt);
    failures += !criterion7();
    failures += !criterion8();
    if (failures == 0)
        std::printf("acceptance: all 8 criteria passed\n");
    else
        std::printf("acceptance: %d criteria FAILED\n", failures);
    return failures == 0 ? 0 : 1;
}
