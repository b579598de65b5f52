#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <random>

#include "polm/network.hpp"

using namespace polm;
using namespace polm::net;

namespace {

PolStack random_stack(int P, int H, int W, std::uint64_t seed) {
    PolStack x(2 * P, H, W);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& v : x.data) v = n(rng);
    return x;
}

UNetConfig tiny_cfg(int P, int width = 4, int depth = 2) {
    UNetConfig cfg;
    cfg.in_channels = 2 * P;
    cfg.out_channels = P;
    cfg.base_width = width;
    cfg.depth = depth;
    return cfg;
}

}  // namespace

TEST_CASE("conv spec layout") {
    auto cfg = tiny_cfg(2, 16, 2);
    auto specs = conv_specs(cfg);
    REQUIRE(specs.size() == 11);  // 4 encoder, 2 bottleneck, 4 decoder, final 1x1
    CHECK(specs[0].in == 4);
    CHECK(specs[0].out == 16);
    CHECK(specs[2].in == 16);
    CHECK(specs[2].out == 32);
    CHECK(specs[4].out == 64);  // bottleneck
    CHECK(specs[6].in == 64 + 32);  // first decoder concat
    CHECK(specs[8].in == 32 + 16);
    CHECK(specs[10].in == 16);
    CHECK(specs[10].out == 2);
    CHECK(specs[10].k == 1);
    CHECK(specs[10].zero_init);
    for (std::size_t i = 0; i + 1 < specs.size(); ++i) CHECK_FALSE(specs[i].zero_init);
}

TEST_CASE("untrained net outputs log r = 0 and correct shape") {
    auto cfg = tiny_cfg(2);
    auto net = UNet::init(cfg, 31);
    auto x = ad::make_tensor({4, 16, 16});
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& v : x->data) v = n(rng);
    auto y = net.forward(x);
    REQUIRE(y->shape == std::vector<int>{2, 16, 16});
    for (double v : y->data) CHECK(v == 0.0);
}

TEST_CASE("forward contract checks") {
    auto net = UNet::init(tiny_cfg(1), 0);
    CHECK_THROWS_AS(net.forward(ad::make_tensor({3, 8, 8})), std::invalid_argument);
    CHECK_THROWS_AS(net.forward(ad::make_tensor({2, 6, 8})), std::invalid_argument);
    UNetConfig even = tiny_cfg(1);
    even.kernel = 4;
    CHECK_THROWS_AS(UNet::init(even, 0), std::invalid_argument);
}

TEST_CASE("init determinism and parameter bookkeeping") {
    auto cfg = tiny_cfg(1, 4, 1);
    auto a = UNet::init(cfg, 9);
    auto b = UNet::init(cfg, 9);
    auto c = UNet::init(cfg, 10);
    REQUIRE(a.weights.size() == b.weights.size());
    for (std::size_t i = 0; i < a.weights.size(); ++i) {
        CHECK(a.weights[i]->data == b.weights[i]->data);
        for (double v : a.biases[i]->data) CHECK(v == 0.0);
    }
    CHECK(a.weights[0]->data != c.weights[0]->data);

    std::size_t n = 0;
    for (const auto& p : a.parameters()) n += p->size();
    CHECK(n == a.parameter_count());
    CHECK(a.parameters().size() == 2 * a.weights.size());
}

TEST_CASE("log intensity and preprocessing values") {
    PolStack x(2, 2, 2);
    x.at(0, 0, 0) = 3.0;
    x.at(1, 1, 1) = -2.0;
    auto li = log_intensity(x);
    CHECK(li[0] == doctest::Approx(std::log(9.0 + kLogEps)));
    CHECK(li[1] == doctest::Approx(std::log(kLogEps)));  // masked zero is finite
    CHECK(li[7] == doctest::Approx(std::log(4.0 + kLogEps)));

    NormStats stats;
    stats.mean = {1.0, -0.5};
    stats.stddev = {2.0, 4.0};
    auto t = preprocess(x, stats);
    REQUIRE(t->shape == std::vector<int>{2, 2, 2});
    CHECK(t->data[0] == doctest::Approx((std::log(9.0 + kLogEps) - 1.0) / 2.0));
    CHECK(t->data[7] == doctest::Approx((std::log(4.0 + kLogEps) + 0.5) / 4.0));
    CHECK_FALSE(t->requires_grad);

    NormStats bad;
    bad.mean = {0.0};
    bad.stddev = {1.0};
    CHECK_THROWS_AS(preprocess(x, bad), std::invalid_argument);
}

TEST_CASE("fit_norm_stats on a constant dataset clamps the deviation") {
    PolStack x(2, 4, 4);
    std::fill(x.data.begin(), x.data.end(), 0.5);
    auto stats = fit_norm_stats({x});
    REQUIRE(stats.mean.size() == 2);
    CHECK(stats.mean[0] == doctest::Approx(std::log(0.25 + kLogEps)));
    CHECK(stats.stddev[0] == 1.0);  // zero spread clamps to one
    CHECK_THROWS_AS(fit_norm_stats({}), std::invalid_argument);
}

TEST_CASE("likelihood value at a known point") {
    // Per element: 0.5 * log r + gamma^2 / r with r = 2, gamma = 1.
    const double expected = 0.5 * std::log(2.0) + 0.5;
    auto log_r = ad::make_tensor({1, 2, 2}, std::vector<double>(4, std::log(2.0)));
    auto loss = nll_loss(log_r, std::vector<double>(4, 1.0));
    CHECK(loss->data[0] == doctest::Approx(4.0 * expected));
    CHECK(4.0 * expected == doctest::Approx(4.0 * 0.846574).epsilon(1e-5));

    CHECK_THROWS_AS(nll_loss(log_r, std::vector<double>(3, 1.0)), std::invalid_argument);
    CHECK_THROWS_AS(nll_loss(log_r, std::vector<double>(4, std::nan(""))),
                    std::invalid_argument);
}

TEST_CASE("likelihood is minimized at r = 2 gamma^2") {
    const double g2 = 0.37;  // gamma^2
    auto value_at = [&](double r) {
        auto log_r = ad::make_tensor({1, 1, 1}, std::vector<double>{std::log(r)});
        return nll_loss(log_r, std::vector<double>{std::sqrt(g2)})->data[0];
    };
    const double r_star = 2.0 * g2;
    const double best = value_at(r_star);
    for (double r : {0.1, 0.3, 0.5, 0.74, 1.0, 2.0, 5.0}) {
        if (std::abs(r - r_star) < 1e-9) continue;
        CHECK(value_at(r) > best);
    }
    CHECK(value_at(r_star * 1.001) > best);
    CHECK(value_at(r_star * 0.999) > best);
}

TEST_CASE("likelihood_target scores against the hidden components") {
    // Masking the Re stack means the network saw only Im, so the estimate
    // must be judged by the unseen Re values (and vice versa).
    auto x = random_stack(2, 2, 2, 3);
    auto t_re_masked = likelihood_target(x, masking::ComponentStack::Re);
    auto t_im_masked = likelihood_target(x, masking::ComponentStack::Im);
    REQUIRE(t_re_masked.size() == 8);
    for (std::size_t i = 0; i < x.plane(); ++i) {
        CHECK(t_re_masked[i] == x.channel(0)[i]);
        CHECK(t_re_masked[x.plane() + i] == x.channel(2)[i]);
        CHECK(t_im_masked[i] == x.channel(1)[i]);
        CHECK(t_im_masked[x.plane() + i] == x.channel(3)[i]);
    }
}

TEST_CASE("step loss of an untrained net equals the total component energy") {
    // With zero-initialized output, r = 1 everywhere, so each pass contributes
    // sum(gamma^2): together that is the sum of squares of every component.
    auto x = random_stack(2, 16, 16, 5);
    Checkpoint ckpt;
    ckpt.net = UNet::init(tiny_cfg(2), 17);
    ckpt.stats = fit_norm_stats({x});
    auto loss = polmerlin_step_loss(ckpt, x, 0.0, 123);
    double energy = 0.0;
    for (double v : x.data) energy += v * v;
    CHECK(loss->data[0] == doctest::Approx(energy).epsilon(1e-10));

    PolStack wrong(2, 16, 16);
    CHECK_THROWS_AS(polmerlin_step_loss(ckpt, wrong, 0.0, 0), std::invalid_argument);
}

TEST_CASE("step loss is deterministic in the seed and depends on it") {
    auto x = random_stack(1, 16, 16, 6);
    Checkpoint ckpt;
    ckpt.net = UNet::init(tiny_cfg(1), 8);
    // Perturb the final layer so the output is not identically zero.
    for (double& v : ckpt.net.weights.back()->data) v = 0.05;
    ckpt.stats = fit_norm_stats({x});
    auto l1 = polmerlin_step_loss(ckpt, x, 0.3, 42);
    auto l2 = polmerlin_step_loss(ckpt, x, 0.3, 42);
    auto l3 = polmerlin_step_loss(ckpt, x, 0.3, 43);
    CHECK(l1->data[0] == l2->data[0]);
    CHECK(l1->data[0] != l3->data[0]);
}

TEST_CASE("hidden components do not influence the forward pass") {
    auto x = random_stack(1, 16, 16, 12);
    Checkpoint ckpt;
    ckpt.net = UNet::init(tiny_cfg(1), 4);
    for (double& v : ckpt.net.weights.back()->data) v = 0.1;
    ckpt.stats = fit_norm_stats({x});

    auto mc = masking::make_channel_mask(1, masking::ComponentStack::Re);
    auto y1 = forward_log_r(ckpt, masking::apply_masks(x, &mc, nullptr));
    auto perturbed = x;
    for (std::size_t i = 0; i < x.plane(); ++i) perturbed.channel(0)[i] += 10.0;
    auto y2 = forward_log_r(ckpt, masking::apply_masks(perturbed, &mc, nullptr));
    CHECK(y1->data == y2->data);
}

TEST_CASE("flop counting follows the stated convention") {
    // A 1x1 conv mapping one channel to one on a 4x4 plane without activation:
    // 16 multiply-adds at 2 flops plus 16 bias adds.
    CHECK(conv_flops(ConvSpec{1, 1, 1, false}, 4, 4, false) == 48);
    CHECK(conv_flops(ConvSpec{1, 1, 1, false}, 4, 4, true) == 64);
    CHECK(conv_flops(ConvSpec{2, 3, 3, false}, 8, 8, false) ==
          (2 * 3 * 2 * 3 * 3 + 3) * 64);

    // Whole-network count reproduced from the per-layer helper.
    auto cfg = tiny_cfg(2, 4, 2);
    const auto specs = conv_specs(cfg);
    const int H = 16, W = 16;
    std::int64_t expect = 0;
    expect += conv_flops(specs[0], H, W, true) + conv_flops(specs[1], H, W, true);
    expect += 4LL * 4 * 8 * 8;  // 2x2 mean pool of 4 channels
    expect += conv_flops(specs[2], 8, 8, true) + conv_flops(specs[3], 8, 8, true);
    expect += 4LL * 8 * 4 * 4;
    expect += conv_flops(specs[4], 4, 4, true) + conv_flops(specs[5], 4, 4, true);
    expect += conv_flops(specs[6], 8, 8, true) + conv_flops(specs[7], 8, 8, true);
    expect += conv_flops(specs[8], 16, 16, true) + conv_flops(specs[9], 16, 16, true);
    expect += conv_flops(specs[10], 16, 16, false);
    CHECK(count_flops(cfg, H, W) == expect);

    CHECK_THROWS_AS(count_flops(cfg, 0, 16), std::invalid_argument);
}
