#include "polm/gradcheck_suite.hpp"

#include <cmath>
#include <random>

#include "polm/network.hpp"
#include "polm/speckle.hpp"
#include "polm/tensor.hpp"

namespace polm::check {

using ad::TensorPtr;

namespace {

TensorPtr random_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo, double hi) {
    auto t = ad::make_tensor(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : t->data) v = u(rng);
    return t;
}

// Keeps probes away from the leaky-relu kink so finite differences stay valid.
void push_off_kink(const TensorPtr& t, double margin) {
    for (double& v : t->data)
        if (std::abs(v) < margin) v = v < 0 ? -margin : margin;
}

TensorPtr sum_sq(const TensorPtr& t) { return ad::reduce_sum(ad::square(t)); }

}  // namespace

std::vector<SuiteResult> run_autodiff_suite(std::uint64_t seed, double tol) {
    std::vector<SuiteResult> results;
    std::mt19937_64 rng(seed);

    auto record = [&](const std::string& name, const ad::GradCheckReport& report) {
        results.push_back({name, report.max_rel_err, report.max_rel_err <= tol});
    };

    const auto input = random_tensor({2, 6, 6}, rng, -1.0, 1.0);
    const auto kernel = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
    const auto bias = random_tensor({3}, rng, -0.2, 0.2);
    for (auto padding : {ad::Padding::Zero, ad::Padding::Reflect}) {
        const char* tag = padding == ad::Padding::Zero ? "zero" : "reflect";
        record(std::string("conv2d_") + tag + "/input",
               ad::grad_check([&](const TensorPtr& x) { return sum_sq(ad::conv2d(x, kernel, bias, padding)); },
                              input, tol));
        record(std::string("conv2d_") + tag + "/kernel",
               ad::grad_check([&](const TensorPtr& k) { return sum_sq(ad::conv2d(input, k, bias, padding)); },
                              kernel, tol));
        record(std::string("conv2d_") + tag + "/bias",
               ad::grad_check([&](const TensorPtr& b) { return sum_sq(ad::conv2d(input, kernel, b, padding)); },
                              bias, tol));
    }

    const auto pool_in = random_tensor({2, 4, 4}, rng, -1.0, 1.0);
    record("downsample_stride2",
           ad::grad_check([](const TensorPtr& x) { return sum_sq(ad::downsample_stride2(x)); },
                          pool_in, tol));
    const auto up_in = random_tensor({2, 3, 3}, rng, -1.0, 1.0);
    record("upsample_nearest2x",
           ad::grad_check([](const TensorPtr& x) { return sum_sq(ad::upsample_nearest2x(x)); },
                          up_in, tol));

    auto elem_in = random_tensor({1, 4, 4}, rng, -1.0, 1.0);
    push_off_kink(elem_in, 1e-2);
    record("leaky_relu",
           ad::grad_check([](const TensorPtr& x) { return sum_sq(ad::leaky_relu(x, 0.1)); },
                          elem_in, tol));
    record("exp", ad::grad_check([](const TensorPtr& x) { return sum_sq(ad::exp(x)); }, elem_in, tol));
    record("square",
           ad::grad_check([](const TensorPtr& x) { return sum_sq(ad::square(x)); }, elem_in, tol));
    const auto pos_in = random_tensor({1, 4, 4}, rng, 0.5, 2.0);
    record("log", ad::grad_check([](const TensorPtr& x) { return sum_sq(ad::log(x)); }, pos_in, tol));

    const auto other = random_tensor({1, 4, 4}, rng, -1.0, 1.0);
    record("add", ad::grad_check([&](const TensorPtr& x) { return sum_sq(ad::add(x, other)); },
                                 elem_in, tol));
    record("sub", ad::grad_check([&](const TensorPtr& x) { return sum_sq(ad::sub(other, x)); },
                                 elem_in, tol));
    record("mul", ad::grad_check([&](const TensorPtr& x) { return sum_sq(ad::mul(x, other)); },
                                 elem_in, tol));
    record("scalar_mul_negate",
           ad::grad_check([](const TensorPtr& x) { return sum_sq(ad::negate(ad::scalar_mul(x, 1.7))); },
                          elem_in, tol));
    record("concat_channels",
           ad::grad_check([&](const TensorPtr& x) { return sum_sq(ad::concat_channels(x, other)); },
                          elem_in, tol));
    record("reduce_sum",
           ad::grad_check([](const TensorPtr& x) { return ad::reduce_sum(x); }, elem_in, tol));
    record("two_branch_reuse",
           ad::grad_check([](const TensorPtr& x) { return ad::reduce_sum(ad::mul(x, x)); },
                          elem_in, tol));
    record("conv_relu_sum_composite",
           ad::grad_check(
               [&](const TensorPtr& x) {
                   return ad::reduce_sum(ad::leaky_relu(ad::conv2d(x, kernel, bias, ad::Padding::Reflect), 0.1));
               },
               input, tol));

    // Full training loss on a small dual-pol patch, checked against every
    // network parameter tensor.
    net::UNetConfig cfg;
    cfg.in_channels = 4;
    cfg.out_channels = 2;
    cfg.base_width = 4;
    cfg.depth = 1;  // full encoder/decoder path while keeping FD probes cheap
    net::Checkpoint ckpt;
    ckpt.net = net::UNet::init(cfg, seed ^ 0xC0FFEE);
    const auto cov = speckle::CovarianceField::constant(8, 8, 2.0, 2.0, 1.0);
    const PolStack x = speckle::sample_dual_pol(cov, seed ^ 0xD1CE);
    ckpt.stats = net::fit_norm_stats({x});

    for (std::size_t li = 0; li < ckpt.net.weights.size(); ++li) {
        for (int which = 0; which < 2; ++which) {
            const TensorPtr& target = which == 0 ? ckpt.net.weights[li] : ckpt.net.biases[li];
            auto closure = [&, li, which](const TensorPtr& probe) {
                net::Checkpoint probed = ckpt;
                probed.net.weights = ckpt.net.weights;
                probed.net.biases = ckpt.net.biases;
                (which == 0 ? probed.net.weights : probed.net.biases)[li] = probe;
                return net::polmerlin_step_loss(probed, x, 0.02, seed ^ 0xFEED);
            };
            record("polmerlin_step_loss/layer" + std::to_string(li) +
                       (which == 0 ? "/kernel" : "/bias"),
                   ad::grad_check(closure, target, tol));
        }
    }
    return results;
}

bool all_pass(const std::vector<SuiteResult>& results) {
    for (const auto& r : results)
        if (!r.pass) return false;
    return !results.empty();
}

}  // namespace polm::check
