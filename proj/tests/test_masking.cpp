#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "polm/masking.hpp"

using namespace polm;
using namespace polm::masking;

namespace {

PolStack counting_stack(int P, int H, int W) {
    PolStack x(2 * P, H, W);
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = static_cast<double>(i) + 1.0;
    return x;
}

}  // namespace

TEST_CASE("channel mask hides exactly one component stack") {
    auto re = make_channel_mask(2, ComponentStack::Re);
    CHECK(re.hidden_channels() == std::vector<int>{0, 2});
    CHECK(re.hides(0));
    CHECK_FALSE(re.hides(1));
    CHECK(re.hides(2));
    CHECK_FALSE(re.hides(3));

    auto im = make_channel_mask(3, ComponentStack::Im);
    CHECK(im.hidden_channels() == std::vector<int>{1, 3, 5});

    CHECK_THROWS_AS(make_channel_mask(0, ComponentStack::Re), std::invalid_argument);
}

TEST_CASE("spatial mask bounds and edge probabilities") {
    CHECK_THROWS_AS(make_spatial_mask(4, 4, 1, -0.1, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_spatial_mask(4, 4, 1, 1.0, 0), std::invalid_argument);

    auto none = make_spatial_mask(8, 8, 2, 0.0, 3);
    for (auto k : none.keep) CHECK(k == 1);
}

TEST_CASE("spatial mask drop fraction is near p") {
    const int H = 320, W = 320, P = 2;
    auto m = make_spatial_mask(H, W, P, 0.02, 11);
    REQUIRE(m.keep.size() == static_cast<std::size_t>(H) * W * 2 * P);
    std::size_t dropped = 0;
    for (auto k : m.keep)
        if (k == 0) ++dropped;
    const double frac = static_cast<double>(dropped) / static_cast<double>(m.keep.size());
    CHECK(frac > 0.0185);
    CHECK(frac < 0.0215);
}

TEST_CASE("shared spatial mask repeats one plane across channels") {
    auto m = make_spatial_mask(16, 16, 2, 0.3, 5, /*per_channel=*/false);
    for (int c = 1; c < 4; ++c)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) CHECK(m.kept(c, y, x) == m.kept(0, y, x));

    auto per = make_spatial_mask(16, 16, 2, 0.3, 5, /*per_channel=*/true);
    bool any_differs = false;
    for (int y = 0; y < 16 && !any_differs; ++y)
        for (int x = 0; x < 16; ++x)
            if (per.kept(0, y, x) != per.kept(1, y, x)) {
                any_differs = true;
                break;
            }
    CHECK(any_differs);
}

TEST_CASE("apply_masks zeroes hidden entries and nothing else") {
    auto x = counting_stack(2, 4, 4);
    auto mc = make_channel_mask(2, ComponentStack::Re);
    auto ms = make_spatial_mask(4, 4, 2, 0.4, 17);
    auto y = apply_masks(x, &mc, &ms);

    for (int c = 0; c < 4; ++c)
        for (int yy = 0; yy < 4; ++yy)
            for (int xx = 0; xx < 4; ++xx) {
                const bool hidden = mc.hides(c) || !ms.kept(c, yy, xx);
                CHECK(y.at(c, yy, xx) == (hidden ? 0.0 : x.at(c, yy, xx)));
            }

    // Identity when both masks are null; idempotent when reapplied.
    CHECK(apply_masks(x, nullptr, nullptr).data == x.data);
    CHECK(apply_masks(y, &mc, &ms).data == y.data);
}

TEST_CASE("mask_multiplier agrees with apply_masks") {
    auto x = counting_stack(3, 5, 7);
    auto mc = make_channel_mask(3, ComponentStack::Im);
    auto ms = make_spatial_mask(5, 7, 3, 0.25, 23);
    auto mult = mask_multiplier(5, 7, 3, &mc, &ms);
    REQUIRE(mult.size() == x.data.size());
    auto y = apply_masks(x, &mc, &ms);
    for (std::size_t i = 0; i < mult.size(); ++i) {
        CHECK((mult[i] == 0.0 || mult[i] == 1.0));
        CHECK(y.data[i] == doctest::Approx(x.data[i] * mult[i]));
    }

    auto all_ones = mask_multiplier(5, 7, 3, nullptr, nullptr);
    for (double v : all_ones) CHECK(v == 1.0);
}

TEST_CASE("masking is deterministic in the seed") {
    auto a = make_spatial_mask(32, 32, 2, 0.1, 77);
    auto b = make_spatial_mask(32, 32, 2, 0.1, 77);
    auto c = make_spatial_mask(32, 32, 2, 0.1, 78);
    CHECK(a.keep == b.keep);
    CHECK(a.keep != c.keep);
}

TEST_CASE("apply_masks rejects mismatched masks") {
    auto x = counting_stack(2, 4, 4);
    auto wrong_p = make_channel_mask(3, ComponentStack::Re);
    CHECK_THROWS_AS(apply_masks(x, &wrong_p, nullptr), std::invalid_argument);
    auto wrong_shape = make_spatial_mask(5, 4, 2, 0.1, 0);
    CHECK_THROWS_AS(apply_masks(x, nullptr, &wrong_shape), std::invalid_argument);
}
