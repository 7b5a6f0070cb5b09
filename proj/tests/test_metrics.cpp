#include <doctest.h>

#include <cmath>

#include "fundus/metrics.hpp"
#include "fundus/rng.hpp"

using namespace fundus;

namespace {

// Pixel-counting oracle for dice on a binary prediction (eps-free).
double dice_oracle(const MaskImage& x, const MaskImage& y) {
    std::int64_t inter = 0, nx = 0, ny = 0;
    for (std::size_t e = 0; e < x.v.size(); ++e) {
        inter += x.v[e] & y.v[e];
        nx += x.v[e];
        ny += y.v[e];
    }
    if (nx + ny == 0) return 1.0;
    return 2.0 * inter / static_cast<double>(nx + ny);
}

double iou_oracle(const MaskImage& x, const MaskImage& y) {
    std::int64_t inter = 0, uni = 0;
    for (std::size_t e = 0; e < x.v.size(); ++e) {
        inter += x.v[e] & y.v[e];
        uni += x.v[e] | y.v[e];
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

MaskImage random_mask(Rng& rng, int h, int w, double density) {
    MaskImage m(h, w);
    for (auto& v : m.v) v = rng.uniform() < density ? 1 : 0;
    return m;
}

Tensor<double> mask_as_pred(const MaskImage& m) {
    std::vector<double> v(m.v.begin(), m.v.end());
    return Tensor<double>::from({1, m.height, m.width}, std::move(v));
}

}  // namespace

TEST_CASE("dice examples (squared-sum denominator with epsilon)") {
    MaskImage ones(2, 2);
    for (auto& v : ones.v) v = 1;
    CHECK(metrics::dice(ones, mask_as_pred(ones), 1e-5) ==
          doctest::Approx(8.0 / (8.0 + 1e-5)).epsilon(1e-12));

    MaskImage left(2, 2), right(2, 2);
    left.at(0, 0) = left.at(1, 0) = 1;
    right.at(0, 1) = right.at(1, 1) = 1;
    CHECK(metrics::dice(left, mask_as_pred(right), 1e-5) == 0.0);

    auto half = Tensor<double>::from({1, 2, 2}, {0.5, 0.5, 0.5, 0.5});
    CHECK(metrics::dice(left, half, 1e-5) == doctest::Approx(2.0 / (1e-5 + 2.0 + 1.0)).epsilon(1e-9));

    CHECK_THROWS_AS(metrics::dice(left, Tensor<double>::zeros({1, 3, 3}), 1e-5),
                    std::invalid_argument);
}

TEST_CASE("log dice loss") {
    MaskImage m(2, 2);
    m.at(0, 0) = 1;
    CHECK(metrics::log_dice_loss(m, mask_as_pred(m), 1e-7) == doctest::Approx(0.0).epsilon(1e-6));

    // dice exactly 0.5: one true pixel, prediction covers it plus two others
    MaskImage x(2, 2);
    x.at(0, 0) = 1;
    auto y = Tensor<double>::from({1, 2, 2}, {1, 1, 1, 0});
    CHECK(metrics::dice(x, y, 1e-12) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(metrics::log_dice_loss(x, y, 1e-12) == doctest::Approx(0.69315).epsilon(1e-4));

    // disjoint: dice 0, loss hits the floor
    MaskImage z(2, 2);
    z.at(1, 1) = 1;
    auto y2 = Tensor<double>::from({1, 2, 2}, {1, 0, 0, 0});
    CHECK(metrics::log_dice_loss(z, y2, 1e-5) == doctest::Approx(-std::log(1e-7)).epsilon(1e-9));
}

TEST_CASE("multi-channel loss") {
    const int h = 2, w = 3;
    MaskImage bg(h, w), cup(h, w), rim(h, w);
    bg.at(0, 0) = bg.at(0, 1) = bg.at(0, 2) = 1;
    cup.at(1, 0) = 1;
    rim.at(1, 1) = rim.at(1, 2) = 1;

    auto perfect = [&](const MaskImage& m) {
        std::vector<double> v(m.v.begin(), m.v.end());
        return v;
    };

    SUBCASE("perfect prediction gives loss near zero") {
        std::vector<double> v;
        for (const auto* m : {&bg, &cup, &rim})
            for (auto e : perfect(*m)) v.push_back(e);
        auto pred3 = Tensor<double>::from({3, h, w}, std::move(v));
        auto loss = metrics::multi_channel_loss_graph<double>({&bg, &cup, &rim}, pred3, 1e-5);
        CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-4));
    }
    SUBCASE("one channel at dice 1/2, two perfect") {
        // cup channel predicts its pixel plus two background pixels
        std::vector<double> v = perfect(bg);
        std::vector<double> cup_pred = perfect(cup);
        cup_pred[0] = cup_pred[1] = 1;  // extra mass: dice = 2/(1+3)
        for (auto e : cup_pred) v.push_back(e);
        for (auto e : perfect(rim)) v.push_back(e);
        auto pred3 = Tensor<double>::from({3, h, w}, std::move(v));
        auto loss = metrics::multi_channel_loss_graph<double>({&bg, &cup, &rim}, pred3, 1e-9);
        CHECK(loss.item() == doctest::Approx(0.69315 / 3).epsilon(1e-3));
    }
    SUBCASE("symmetric under channel permutation") {
        Rng rng(3);
        std::vector<double> v(3 * h * w);
        for (auto& e : v) e = rng.uniform(0.05, 0.95);
        auto pred3 = Tensor<double>::from({3, h, w}, v);
        // permute (gt, pred) pairs together: rotate channels by one
        std::vector<double> vp(3 * h * w);
        for (int c = 0; c < 3; ++c)
            for (int e = 0; e < h * w; ++e) vp[((c + 1) % 3) * h * w + e] = v[c * h * w + e];
        auto pred3p = Tensor<double>::from({3, h, w}, std::move(vp));
        auto a = metrics::multi_channel_loss_graph<double>({&bg, &cup, &rim}, pred3, 1e-5);
        auto b = metrics::multi_channel_loss_graph<double>({&rim, &bg, &cup}, pred3p, 1e-5);
        CHECK(a.item() == doctest::Approx(b.item()).epsilon(1e-12));
    }
    SUBCASE("non-partition ground truth is rejected") {
        MaskImage bad = cup;
        bad.at(0, 0) = 1;  // overlaps background
        auto pred3 = Tensor<double>::zeros({3, h, w});
        CHECK_THROWS_WITH_AS(
            (metrics::multi_channel_loss_graph<double>({&bg, &bad, &rim}, pred3, 1e-5)),
            doctest::Contains("not a partition"), std::invalid_argument);
    }
}

TEST_CASE("iou examples") {
    MaskImage a(2, 2), b(2, 2);
    a.at(0, 0) = a.at(0, 1) = 1;
    CHECK(metrics::iou(a, a) == 1.0);

    b.at(1, 0) = 1;
    CHECK(metrics::iou(a, b) == 0.0);

    MaskImage c(2, 2);
    c.at(0, 0) = c.at(1, 0) = 1;  // |a^c|=1, |a u c|=3
    CHECK(metrics::iou(a, c) == doctest::Approx(1.0 / 3).epsilon(1e-12));

    MaskImage e1(2, 2), e2(2, 2);
    CHECK(metrics::iou(e1, e2) == 1.0);  // empty vs empty: agreement on absence
}

TEST_CASE("dice/iou agree with pixel-counting oracles; F1 >= Jaccard; identity") {
    Rng rng(99);
    for (int rep = 0; rep < 200; ++rep) {
        const int h = 2 + static_cast<int>(rng.uniform_int(14));
        const int w = 2 + static_cast<int>(rng.uniform_int(14));
        auto x = random_mask(rng, h, w, rng.uniform(0.0, 1.0));
        auto y = random_mask(rng, h, w, rng.uniform(0.0, 1.0));

        const double d = metrics::binary_dice(x, y);
        const double j = metrics::iou(x, y);
        CHECK(std::abs(d - dice_oracle(x, y)) < 1e-9);
        CHECK(std::abs(j - iou_oracle(x, y)) < 1e-9);
        CHECK(j <= d + 1e-12);
        CHECK(d <= 1.0);
        CHECK(j >= 0.0);
        CHECK(std::abs(j - d / (2.0 - d)) < 1e-9);  // IoU = dice / (2 - dice)

        // soft dice with a binary prediction and eps reduces to binary dice up to eps
        const double soft = metrics::dice(x, mask_as_pred(y), 1e-5);
        CHECK(soft == doctest::Approx(d).epsilon(1e-4));
        CHECK(std::abs(metrics::dice(x, mask_as_pred(y), 1e-5) -
                       metrics::dice(y, mask_as_pred(x), 1e-5)) < 1e-12);  // symmetry
    }
}

TEST_CASE("dice of a mask against itself stays above 1 - eps") {
    Rng rng(123);
    for (int rep = 0; rep < 20; ++rep) {
        auto x = random_mask(rng, 8, 8, rng.uniform(0.1, 0.9));
        if (x.empty_mask()) continue;
        CHECK(metrics::dice(x, mask_as_pred(x), 1e-5) >= 1.0 - 1e-5);
    }
}

TEST_CASE("masks_from_channels") {
    auto pick = [](std::initializer_list<double> p) {
        std::vector<double> v;
        for (double c : p) v.push_back(c);
        return Tensor<double>::from({3, 1, 1}, std::move(v));
    };
    auto [d1, c1] = metrics::masks_from_channels(pick({0.1, 0.7, 0.2}));
    CHECK(c1.at(0, 0) == 1);  // cup pixel, hence disc too
    CHECK(d1.at(0, 0) == 1);
    auto [d2, c2] = metrics::masks_from_channels(pick({0.8, 0.1, 0.1}));
    CHECK(c2.at(0, 0) == 0);
    CHECK(d2.at(0, 0) == 0);
    auto [d3, c3] = metrics::masks_from_channels(pick({0.2, 0.1, 0.7}));
    CHECK(c3.at(0, 0) == 0);  // rim-only: disc without cup
    CHECK(d3.at(0, 0) == 1);
}

TEST_CASE("vertical cup-to-disc ratio") {
    MaskImage disc(40, 8), cup(40, 8);
    for (int i = 10; i <= 30; ++i) disc.at(i, 3) = 1;
    for (int i = 15; i <= 25; ++i) cup.at(i, 4) = 1;
    CHECK(metrics::vertical_cdr(disc, cup) == doctest::Approx(11.0 / 21.0).epsilon(1e-12));
    CHECK(metrics::vertical_cdr(disc, disc) == 1.0);
    CHECK(metrics::vertical_cdr(disc, MaskImage(40, 8)) == 0.0);
    CHECK_THROWS_AS(metrics::vertical_cdr(MaskImage(40, 8), cup), std::invalid_argument);
}

TEST_CASE("eval report CSV round trip has exactly six columns") {
    metrics::EvalReport rep;
    rep.rows.push_back({"s1", 0.9, 0.8, 0.7, 0.6, 0.5});
    rep.rows.push_back({"s2", 0.95, 0.85, 0.75, 0.65, 0.55});
    for (const auto& r : rep.rows) {
        rep.mean.dice_disc += r.dice_disc / 2;
        rep.mean.iou_disc += r.iou_disc / 2;
        rep.mean.dice_cup += r.dice_cup / 2;
        rep.mean.iou_cup += r.iou_cup / 2;
        rep.mean.cdr += r.cdr / 2;
    }
    const std::string csv = rep.to_csv();
    auto back = metrics::EvalReport::from_csv(csv);
    REQUIRE(back.rows.size() == 2);
    CHECK(back.rows[1].dice_cup == doctest::Approx(0.75));
    CHECK(back.mean.dice_disc == doctest::Approx(rep.mean.dice_disc));
    // row count = samples + MEAN
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + 2 + MEAN
    CHECK_THROWS_AS(metrics::EvalReport::from_csv("id,dice\nx,1\n"), std::invalid_argument);
}
