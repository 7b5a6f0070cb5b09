#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "fundus/rng.hpp"
#include "fundus/roi.hpp"

using namespace fundus;

namespace {

// Brute-force first moments, the oracle for the centroid (integer sums, so
// equality is exact).
Centroid centroid_oracle(const MaskImage& m) {
    std::int64_t total = 0, rs = 0, cs = 0;
    for (int i = 0; i < m.height; ++i)
        for (int j = 0; j < m.width; ++j)
            if (m.at(i, j)) {
                ++total;
                rs += i;
                cs += j;
            }
    Centroid c;
    if (total == 0) {
        c.row = (m.height - 1) / 2.0;
        c.col = (m.width - 1) / 2.0;
        c.degenerate = true;
        return c;
    }
    c.row = static_cast<double>(rs) / total;
    c.col = static_cast<double>(cs) / total;
    return c;
}

MaskImage random_mask(Rng& rng, int h, int w, double density) {
    MaskImage m(h, w);
    for (auto& v : m.v) v = rng.uniform() < density ? 1 : 0;
    return m;
}

}  // namespace

TEST_CASE("binarize") {
    const float probs[] = {0.49f, 0.5f, 0.51f};
    auto m = roi::binarize(probs, 1, 3, 0.5);
    CHECK(m.v == std::vector<std::uint8_t>{0, 1, 1});  // >= convention

    const float zeros[] = {0, 0, 0, 0};
    CHECK(roi::binarize(zeros, 2, 2).empty_mask());
    CHECK(roi::binarize(zeros, 2, 2, 0.0).sum() == 4);  // threshold 0 -> all ones
}

TEST_CASE("centroid examples") {
    MaskImage single(16, 16);
    single.at(3, 7) = 1;
    auto c = roi::centroid(single);
    CHECK(c.row == 3.0);
    CHECK(c.col == 7.0);
    CHECK(!c.degenerate);

    MaskImage full(4, 4);
    for (auto& v : full.v) v = 1;
    auto cf = roi::centroid(full);
    CHECK(cf.row == 1.5);
    CHECK(cf.col == 1.5);

    MaskImage empty(9, 5);
    auto ce = roi::centroid(empty);
    CHECK(ce.degenerate);
    CHECK(ce.row == 4.0);
    CHECK(ce.col == 2.0);
}

TEST_CASE("centroid equals the brute-force oracle exactly on 100 random masks") {
    Rng rng(2024);
    for (int i = 0; i < 100; ++i) {
        auto m = random_mask(rng, 32, 32, rng.uniform(0.02, 0.7));
        auto a = roi::centroid(m);
        auto b = centroid_oracle(m);
        CHECK(a.row == b.row);  // exact: integer sums, single division
        CHECK(a.col == b.col);
        CHECK(a.degenerate == b.degenerate);
    }
}

TEST_CASE("centroid translation equivariance") {
    Rng rng(77);
    for (int rep = 0; rep < 20; ++rep) {
        MaskImage m = random_mask(rng, 24, 24, 0.3);
        // confine content to the upper-left 16x16 so a shift cannot clip it
        for (int i = 0; i < 24; ++i)
            for (int j = 0; j < 24; ++j)
                if (i >= 16 || j >= 16) m.at(i, j) = 0;
        if (m.empty_mask()) continue;
        const int dr = static_cast<int>(rng.uniform_int(8));
        const int dc = static_cast<int>(rng.uniform_int(8));
        MaskImage shifted(24, 24);
        for (int i = 0; i < 16; ++i)
            for (int j = 0; j < 16; ++j) shifted.at(i + dr, j + dc) = m.at(i, j);
        auto a = roi::centroid(m);
        auto b = roi::centroid(shifted);
        CHECK(b.row == doctest::Approx(a.row + dr).epsilon(1e-12));
        CHECK(b.col == doctest::Approx(a.col + dc).epsilon(1e-12));
    }
}

TEST_CASE("map_center examples") {
    auto mc = roi::map_center(Centroid{256, 300, false}, 512, 64, 256);
    CHECK(mc.row == 32);
    CHECK(mc.col == 38);  // 300 * 64 / 512 = 37.5, half away from zero
    CHECK(mc.crop == 32);

    auto id = roi::map_center(Centroid{100.2, 71.8, false}, 512, 512, 256);
    CHECK(id.row == 100);
    CHECK(id.col == 72);
    CHECK(id.crop == 256);

    auto small = roi::map_center(Centroid{64, 64, false}, 128, 16, 64);
    CHECK(small.row == 8);
    CHECK(small.col == 8);
    CHECK(small.crop == 8);
}

TEST_CASE("map_center row mapping is monotonic") {
    for (int n : {16, 64, 96}) {
        int prev = -1;
        for (int r = 0; r < 512; ++r) {
            auto mc = roi::map_center(Centroid{static_cast<double>(r), 0, false}, 512, n, 256);
            CHECK(mc.row >= prev);
            prev = mc.row;
        }
    }
}

TEST_CASE("crop_window examples and clamping") {
    auto w = roi::crop_window(32, 38, 32, 64, 64);
    CHECK(w == CropWindow{16, 22, 32, 32});

    auto clamped = roi::crop_window(5, 60, 32, 64, 64);
    CHECK(clamped == CropWindow{0, 32, 32, 32});

    auto full = roi::crop_window(32, 32, 64, 64, 64);
    CHECK(full == CropWindow{0, 0, 64, 64});

    CHECK_THROWS_AS(roi::crop_window(10, 10, 65, 64, 64), std::invalid_argument);
}

TEST_CASE("crop_window stays in frame for every center including corners") {
    for (int crop : {8, 31, 64}) {
        for (int r : {0, 1, 31, 62, 63}) {
            for (int c : {0, 1, 31, 62, 63}) {
                auto w = roi::crop_window(r, c, crop, 64, 64);
                CHECK(w.row0 >= 0);
                CHECK(w.col0 >= 0);
                CHECK(w.row0 + w.height <= 64);
                CHECK(w.col0 + w.width <= 64);
                CHECK(w.height == crop);
                CHECK(w.width == crop);
            }
        }
    }
}

TEST_CASE("scale consistency: activation crop covers the image crop within one cell") {
    const int N = 512, crop_base = 256;
    Rng rng(5);
    for (int rep = 0; rep < 30; ++rep) {
        const int r = static_cast<int>(rng.uniform_int(N));
        const int c = static_cast<int>(rng.uniform_int(N));
        MaskImage m(N, N);
        m.at(r, c) = 1;
        const Centroid cen = roi::centroid(m);
        const auto img_mc = roi::map_center(cen, N, N, crop_base);
        const CropWindow img_win = roi::crop_window(img_mc.row, img_mc.col, img_mc.crop, N, N);
        for (int n : {256, 128, 64, 32}) {
            const auto mc = roi::map_center(cen, N, n, crop_base);
            const CropWindow win = roi::crop_window(mc.row, mc.col, mc.crop, n, n);
            const double cell = static_cast<double>(N) / n;
            CHECK(std::abs(win.row0 * cell - img_win.row0) <= cell);
            CHECK(std::abs(win.col0 * cell - img_win.col0) <= cell);
            // the mapped center deviates from the exact real mapping by <= 0.5 cell
            CHECK(std::abs(mc.row - cen.row * n / N) <= 0.5);
            CHECK(std::abs(mc.col - cen.col * n / N) <= 0.5);
        }
    }
}

TEST_CASE("crop_mask extracts the window") {
    MaskImage m(4, 4);
    m.at(1, 1) = m.at(2, 2) = 1;
    auto c = roi::crop_mask(m, CropWindow{1, 1, 2, 2});
    CHECK(c.v == std::vector<std::uint8_t>{1, 0, 0, 1});
    CHECK_THROWS_AS((roi::crop_mask(m, CropWindow{3, 3, 2, 2})), std::invalid_argument);
}
