#pragma once

#include <cstdint>
#include <vector>

namespace fundus {

// 2-D binary grid; entries are exactly 0 or 1.
struct MaskImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> v;  // row-major

    MaskImage() = default;
    MaskImage(int h, int w) : height(h), width(w), v(static_cast<std::size_t>(h) * w, 0) {}

    std::uint8_t at(int i, int j) const { return v[static_cast<std::size_t>(i) * width + j]; }
    std::uint8_t& at(int i, int j) { return v[static_cast<std::size_t>(i) * width + j]; }
    std::int64_t sum() const {
        std::int64_t s = 0;
        for (auto e : v) s += e;
        return s;
    }
    bool empty_mask() const { return sum() == 0; }
};

struct Centroid {
    double row = 0;
    double col = 0;
    bool degenerate = false;  // empty mask, frame-center fallback used
};

// Integer rectangle, fully inside its declared frame.
struct CropWindow {
    int row0 = 0;
    int col0 = 0;
    int height = 0;
    int width = 0;

    bool operator==(const CropWindow&) const = default;
};

namespace roi {

// 1 where value >= threshold. Input values are probabilities.
MaskImage binarize(const float* prob, int height, int width, double threshold = 0.5);
MaskImage binarize(const double* prob, int height, int width, double threshold = 0.5);

// Mass centroid of a binary mask. Sums are integer-exact; the division is the
// only floating-point step. Empty mask falls back to the frame center with
// the degenerate flag set.
Centroid centroid(const MaskImage& mask);

// Maps an image-space center (frame N) onto an activation map of spatial
// size n, and scales the image-space crop extent the same way. Rounding is
// half away from zero.
struct MappedCenter {
    int row = 0;
    int col = 0;
    int crop = 0;
};
MappedCenter map_center(const Centroid& center, int full_size, int act_size, int crop_base);

// crop x crop window centered at `center`, translated (never truncated) to
// fit inside the frame. Throws if crop exceeds the frame.
CropWindow crop_window(int center_row, int center_col, int crop, int frame_h, int frame_w);

// Plain mask crop (no gradients involved).
MaskImage crop_mask(const MaskImage& m, const CropWindow& win);

}  // namespace roi
}  // namespace fundus
