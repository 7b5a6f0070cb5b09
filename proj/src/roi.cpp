#include "fundus/roi.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fundus::roi {

namespace {

template <typename T>
MaskImage binarize_impl(const T* prob, int height, int width, double threshold) {
    MaskImage m(height, width);
    const std::size_t n = static_cast<std::size_t>(height) * width;
    for (std::size_t e = 0; e < n; ++e)
        m.v[e] = static_cast<double>(prob[e]) >= threshold ? 1 : 0;
    return m;
}

}  // namespace

MaskImage binarize(const float* prob, int height, int width, double threshold) {
    return binarize_impl(prob, height, width, threshold);
}

MaskImage binarize(const double* prob, int height, int width, double threshold) {
    return binarize_impl(prob, height, width, threshold);
}

Centroid centroid(const MaskImage& mask) {
    std::int64_t total = 0, row_sum = 0, col_sum = 0;
    for (int i = 0; i < mask.height; ++i) {
        std::int64_t row_mass = 0;
        for (int j = 0; j < mask.width; ++j) {
            const std::int64_t m = mask.at(i, j);
            row_mass += m;
            col_sum += m * j;
        }
        total += row_mass;
        row_sum += row_mass * i;
    }
    Centroid c;
    if (total == 0) {
        c.row = (mask.height - 1) / 2.0;
        c.col = (mask.width - 1) / 2.0;
        c.degenerate = true;
        return c;
    }
    c.row = static_cast<double>(row_sum) / static_cast<double>(total);
    c.col = static_cast<double>(col_sum) / static_cast<double>(total);
    return c;
}

MappedCenter map_center(const Centroid& center, int full_size, int act_size, int crop_base) {
    if (full_size <= 0 || act_size <= 0 || act_size > full_size)
        throw std::invalid_argument("map_center: need 0 < n <= N, got n=" + std::to_string(act_size) +
                                    " N=" + std::to_string(full_size));
    const double ratio = static_cast<double>(act_size) / static_cast<double>(full_size);
    MappedCenter mc;
    mc.row = static_cast<int>(std::round(center.row * ratio));
    mc.col = static_cast<int>(std::round(center.col * ratio));
    mc.crop = static_cast<int>(std::round(crop_base * ratio));
    return mc;
}

MaskImage crop_mask(const MaskImage& m, const CropWindow& win) {
    if (win.row0 < 0 || win.col0 < 0 || win.row0 + win.height > m.height ||
        win.col0 + win.width > m.width)
        throw std::invalid_argument("crop_mask: window out of bounds");
    MaskImage out(win.height, win.width);
    for (int i = 0; i < win.height; ++i)
        for (int j = 0; j < win.width; ++j) out.at(i, j) = m.at(win.row0 + i, win.col0 + j);
    return out;
}

CropWindow crop_window(int center_row, int center_col, int crop, int frame_h, int frame_w) {
    if (crop <= 0 || crop > frame_h || crop > frame_w)
        throw std::invalid_argument("crop_window: crop " + std::to_string(crop) +
                                    " does not fit frame " + std::to_string(frame_h) + "x" +
                                    std::to_string(frame_w));
    auto clamp = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
    CropWindow w;
    w.row0 = clamp(center_row - crop / 2, 0, frame_h - crop);
    w.col0 = clamp(center_col - crop / 2, 0, frame_w - crop);
    w.height = crop;
    w.width = crop;
    return w;
}

}  // namespace fundus::roi
