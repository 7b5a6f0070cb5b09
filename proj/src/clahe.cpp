#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fundus/data.hpp"

namespace fundus::data {

namespace {

int quantize(float v) {
    int b = static_cast<int>(std::lround(static_cast<double>(v) * 255.0));
    return std::clamp(b, 0, 255);
}

}  // namespace

Tensor<float> clahe(const Tensor<float>& image, double clip, int tiles) {
    if (image.shape.size() != 3)
        throw std::invalid_argument("clahe: image must be CxHxW, got " + shape_str(image.shape));
    const int c = image.shape[0], h = image.shape[1], w = image.shape[2];
    if (tiles <= 0 || h % tiles != 0 || w % tiles != 0)
        throw std::invalid_argument("clahe: tiles=" + std::to_string(tiles) +
                                    " must divide the frame " + std::to_string(h) + "x" +
                                    std::to_string(w));
    const int th = h / tiles, tw = w / tiles;
    const double area = static_cast<double>(th) * tw;
    const double limit = clip * area / 256.0;

    Tensor<float> out = Tensor<float>::zeros(image.shape);
    // map[tile][bin] in [0,1]; midpoint CDF keeps a flat histogram at identity
    std::vector<double> maps(static_cast<std::size_t>(tiles) * tiles * 256);

    for (int ch = 0; ch < c; ++ch) {
        const float* plane = image.ptr() + static_cast<std::int64_t>(ch) * h * w;
        for (int ty = 0; ty < tiles; ++ty)
            for (int tx = 0; tx < tiles; ++tx) {
                double hist[256] = {};
                for (int i = 0; i < th; ++i)
                    for (int j = 0; j < tw; ++j)
                        hist[quantize(plane[(ty * th + i) * w + tx * tw + j])] += 1.0;
                double excess = 0;
                for (double& b : hist)
                    if (b > limit) {
                        excess += b - limit;
                        b = limit;
                    }
                const double bonus = excess / 256.0;
                double* map = &maps[(static_cast<std::size_t>(ty) * tiles + tx) * 256];
                double cdf = 0;
                for (int b = 0; b < 256; ++b) {
                    const double hb = hist[b] + bonus;
                    map[b] = (cdf + hb / 2.0) / area;
                    cdf += hb;
                }
            }

        float* oplane = out.data->data() + static_cast<std::int64_t>(ch) * h * w;
        for (int y = 0; y < h; ++y) {
            const double tyf = (y + 0.5) / th - 0.5;
            int ty0 = static_cast<int>(std::floor(tyf));
            const double fy = tyf - ty0;
            const int ty1 = std::clamp(ty0 + 1, 0, tiles - 1);
            ty0 = std::clamp(ty0, 0, tiles - 1);
            for (int x = 0; x < w; ++x) {
                const double txf = (x + 0.5) / tw - 0.5;
                int tx0 = static_cast<int>(std::floor(txf));
                const double fx = txf - tx0;
                const int tx1 = std::clamp(tx0 + 1, 0, tiles - 1);
                tx0 = std::clamp(tx0, 0, tiles - 1);
                const int b = quantize(plane[y * w + x]);
                auto m = [&](int ty, int tx) {
                    return maps[(static_cast<std::size_t>(ty) * tiles + tx) * 256 + b];
                };
                const double v = (1 - fy) * ((1 - fx) * m(ty0, tx0) + fx * m(ty0, tx1)) +
                                 fy * ((1 - fx) * m(ty1, tx0) + fx * m(ty1, tx1));
                oplane[y * w + x] = static_cast<float>(v);
            }
        }
    }
    return out;
}

}  // namespace fundus::data
