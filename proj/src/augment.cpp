#include <cmath>

#include "fundus/data.hpp"

namespace fundus::data {

namespace {

struct Affine {
    // maps output (row, col) back to input coordinates
    double m00, m01, m10, m11, tr, tc;

    void apply(double r, double c, double* ir, double* ic) const {
        *ir = m00 * r + m01 * c + tr;
        *ic = m10 * r + m11 * c + tc;
    }
};

float sample_bilinear(const float* plane, int h, int w, double r, double c) {
    const int r0 = static_cast<int>(std::floor(r));
    const int c0 = static_cast<int>(std::floor(c));
    const double fr = r - r0, fc = c - c0;
    auto px = [&](int i, int j) -> double {
        if (i < 0 || i >= h || j < 0 || j >= w) return 0.0;  // zero fill
        return plane[i * w + j];
    };
    return static_cast<float>((1 - fr) * ((1 - fc) * px(r0, c0) + fc * px(r0, c0 + 1)) +
                              fr * ((1 - fc) * px(r0 + 1, c0) + fc * px(r0 + 1, c0 + 1)));
}

std::uint8_t sample_nearest(const MaskImage& m, double r, double c) {
    const int i = static_cast<int>(std::lround(r));
    const int j = static_cast<int>(std::lround(c));
    if (i < 0 || i >= m.height || j < 0 || j >= m.width) return 0;
    return m.at(i, j);
}

}  // namespace

Sample apply_augment(const Sample& s, const AugmentDraw& d) {
    const int h = s.image.shape[1], w = s.image.shape[2];
    const double kr = (h - 1) / 2.0, kc = (w - 1) / 2.0;

    const double zoom = d.zoom;
    const double angle = d.angle_deg * M_PI / 180.0;
    const double shift_r = d.shift_r;
    const double shift_c = d.shift_c;
    const bool do_hflip = d.hflip;
    const bool do_vflip = d.vflip;

    // forward map is translate(rotate(zoom(flip(p)))) about the center; we
    // build its inverse and pull output pixels from input coordinates
    const double cosa = std::cos(-angle), sina = std::sin(-angle);
    Affine inv;
    {
        // p_in = Flip(K + R(-a) * ((p_out - t) - K) / z)
        const double iz = 1.0 / zoom;
        double a00 = cosa * iz, a01 = -sina * iz;
        double a10 = sina * iz, a11 = cosa * iz;
        double br = kr - a00 * (kr + shift_r) - a01 * (kc + shift_c);
        double bc = kc - a10 * (kr + shift_r) - a11 * (kc + shift_c);
        if (do_vflip) {  // row -> H-1-row after the affine pull
            a00 = -a00;
            a01 = -a01;
            br = (h - 1) - br;
        }
        if (do_hflip) {
            a10 = -a10;
            a11 = -a11;
            bc = (w - 1) - bc;
        }
        inv = Affine{a00, a01, a10, a11, br, bc};
    }

    Sample out;
    out.id = s.id;
    out.image = Tensor<float>::zeros(s.image.shape);
    out.disc = MaskImage(h, w);
    out.cup = MaskImage(h, w);

    for (int ch = 0; ch < 3; ++ch) {
        const float* in = s.image.ptr() + static_cast<std::int64_t>(ch) * h * w;
        float* o = out.image.data->data() + static_cast<std::int64_t>(ch) * h * w;
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                double ir, ic;
                inv.apply(r, c, &ir, &ic);
                o[r * w + c] = sample_bilinear(in, h, w, ir, ic);
            }
    }
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double ir, ic;
            inv.apply(r, c, &ir, &ic);
            out.disc.at(r, c) = sample_nearest(s.disc, ir, ic);
            out.cup.at(r, c) = sample_nearest(s.cup, ir, ic);
        }
    return out;
}

Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng) {
    const int h = s.image.shape[1], w = s.image.shape[2];
    // fixed draw order: zoom, angle, translate row/col, flip coins
    AugmentDraw d;
    d.zoom = rng.uniform(cfg.zoom_min, cfg.zoom_max);
    d.angle_deg = rng.uniform(cfg.rotate_min_deg, cfg.rotate_max_deg);
    d.shift_r = rng.uniform(cfg.translate_min_frac, cfg.translate_max_frac) * h;
    d.shift_c = rng.uniform(cfg.translate_min_frac, cfg.translate_max_frac) * w;
    d.hflip = rng.coin() && cfg.hflip;
    d.vflip = rng.coin() && cfg.vflip;
    return apply_augment(s, d);
}

}  // namespace fundus::data
