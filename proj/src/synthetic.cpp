#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fundus/data.hpp"

namespace fundus::data {

namespace {

struct Ellipse {
    double cy, cx;   // center; .5 offsets align rasterized extents
    double ar, ac;   // semi-axes
    double rho2(int i, int j) const {
        const double dr = (i - cy) / ar, dc = (j - cx) / ac;
        return dr * dr + dc * dc;
    }
    bool contains(int i, int j) const { return rho2(i, j) <= 1.0; }
};

// Center/semi-axis pair whose rasterized row span is exactly `extent` rows
// around integer `base`: odd extents sit on a pixel, even ones on a pixel
// boundary; the extra 0.25 keeps the boundary off exact integers.
void place_axis(int base, int extent, double* center, double* semi) {
    *center = base + (extent % 2 == 0 ? 0.5 : 0.0);
    *semi = (extent - 1) / 2.0 + 0.25;
}

void rasterize(const Ellipse& e, MaskImage& m) {
    for (int i = 0; i < m.height; ++i)
        for (int j = 0; j < m.width; ++j)
            if (e.contains(i, j)) m.at(i, j) = 1;
}

void set_px(Tensor<float>& img, int i, int j, float r, float g, float b) {
    const int n = img.shape[1];
    if (i < 0 || i >= n || j < 0 || j >= n) return;
    (*img.data)[0 * n * n + i * n + j] = r;
    (*img.data)[1 * n * n + i * n + j] = g;
    (*img.data)[2 * n * n + i * n + j] = b;
}

}  // namespace

std::vector<Sample> gen_synthetic(int count, std::uint64_t seed, int frame,
                                  std::vector<double>* drawn_cdrs) {
    if (frame < 32) throw std::invalid_argument("gen_synthetic: frame must be >= 32");
    if (count <= 0) throw std::invalid_argument("gen_synthetic: count must be positive");
    if (drawn_cdrs) drawn_cdrs->clear();

    std::vector<Sample> samples;
    samples.reserve(count);
    const int n = frame;

    for (int idx = 0; idx < count; ++idx) {
        Rng rng(derive_seed(seed, "synth", idx));
        Sample s;
        char name[32];
        std::snprintf(name, sizeof name, "synth_%04d", idx);
        s.id = name;
        s.image = Tensor<float>::zeros({3, n, n});
        s.disc = MaskImage(n, n);
        s.cup = MaskImage(n, n);

        // disc extents (diameter 0.2..0.4 N per axis) and drawn CDR
        const int disc_rows = std::max(8, static_cast<int>(std::lround(rng.uniform(0.2, 0.4) * n)));
        const int disc_cols = std::clamp(static_cast<int>(std::lround(disc_rows * rng.uniform(0.85, 1.15))),
                                         8, static_cast<int>(0.45 * n));
        // extents below 4 cannot rasterize their exact span (tip rows of a
        // narrow ellipse may miss every pixel center), so clamp there
        const double cdr_target = rng.uniform(0.3, 0.8);
        const int cup_rows = std::max(4, static_cast<int>(std::lround(cdr_target * disc_rows)));
        const int cup_cols = std::max(4, static_cast<int>(std::lround(cdr_target * disc_cols)));

        // deliberately off-center disc, fully inside the frame
        const int mr = disc_rows / 2 + 2, mc = disc_cols / 2 + 2;
        const int cy = mr + static_cast<int>(rng.uniform_int(n - 2 * mr));
        const int cx = mc + static_cast<int>(rng.uniform_int(n - 2 * mc));

        Ellipse disc;
        place_axis(cy, disc_rows, &disc.cy, &disc.ar);
        place_axis(cx, disc_cols, &disc.cx, &disc.ac);

        // cup concentric-ish: small offset, clamped so both axes stay inside
        const int lim_r = std::max(0, (disc_rows - cup_rows) / 4);
        const int lim_c = std::max(0, (disc_cols - cup_cols) / 4);
        const int dy = lim_r ? static_cast<int>(rng.uniform_int(2 * lim_r + 1)) - lim_r : 0;
        const int dx = lim_c ? static_cast<int>(rng.uniform_int(2 * lim_c + 1)) - lim_c : 0;
        Ellipse cup;
        place_axis(cy + dy, cup_rows, &cup.cy, &cup.ar);
        place_axis(cx + dx, cup_cols, &cup.cx, &cup.ac);

        rasterize(disc, s.disc);
        rasterize(cup, s.cup);
        bool contained = true;
        for (std::size_t e = 0; e < s.cup.v.size(); ++e)
            if (s.cup.v[e] && !s.disc.v[e]) contained = false;
        if (!contained) {  // fall back to concentric placement
            s.cup = MaskImage(n, n);
            place_axis(cy, cup_rows, &cup.cy, &cup.ar);
            place_axis(cx, cup_cols, &cup.cx, &cup.ac);
            rasterize(cup, s.cup);
        }
        if (drawn_cdrs)
            drawn_cdrs->push_back(static_cast<double>(cup_rows) / static_cast<double>(disc_rows));

        // glare highlights: cup-colored soft blobs in the background, so
        // telling the cup apart needs disc context, not just brightness
        struct Blob {
            double cy, cx, r, peak;
        };
        std::vector<Blob> blobs;
        const int blob_count = 1 + static_cast<int>(rng.uniform_int(3));
        const double disc_reach = 0.55 * (disc.ar + disc.ac);
        for (int bidx = 0; bidx < blob_count; ++bidx) {
            for (int attempt = 0; attempt < 50; ++attempt) {
                Blob b;
                b.r = rng.uniform(0.05, 0.12) * n;
                b.cy = rng.uniform(b.r, n - 1 - b.r);
                b.cx = rng.uniform(b.r, n - 1 - b.r);
                b.peak = rng.uniform(0.75, 1.0);
                const double dy = b.cy - disc.cy, dx = b.cx - disc.cx;
                if (std::sqrt(dy * dy + dx * dx) > disc_reach + b.r + 2) {
                    blobs.push_back(b);
                    break;
                }
            }
        }

        // background with radial falloff plus faint texture; the cup's outer
        // band fades into the disc color so its boundary is not a hard edge
        const double rmax = std::sqrt(2.0) * n / 2.0;
        const double cup_band = std::min(0.35, 2.5 / std::min(cup.ar, cup.ac));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double dr = i - (n - 1) / 2.0, dc = j - (n - 1) / 2.0;
                const double fall = 1.0 - 0.55 * (dr * dr + dc * dc) / (rmax * rmax);
                const double tex = rng.uniform(-0.015, 0.015);
                if (s.cup.at(i, j)) {
                    const double u =
                        std::clamp((1.0 - std::sqrt(cup.rho2(i, j))) / cup_band, 0.0, 1.0);
                    set_px(s.image, i, j, static_cast<float>(0.84 + u * 0.11),
                           static_cast<float>(0.62 + u * 0.24), static_cast<float>(0.30 + u * 0.25));
                } else if (s.disc.at(i, j)) {
                    set_px(s.image, i, j, 0.84f, 0.62f, 0.30f);
                } else {
                    double r = 0.40 * fall + tex, g = 0.20 * fall + tex, b = 0.09 * fall + tex;
                    for (const Blob& bl : blobs) {
                        const double d2 = (i - bl.cy) * (i - bl.cy) + (j - bl.cx) * (j - bl.cx);
                        if (d2 >= bl.r * bl.r) continue;
                        const double t = 1.0 - d2 / (bl.r * bl.r);
                        const double w = t * t * bl.peak;
                        r += (0.95 - r) * w;
                        g += (0.86 - g) * w;
                        b += (0.55 - b) * w;
                    }
                    set_px(s.image, i, j, static_cast<float>(r), static_cast<float>(g),
                           static_cast<float>(b));
                }
            }

        // vessel-like dark polylines wandering toward the disc
        const int vessels = 2 + static_cast<int>(rng.uniform_int(4));
        for (int v = 0; v < vessels; ++v) {
            double r = rng.uniform_int(2) ? 0.0 : n - 1.0;
            double c = rng.uniform(0, n - 1.0);
            if (rng.coin()) std::swap(r, c);
            double heading = std::atan2(disc.cy - r, disc.cx - c);
            const int steps = static_cast<int>(rng.uniform(0.4, 0.9) * n);
            const bool thick = rng.coin();
            for (int t = 0; t < steps; ++t) {
                heading += rng.uniform(-0.25, 0.25);
                r += std::sin(heading);
                c += std::cos(heading);
                const int ri = static_cast<int>(std::lround(r)), ci = static_cast<int>(std::lround(c));
                if (ri < 0 || ri >= n || ci < 0 || ci >= n) break;
                if (s.cup.at(ri, ci)) continue;  // keep the cup clean
                set_px(s.image, ri, ci, 0.38f, 0.10f, 0.06f);
                if (thick) set_px(s.image, ri, ci + 1, 0.40f, 0.11f, 0.07f);
            }
        }

        for (auto& v : *s.image.data) v = std::clamp(v, 0.0f, 1.0f);
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace fundus::data
