#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fundus/rng.hpp"
#include "fundus/roi.hpp"
#include "fundus/tensor.hpp"

namespace fundus::data {

// One fundus photograph with its ground-truth masks. Image is 3 x N x N in
// [0,1]; cup is contained in disc (enforced on synthetic data, warned on
// real data).
struct Sample {
    std::string id;
    Tensor<float> image;
    MaskImage disc;
    MaskImage cup;
};

struct AugmentConfig {
    double zoom_min = 0.8, zoom_max = 1.2;
    double rotate_min_deg = 0.0, rotate_max_deg = 50.0;
    double translate_min_frac = 0.0, translate_max_frac = 0.1;
    bool hflip = true;
    bool vflip = true;
    std::uint64_t seed = 0;  // base for the per-(sample, epoch) streams
};

// Dataset layout: root/images/*.png, root/masks_disc/*.png,
// root/masks_cup/*.png with shared stems, discovered sorted by stem. Images
// are resized bilinearly to frame x frame; masks nearest-neighbor and
// re-binarized.
std::vector<Sample> load_dataset(const std::string& root, int frame);

// Single 8-bit PNG, resized bilinearly, values scaled to [0,1].
Tensor<float> load_image_png(const std::string& path, int frame);

// Writes samples in the same layout (8-bit RGB images, {0,255} gray masks).
void save_dataset(const std::string& dir, const std::vector<Sample>& samples);

// Per-channel contrast-limited adaptive histogram equalization. `tiles` must
// divide both spatial dims. 256-bin tile histograms clipped at `clip` times
// the uniform height, excess redistributed uniformly, midpoint-CDF mapping,
// bilinear blend of the four nearest tile mappings.
Tensor<float> clahe(const Tensor<float>& image, double clip = 2.0, int tiles = 8);

// One sampled transform: zoom and rotation about the center, then
// translation, with optional flips.
struct AugmentDraw {
    double zoom = 1.0;
    double angle_deg = 0.0;
    double shift_r = 0.0, shift_c = 0.0;  // pixels
    bool hflip = false, vflip = false;
};

// Applies the same geometric map to the image (bilinear) and both masks
// (nearest, so they stay binary); out-of-frame regions are zero-filled.
Sample apply_augment(const Sample& s, const AugmentDraw& d);

// One random draw per transform per call, then apply_augment.
Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng);

// Seeded shuffle, first ceil(train_frac * n) samples to train.
std::pair<std::vector<Sample>, std::vector<Sample>> split(std::vector<Sample> samples,
                                                          double train_frac, std::uint64_t seed);

// Deterministic synthetic fundus generator: dark background with radial
// falloff, one bright off-center disc ellipse (diameter 0.2..0.4 N), a
// brighter cup ellipse strictly inside with vertical CDR drawn from
// [0.3, 0.8], and a few dark vessel polylines. Masks are the exact rendered
// ellipses. `drawn_cdrs`, when given, receives the rasterized cup/disc
// row-extent ratio per sample.
std::vector<Sample> gen_synthetic(int count, std::uint64_t seed, int frame,
                                  std::vector<double>* drawn_cdrs = nullptr);

}  // namespace fundus::data
