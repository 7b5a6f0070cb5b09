#include "fundus/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>

#include "fundus/errors.hpp"
#include "fundus/png_io.hpp"

namespace fs = std::filesystem;

namespace fundus::data {

namespace {

// src = (dst + 0.5) * scale - 0.5, clamped
float bilinear_at(const std::uint8_t* plane, int h, int w, int stride, double r, double c) {
    r = std::clamp(r, 0.0, h - 1.0);
    c = std::clamp(c, 0.0, w - 1.0);
    const int r0 = static_cast<int>(r), c0 = static_cast<int>(c);
    const int r1 = std::min(r0 + 1, h - 1), c1 = std::min(c0 + 1, w - 1);
    const double fr = r - r0, fc = c - c0;
    auto px = [&](int i, int j) { return static_cast<double>(plane[(i * w + j) * stride]); };
    return static_cast<float>(((1 - fr) * ((1 - fc) * px(r0, c0) + fc * px(r0, c1)) +
                               fr * ((1 - fc) * px(r1, c0) + fc * px(r1, c1))) /
                              255.0);
}

Tensor<float> resize_image(const png_io::ImageU8& img, int frame) {
    Tensor<float> out = Tensor<float>::zeros({3, frame, frame});
    const double sr = static_cast<double>(img.height) / frame;
    const double sc = static_cast<double>(img.width) / frame;
    for (int ch = 0; ch < 3; ++ch) {
        float* o = out.data->data() + static_cast<std::int64_t>(ch) * frame * frame;
        for (int i = 0; i < frame; ++i)
            for (int j = 0; j < frame; ++j)
                o[i * frame + j] = bilinear_at(img.pixels.data() + ch, img.height, img.width, 3,
                                               (i + 0.5) * sr - 0.5, (j + 0.5) * sc - 0.5);
    }
    return out;
}

MaskImage resize_mask(const std::vector<std::uint8_t>& px, int h, int w, int frame,
                      const std::string& path) {
    for (std::uint8_t v : px)
        if (v != 0 && v != 255)
            throw DataError("mask '" + path + "' is not binary: found gray value " +
                            std::to_string(static_cast<int>(v)));
    MaskImage m(frame, frame);
    const double sr = static_cast<double>(h) / frame;
    const double sc = static_cast<double>(w) / frame;
    for (int i = 0; i < frame; ++i)
        for (int j = 0; j < frame; ++j) {
            int si = std::clamp(static_cast<int>(std::floor((i + 0.5) * sr)), 0, h - 1);
            int sj = std::clamp(static_cast<int>(std::floor((j + 0.5) * sc)), 0, w - 1);
            m.at(i, j) = px[si * w + sj] == 255 ? 1 : 0;
        }
    return m;
}

std::map<std::string, fs::path> scan_pngs(const fs::path& dir) {
    std::map<std::string, fs::path> stems;  // sorted by stem
    if (!fs::is_directory(dir)) throw DataError("missing dataset directory '" + dir.string() + "'");
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png")
            stems[e.path().stem().string()] = e.path();
    return stems;
}

}  // namespace

Tensor<float> load_image_png(const std::string& path, int frame) {
    return resize_image(png_io::read_rgb8(path), frame);
}

std::vector<Sample> load_dataset(const std::string& root, int frame) {
    const fs::path base(root);
    auto images = scan_pngs(base / "images");
    auto discs = scan_pngs(base / "masks_disc");
    auto cups = scan_pngs(base / "masks_cup");

    if (images.empty()) {
        std::cerr << "warning: dataset '" << root << "' has no images\n";
        return {};
    }
    std::vector<Sample> out;
    for (const auto& [stem, img_path] : images) {
        auto d = discs.find(stem), c = cups.find(stem);
        if (d == discs.end() || c == cups.end())
            throw DataError("sample '" + stem + "' is missing its " +
                            (d == discs.end() ? "disc" : "cup") + " mask");
        Sample s;
        s.id = stem;
        s.image = resize_image(png_io::read_rgb8(img_path.string()), frame);
        int h = 0, w = 0;
        auto dp = png_io::read_gray8(d->second.string(), &w, &h);
        s.disc = resize_mask(dp, h, w, frame, d->second.string());
        auto cp = png_io::read_gray8(c->second.string(), &w, &h);
        s.cup = resize_mask(cp, h, w, frame, c->second.string());
        for (std::size_t e = 0; e < s.cup.v.size(); ++e)
            if (s.cup.v[e] && !s.disc.v[e]) {
                std::cerr << "warning: sample '" << stem << "': cup extends outside disc\n";
                break;
            }
        out.push_back(std::move(s));
    }
    for (const auto& [stem, p] : discs)
        if (!images.count(stem)) throw DataError("disc mask '" + stem + "' has no image");
    for (const auto& [stem, p] : cups)
        if (!images.count(stem)) throw DataError("cup mask '" + stem + "' has no image");
    return out;
}

void save_dataset(const std::string& dir, const std::vector<Sample>& samples) {
    const fs::path base(dir);
    fs::create_directories(base / "images");
    fs::create_directories(base / "masks_disc");
    fs::create_directories(base / "masks_cup");
    for (const Sample& s : samples) {
        const int n = s.image.shape[1];
        png_io::ImageU8 img;
        img.width = img.height = n;
        img.pixels.resize(static_cast<std::size_t>(3) * n * n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int ch = 0; ch < 3; ++ch)
                    img.pixels[(i * n + j) * 3 + ch] = static_cast<std::uint8_t>(
                        std::lround(std::clamp(s.image.at(ch, i, j), 0.0f, 1.0f) * 255.0f));
        png_io::write_rgb8((base / "images" / (s.id + ".png")).string(), img);

        auto write_mask = [&](const MaskImage& m, const fs::path& p) {
            std::vector<std::uint8_t> px(m.v.size());
            for (std::size_t e = 0; e < m.v.size(); ++e) px[e] = m.v[e] ? 255 : 0;
            png_io::write_gray8(p.string(), m.width, m.height, px);
        };
        write_mask(s.disc, base / "masks_disc" / (s.id + ".png"));
        write_mask(s.cup, base / "masks_cup" / (s.id + ".png"));
    }
}

std::pair<std::vector<Sample>, std::vector<Sample>> split(std::vector<Sample> samples,
                                                          double train_frac, std::uint64_t seed) {
    if (samples.size() < 2)
        throw DataError("split: need at least 2 samples, got " + std::to_string(samples.size()));
    Rng rng(derive_seed(seed, "split"));
    rng.shuffle(samples);
    const std::size_t n_train =
        static_cast<std::size_t>(std::ceil(train_frac * static_cast<double>(samples.size())));
    std::vector<Sample> train(samples.begin(), samples.begin() + n_train);
    std::vector<Sample> val(samples.begin() + n_train, samples.end());
    return {std::move(train), std::move(val)};
}

}  // namespace fundus::data
