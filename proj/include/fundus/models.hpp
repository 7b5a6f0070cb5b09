#pragma once

#include <memory>
#include <stdexcept>
#include <string>

#include "fundus/metrics.hpp"
#include "fundus/nn.hpp"
#include "fundus/roi.hpp"

namespace fundus::models {

enum class Kind { psbn, wroim, twomodel };

inline const char* kind_name(Kind k) {
    switch (k) {
        case Kind::psbn: return "psbn";
        case Kind::wroim: return "wroim";
        case Kind::twomodel: return "twomodel";
    }
    return "?";
}

inline Kind kind_from(const std::string& s) {
    if (s == "psbn") return Kind::psbn;
    if (s == "wroim") return Kind::wroim;
    if (s == "twomodel") return Kind::twomodel;
    throw std::invalid_argument("unknown model kind '" + s + "' (psbn|wroim|twomodel)");
}

struct ModelConfig {
    Kind kind = Kind::wroim;
    int frame = 128;
    int crop_base = 64;       // image-space crop extent (frame/2 by default)
    int depth = 3;            // pool/upsample stages of the main nets
    int base_channels = 16;
    int convs_per_block = 2;
    int weak_base_channels = 8;  // WRoIM RoI-proposal net (always depth 1)

    void validate() const {
        if (frame <= 0 || frame % (1 << depth) != 0)
            throw std::invalid_argument("frame " + std::to_string(frame) +
                                        " must be divisible by 2^depth = " +
                                        std::to_string(1 << depth));
        if (crop_base <= 0 || crop_base > frame)
            throw std::invalid_argument("crop_base must be in (0, frame]");
        if (crop_base % (1 << depth) != 0)
            throw std::invalid_argument("crop_base " + std::to_string(crop_base) +
                                        " must be divisible by 2^depth = " +
                                        std::to_string(1 << depth) +
                                        " so cropped scales concat exactly");
        if (base_channels <= 0 || convs_per_block <= 0 || weak_base_channels <= 0 || depth <= 0)
            throw std::invalid_argument("channel/depth settings must be positive");
    }
};

template <typename T>
struct ForwardOut {
    Tensor<T> disc_prob;  // 1 x N x N
    Tensor<T> cup_prob;   // 1 x N x N
    CropWindow window;    // image-space crop (full frame for twomodel)
    bool degenerate = false;
    Tensor<T> weak_prob;  // WRoIM only
    Tensor<T> pred3;      // WRoIM only: 3 x crop x crop softmax
};

template <typename T>
class Network {
public:
    explicit Network(const ModelConfig& cfg, bool count_only)
        : cfg_(cfg), store_(count_only) {}
    virtual ~Network() = default;

    virtual ForwardOut<T> forward(Tape<T>* tape, const Tensor<T>& image) const = 0;
    virtual Tensor<T> loss(const ForwardOut<T>& out, const MaskImage& gt_disc,
                           const MaskImage& gt_cup, T eps, T roi_weight) const = 0;

    const ModelConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return store_; }
    const ParamStore<T>& params() const { return store_; }
    std::int64_t param_count() const { return store_.param_count(); }

protected:
    void check_image(const Tensor<T>& image) const {
        if (image.shape != std::vector<int>{3, cfg_.frame, cfg_.frame})
            throw std::invalid_argument("image must be 3x" + std::to_string(cfg_.frame) + "x" +
                                        std::to_string(cfg_.frame) + ", got " +
                                        shape_str(image.shape));
    }

    ModelConfig cfg_;
    ParamStore<T> store_;
};

namespace detail {

// Scale-n windows for the cropped skip path. With crop_base and frame both
// divisible by 2^depth the mapped extents halve exactly per scale.
inline CropWindow window_at_scale(const Centroid& cen, int frame, int act_size, int crop_base) {
    const roi::MappedCenter mc = roi::map_center(cen, frame, act_size, crop_base);
    return roi::crop_window(mc.row, mc.col, mc.crop, act_size, act_size);
}

template <typename T>
MaskImage not_mask(const MaskImage& m) {
    MaskImage out(m.height, m.width);
    for (std::size_t e = 0; e < m.v.size(); ++e) out.v[e] = m.v[e] ? 0 : 1;
    return out;
}

template <typename T>
MaskImage and_not(const MaskImage& a, const MaskImage& b) {  // a & !b
    MaskImage out(a.height, a.width);
    for (std::size_t e = 0; e < a.v.size(); ++e) out.v[e] = a.v[e] && !b.v[e] ? 1 : 0;
    return out;
}

}  // namespace detail

// Parameter-shared branched network: one encoder, a disc decoder over the
// full-frame activations, and a cup decoder over activations cropped around
// the disc-prediction centroid. The cup map is produced at crop_base^2 and
// zero-padded back to the frame.
template <typename T>
class PSBN : public Network<T> {
public:
    PSBN(const ModelConfig& cfg, Rng* rng, bool count_only = false)
        : Network<T>(cfg, count_only) {
        auto& s = this->store_;
        enc_ = nn::make_encoder(s, "enc", 3, cfg.base_channels, cfg.depth, cfg.convs_per_block, rng);
        disc_dec_ = nn::make_decoder(s, "disc_dec", cfg.base_channels, cfg.depth,
                                     cfg.convs_per_block, 1, rng);
        cup_dec_ = nn::make_decoder(s, "cup_dec", cfg.base_channels, cfg.depth,
                                    cfg.convs_per_block, 1, rng);
    }

    ForwardOut<T> forward(Tape<T>* tape, const Tensor<T>& image) const override {
        this->check_image(image);
        const ModelConfig& cfg = this->cfg_;
        auto enc_out = enc_.forward(tape, image);
        Tensor<T> disc_prob = ops::sigmoid(disc_dec_.forward(tape, enc_out.bottom, enc_out.skips));

        const MaskImage disc_mask = roi::binarize(disc_prob.ptr(), cfg.frame, cfg.frame);
        const Centroid cen = roi::centroid(disc_mask);

        std::vector<Tensor<T>> cropped_skips;
        for (int s = 0; s < cfg.depth; ++s) {
            const int n = cfg.frame >> s;
            cropped_skips.push_back(
                ops::crop_spatial(enc_out.skips[s], detail::window_at_scale(cen, cfg.frame, n, cfg.crop_base)));
        }
        const int nb = cfg.frame >> cfg.depth;
        Tensor<T> bottom_crop =
            ops::crop_spatial(enc_out.bottom, detail::window_at_scale(cen, cfg.frame, nb, cfg.crop_base));

        Tensor<T> cup_crop = ops::sigmoid(cup_dec_.forward(tape, bottom_crop, cropped_skips));

        const CropWindow win = detail::window_at_scale(cen, cfg.frame, cfg.frame, cfg.crop_base);
        ForwardOut<T> out;
        out.disc_prob = disc_prob;
        out.cup_prob = ops::pad_to_frame(cup_crop, win, cfg.frame, cfg.frame);
        out.window = win;
        out.degenerate = cen.degenerate;
        return out;
    }

    Tensor<T> loss(const ForwardOut<T>& out, const MaskImage& gt_disc, const MaskImage& gt_cup,
                   T eps, T) const override {
        return ops::add(metrics::log_dice_loss_graph(out.disc_prob, gt_disc, eps),
                        metrics::log_dice_loss_graph(out.cup_prob, gt_cup, eps));
    }

private:
    nn::Encoder<T> enc_;
    nn::Decoder<T> disc_dec_, cup_dec_;
};

// Weak-RoI model: a depth-1 U-Net weakly predicts the disc, the image is
// cropped crop_base^2 around its centroid, and the main U-Net emits a
// 3-channel (background, cup, rim) softmax over the crop.
template <typename T>
class WRoIM : public Network<T> {
public:
    WRoIM(const ModelConfig& cfg, Rng* rng, bool count_only = false)
        : Network<T>(cfg, count_only) {
        auto& s = this->store_;
        weak_enc_ = nn::make_encoder(s, "weak.enc", 3, cfg.weak_base_channels, 1,
                                     cfg.convs_per_block, rng);
        weak_dec_ = nn::make_decoder(s, "weak.dec", cfg.weak_base_channels, 1,
                                     cfg.convs_per_block, 1, rng);
        main_enc_ = nn::make_encoder(s, "main.enc", 3, cfg.base_channels, cfg.depth,
                                     cfg.convs_per_block, rng);
        main_dec_ = nn::make_decoder(s, "main.dec", cfg.base_channels, cfg.depth,
                                     cfg.convs_per_block, 3, rng);
    }

    ForwardOut<T> forward(Tape<T>* tape, const Tensor<T>& image) const override {
        this->check_image(image);
        const ModelConfig& cfg = this->cfg_;

        auto weak_out = weak_enc_.forward(tape, image);
        Tensor<T> weak_prob = ops::sigmoid(weak_dec_.forward(tape, weak_out.bottom, weak_out.skips));

        const MaskImage weak_mask = roi::binarize(weak_prob.ptr(), cfg.frame, cfg.frame);
        const Centroid cen = roi::centroid(weak_mask);
        const CropWindow win = detail::window_at_scale(cen, cfg.frame, cfg.frame, cfg.crop_base);

        Tensor<T> img_crop = ops::crop_spatial(image, win);
        auto main_out = main_enc_.forward(tape, img_crop);
        Tensor<T> pred3 = ops::softmax_channels(main_dec_.forward(tape, main_out.bottom, main_out.skips));

        Tensor<T> cup = ops::slice_channels(pred3, 1, 1);
        Tensor<T> disc = ops::add(cup, ops::slice_channels(pred3, 2, 1));

        ForwardOut<T> out;
        out.weak_prob = weak_prob;
        out.pred3 = pred3;
        out.window = win;
        out.degenerate = cen.degenerate;
        out.disc_prob = ops::pad_to_frame(disc, win, cfg.frame, cfg.frame);
        out.cup_prob = ops::pad_to_frame(cup, win, cfg.frame, cfg.frame);
        return out;
    }

    Tensor<T> loss(const ForwardOut<T>& out, const MaskImage& gt_disc, const MaskImage& gt_cup,
                   T eps, T roi_weight) const override {
        // Ground truth for the crop: background = !disc, cup, rim = disc & !cup.
        const MaskImage bg = detail::not_mask<T>(gt_disc);
        const MaskImage rim = detail::and_not<T>(gt_disc, gt_cup);
        const MaskImage bg_c = roi::crop_mask(bg, out.window);
        const MaskImage cup_c = roi::crop_mask(gt_cup, out.window);
        const MaskImage rim_c = roi::crop_mask(rim, out.window);

        Tensor<T> l_weak = metrics::log_dice_loss_graph(out.weak_prob, gt_disc, eps);
        Tensor<T> l_main =
            metrics::multi_channel_loss_graph<T>({&bg_c, &cup_c, &rim_c}, out.pred3, eps);
        return ops::add(ops::scale(l_weak, roi_weight), l_main);
    }

private:
    nn::Encoder<T> weak_enc_, main_enc_;
    nn::Decoder<T> weak_dec_, main_dec_;
};

// Baseline: two independent U-Nets on the full frame, no cropping anywhere.
template <typename T>
class TwoModel : public Network<T> {
public:
    TwoModel(const ModelConfig& cfg, Rng* rng, bool count_only = false)
        : Network<T>(cfg, count_only) {
        auto& s = this->store_;
        disc_enc_ = nn::make_encoder(s, "disc_net.enc", 3, cfg.base_channels, cfg.depth,
                                     cfg.convs_per_block, rng);
        disc_dec_ = nn::make_decoder(s, "disc_net.dec", cfg.base_channels, cfg.depth,
                                     cfg.convs_per_block, 1, rng);
        cup_enc_ = nn::make_encoder(s, "cup_net.enc", 3, cfg.base_channels, cfg.depth,
                                    cfg.convs_per_block, rng);
        cup_dec_ = nn::make_decoder(s, "cup_net.dec", cfg.base_channels, cfg.depth,
                                    cfg.convs_per_block, 1, rng);
    }

    ForwardOut<T> forward(Tape<T>* tape, const Tensor<T>& image) const override {
        this->check_image(image);
        auto de = disc_enc_.forward(tape, image);
        auto ce = cup_enc_.forward(tape, image);
        ForwardOut<T> out;
        out.disc_prob = ops::sigmoid(disc_dec_.forward(tape, de.bottom, de.skips));
        out.cup_prob = ops::sigmoid(cup_dec_.forward(tape, ce.bottom, ce.skips));
        out.window = CropWindow{0, 0, this->cfg_.frame, this->cfg_.frame};
        return out;
    }

    Tensor<T> loss(const ForwardOut<T>& out, const MaskImage& gt_disc, const MaskImage& gt_cup,
                   T eps, T) const override {
        return ops::add(metrics::log_dice_loss_graph(out.disc_prob, gt_disc, eps),
                        metrics::log_dice_loss_graph(out.cup_prob, gt_cup, eps));
    }

private:
    nn::Encoder<T> disc_enc_, cup_enc_;
    nn::Decoder<T> disc_dec_, cup_dec_;
};

template <typename T>
std::unique_ptr<Network<T>> build_network(const ModelConfig& cfg, std::uint64_t seed,
                                          bool count_only = false) {
    cfg.validate();
    Rng rng(derive_seed(seed, "init"));
    switch (cfg.kind) {
        case Kind::psbn: return std::make_unique<PSBN<T>>(cfg, &rng, count_only);
        case Kind::wroim: return std::make_unique<WRoIM<T>>(cfg, &rng, count_only);
        case Kind::twomodel: return std::make_unique<TwoModel<T>>(cfg, &rng, count_only);
    }
    throw std::logic_error("unreachable model kind");
}

// Table-2 style parameter accounting for a config, without allocating.
inline std::int64_t count_params(const ModelConfig& cfg, Kind kind) {
    ModelConfig c = cfg;
    c.kind = kind;
    return build_network<float>(c, 0, /*count_only=*/true)->param_count();
}

}  // namespace fundus::models
