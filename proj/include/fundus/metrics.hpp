#pragma once

#include <array>
#include <string>
#include <vector>

#include "fundus/ops.hpp"
#include "fundus/roi.hpp"
#include "fundus/tensor.hpp"

namespace fundus::metrics {

struct MetricsConfig {
    double eps = 1e-5;
    double iou_threshold = 0.5;
};

// Floor inside the log of the dice loss; -log(dice) diverges as dice -> 0.
inline constexpr double kLossFloor = 1e-7;

// --- plain (evaluation) metrics ---------------------------------------------

// 2*sum(x*y) / (eps + sum(x^2) + sum(y^2)), squared-sum denominator. X is a
// binary ground-truth mask, Y a prediction in [0,1].
template <typename T>
double dice(const MaskImage& x, const Tensor<T>& y, double eps) {
    if (y.shape.size() != 3 || y.shape[0] != 1 || y.shape[1] != x.height || y.shape[2] != x.width)
        throw std::invalid_argument("dice: prediction " + shape_str(y.shape) + " does not match mask " +
                                    std::to_string(x.height) + "x" + std::to_string(x.width));
    double sxy = 0, syy = 0;
    const T* yv = y.ptr();
    const std::size_t n = x.v.size();
    for (std::size_t e = 0; e < n; ++e) {
        const double p = static_cast<double>(yv[e]);
        if (x.v[e]) sxy += p;
        syy += p * p;
    }
    const double sxx = static_cast<double>(x.sum());
    return 2.0 * sxy / (eps + sxx + syy);
}

template <typename T>
double log_dice_loss(const MaskImage& x, const Tensor<T>& y, double eps) {
    return -std::log(std::max(dice(x, y, eps), kLossFloor));
}

// Binary dice without the epsilon guard (both masks binary).
double binary_dice(const MaskImage& x, const MaskImage& y);

// |X n Y| / |X u Y|; 1 when both masks are empty.
double iou(const MaskImage& x, const MaskImage& y);

// Per-pixel argmax over (background, cup, rim) channels; disc = cup u rim.
// Ties pick the lowest channel.
template <typename T>
std::pair<MaskImage, MaskImage> masks_from_channels(const Tensor<T>& pred3) {
    if (pred3.shape.size() != 3 || pred3.shape[0] != 3)
        throw std::invalid_argument("masks_from_channels: expected 3xHxW, got " + shape_str(pred3.shape));
    const int h = pred3.shape[1], w = pred3.shape[2];
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    MaskImage disc(h, w), cup(h, w);
    const T* v = pred3.ptr();
    for (std::int64_t p = 0; p < hw; ++p) {
        int arg = 0;
        T best = v[p];
        for (int c = 1; c < 3; ++c)
            if (v[c * hw + p] > best) {
                best = v[c * hw + p];
                arg = c;
            }
        cup.v[p] = arg == 1 ? 1 : 0;
        disc.v[p] = arg >= 1 ? 1 : 0;
    }
    return {disc, cup};
}

// Vertical cup-to-disc diameter ratio: inclusive row extents. Empty cup gives
// 0; empty disc is undefined and throws.
double vertical_cdr(const MaskImage& disc, const MaskImage& cup);

// --- differentiable loss graphs ----------------------------------------------

template <typename T>
Tensor<T> dice_graph(const Tensor<T>& pred, const MaskImage& gt, T eps) {
    if (pred.shape.size() != 3 || pred.shape[1] != gt.height || pred.shape[2] != gt.width)
        throw std::invalid_argument("dice_graph: prediction " + shape_str(pred.shape) +
                                    " does not match mask " + std::to_string(gt.height) + "x" +
                                    std::to_string(gt.width));
    std::vector<T> gv(gt.v.begin(), gt.v.end());
    Tensor<T> gt_t = Tensor<T>::from(pred.shape, std::move(gv));
    Tensor<T> sxy = ops::sum(ops::mul(pred, gt_t));
    Tensor<T> syy = ops::sum(ops::mul(pred, pred));
    const T sxx = static_cast<T>(gt.sum());
    Tensor<T> denom = ops::add_const(syy, static_cast<T>(eps + sxx));
    return ops::div(ops::scale(sxy, T(2)), denom);
}

template <typename T>
Tensor<T> log_dice_loss_graph(const Tensor<T>& pred, const MaskImage& gt, T eps) {
    return ops::neg_log_floored(dice_graph(pred, gt, eps), static_cast<T>(kLossFloor));
}

// Mean of the three per-channel log-dice losses. gt3 must partition the
// frame: channels pairwise disjoint and covering every pixel.
template <typename T>
Tensor<T> multi_channel_loss_graph(const std::array<const MaskImage*, 3>& gt3,
                                   const Tensor<T>& pred3, T eps) {
    if (pred3.shape.size() != 3 || pred3.shape[0] != 3)
        throw std::invalid_argument("multi_channel_loss: prediction must be 3xHxW, got " +
                                    shape_str(pred3.shape));
    const MaskImage& a = *gt3[0];
    for (const MaskImage* m : gt3)
        if (m->height != a.height || m->width != a.width)
            throw std::invalid_argument("multi_channel_loss: ground-truth mask sizes differ");
    for (std::size_t e = 0; e < a.v.size(); ++e)
        if (gt3[0]->v[e] + gt3[1]->v[e] + gt3[2]->v[e] != 1)
            throw std::invalid_argument(
                "multi_channel_loss: ground-truth channels are not a partition at pixel " +
                std::to_string(e));
    Tensor<T> total;
    for (int c = 0; c < 3; ++c) {
        Tensor<T> l = log_dice_loss_graph(ops::slice_channels(pred3, c, 1), *gt3[c], eps);
        total = c == 0 ? l : ops::add(total, l);
    }
    return ops::scale(total, T(1) / T(3));
}

// --- reporting ----------------------------------------------------------------

struct EvalRow {
    std::string id;
    double dice_disc = 0, iou_disc = 0, dice_cup = 0, iou_cup = 0, cdr = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    EvalRow mean;                  // arithmetic mean over samples
    double images_per_sec = 0;     // forward-only wall clock
    double dice_disc_binary = 0;   // binarized-dice means, verbose output only
    double dice_cup_binary = 0;

    std::string to_csv() const;
    static EvalReport from_csv(const std::string& text);
};

}  // namespace fundus::metrics
