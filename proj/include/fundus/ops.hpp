#pragma once

#include <cmath>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "fundus/kernels.hpp"
#include "fundus/roi.hpp"
#include "fundus/tape.hpp"
#include "fundus/tensor.hpp"

// Differentiable operations. Every op validates shapes, computes values, and
// (when an input is on a tape) records a node whose backward accumulates into
// the input gradients. Ops on constant tensors stay constant, so inference
// runs through the same code without a tape.

namespace fundus::ops {

namespace detail {

template <typename T>
Tape<T>* merge_tape(std::initializer_list<const Tensor<T>*> inputs) {
    Tape<T>* tape = nullptr;
    for (const Tensor<T>* t : inputs) {
        if (t->node < 0) continue;
        if (!tape)
            tape = t->tape;
        else if (tape != t->tape)
            throw std::invalid_argument("op inputs are recorded on different tapes");
    }
    return tape;
}

// Records `out` on the tape. `make_back(id)` builds the backward closure once
// the node id is known.
template <typename T, typename F>
void record(Tensor<T>& out, Tape<T>* tape, F&& make_back) {
    if (!tape) return;
    out.tape = tape;
    out.node = tape->add_node(out.numel(), nullptr);
    tape->set_back(out.node, make_back(out.node));
}

template <typename T>
void accumulate(std::vector<T>& dst, const std::vector<T>& src) {
    for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace detail

// --- convolution -----------------------------------------------------------

// Cross-correlation with zero same-padding. x: Cin x H x W, w: Cout x Cin x
// k x k (k odd), b: Cout.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    detail::require(x.shape.size() == 3, "conv2d: input must be CxHxW, got " + shape_str(x.shape));
    detail::require(w.shape.size() == 4, "conv2d: weights must be Cout x Cin x k x k, got " + shape_str(w.shape));
    const int cout = w.shape[0], cin = w.shape[1], k = w.shape[2];
    detail::require(w.shape[3] == k, "conv2d: kernel must be square, got " + shape_str(w.shape));
    detail::require(k % 2 == 1, "conv2d: kernel size " + std::to_string(k) + " must be odd for same-padding");
    detail::require(x.shape[0] == cin, "conv2d: input channels " + std::to_string(x.shape[0]) +
                                           " != weight in-channels " + std::to_string(cin));
    detail::require(b.shape == std::vector<int>{cout}, "conv2d: bias must be (" + std::to_string(cout) +
                                                           "), got " + shape_str(b.shape));
    const int h = x.shape[1], wd = x.shape[2];

    Tensor<T> out = Tensor<T>::zeros({cout, h, wd});
    kernels::conv2d_forward(x.ptr(), cin, h, wd, w.ptr(), cout, k, b.ptr(), out.data->data());

    Tape<T>* tape = detail::merge_tape<T>({&x, &w, &b});
    detail::record(out, tape, [=](int id) {
        return [=](Tape<T>& t) {
            const std::vector<T>& go = t.grad(id);
            if (x.node >= 0)
                kernels::conv2d_backward_input(go.data(), w.ptr(), cin, h, wd, cout, k,
                                               t.grad(x.node).data());
            if (w.node >= 0 || b.node >= 0)
                kernels::conv2d_backward_params(go.data(), x.ptr(), cin, h, wd, cout, k,
                                                w.node >= 0 ? t.grad(w.node).data() : nullptr,
                                                b.node >= 0 ? t.grad(b.node).data() : nullptr);
        };
    });
    return out;
}

// --- elementwise ------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::zeros(x.shape);
    const std::size_t n = x.data->size();
    for (std::size_t e = 0; e < n; ++e) (*out.data)[e] = (*x.data)[e] > T(0) ? (*x.data)[e] : T(0);
    detail::record(out, detail::merge_tape<T>({&x}), [=](int id) {
        return [=](Tape<T>& t) {
            const auto& go = t.grad(id);
            auto& gx = t.grad(x.node);
            for (std::size_t e = 0; e < go.size(); ++e)
                if ((*x.data)[e] > T(0)) gx[e] += go[e];
        };
    });
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::zeros(x.shape);
    const std::size_t n = x.data->size();
    for (std::size_t e = 0; e < n; ++e)
        (*out.data)[e] = T(1) / (T(1) + std::exp(-(*x.data)[e]));
    auto y = out.data;  // y(1-y) backward uses forward values
    detail::record(out, detail::merge_tape<T>({&x}), [=](int id) {
        return [=](Tape<T>& t) {
            const auto& go = t.grad(id);
            auto& gx = t.grad(x.node);
            for (std::size_t e = 0; e < go.size(); ++e) gx[e] += go[e] * (*y)[e] * (T(1) - (*y)[e]);
        };
    });
    return out;
}

// Per-pixel softmax across channels of a CxHxW tensor.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
    detail::require(x.shape.size() == 3 && x.shape[0] >= 2,
                    "softmax_channels: need CxHxW with C >= 2, got " + shape_str(x.shape));
    const int c = x.shape[0];
    const std::int64_t hw = static_cast<std::int64_t>(x.shape[1]) * x.shape[2];
    Tensor<T> out = Tensor<T>::zeros(x.shape);
    const T* xv = x.ptr();
    T* yv = out.data->data();
    for (std::int64_t p = 0; p < hw; ++p) {
        T mx = xv[p];
        for (int ch = 1; ch < c; ++ch) mx = std::max(mx, xv[ch * hw + p]);
        T z = 0;
        for (int ch = 0; ch < c; ++ch) {
            const T e = std::exp(xv[ch * hw + p] - mx);
            yv[ch * hw + p] = e;
            z += e;
        }
        for (int ch = 0; ch < c; ++ch) yv[ch * hw + p] /= z;
    }
    auto y = out.data;
    detail::record(out, detail::merge_tape<T>({&x}), [=](int id) {
        return [=](Tape<T>& t) {
            const auto& go = t.grad(id);
            auto& gx = t.grad(x.node);
            for (std::int64_t p = 0; p < hw; ++p) {
                T dot = 0;
                for (int ch = 0; ch < c; ++ch) dot += go[ch * hw + p] * (*y)[ch * hw + p];
                for (int ch = 0; ch < c; ++ch)
                    gx[ch * hw + p] += (*y)[ch * hw + p] * (go[ch * hw + p] - dot);
            }
        };
    });
    return out;
}

// --- spatial ----------------------------------------------------------------

// 2x2 non-overlapping max; gradient routes to the argmax (first in row-major
// order on ties).
template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x) {
    detail::require(x.shape.size() == 3, "maxpool2: input must be CxHxW, got " + shape_str(x.shape));
    const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
    detail::require(h % 2 == 0 && w % 2 == 0,
                    "maxpool2: H and W must be even, got " + shape_str(x.shape));
    const int oh = h / 2, ow = w / 2;
    Tensor<T> out = Tensor<T>::zeros({c, oh, ow});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out.data->size());
    const T* xv = x.ptr();
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                std::int64_t best = (static_cast<std::int64_t>(ch) * h + 2 * i) * w + 2 * j;
                T bv = xv[best];
                for (int di = 0; di < 2; ++di)
                    for (int dj = 0; dj < 2; ++dj) {
                        const std::int64_t e = (static_cast<std::int64_t>(ch) * h + 2 * i + di) * w + 2 * j + dj;
                        if (xv[e] > bv) {
                            bv = xv[e];
                            best = e;
                        }
                    }
                const std::int64_t o = (static_cast<std::int64_t>(ch) * oh + i) * ow + j;
                (*out.data)[o] = bv;
                (*argmax)[o] = best;
            }
    detail::record(out, detail::merge_tape<T>({&x}), [=](int id) {
        return [=](Tape<T>& t) {
            const auto& go = t.grad(id);
            auto& gx = t.grad(x.node);
            for (std::size_t o = 0; o < go.size(); ++o) gx[(*argmax)[o]] += go[o];
        };
    });
    return out;
}

// Nearest-neighbor 2x upsampling; each input cell feeds its 4 replicas.
template <typename T>
Tensor<T> upsample2(const Tensor<T>& x) {
    detail::require(x.shape.size() == 3, "upsample2: input must be CxHxW, got " + shape_str(x.shape));
    const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
    Tensor<T> out = Tensor<T>::zeros({c, 2 * h, 2 * w});
    const T* xv = x.ptr();
    T* yv = out.data->data();
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < 2 * h; ++i) {
            const T* irow = xv + (static_cast<std::int64_t>(ch) * h + i / 2) * w;
            T* orow = yv + (static_cast<std::int64_t>(ch) * 2 * h + i) * 2 * w;
            for (int j = 0; j < 2 * w; ++j) orow[j] = irow[j / 2];
        }
    detail::record(out, detail::merge_tape<T>({&x}), [=](int id) {
        return [=](Tape<T>& t) {
            const auto& go = t.grad(id);
            auto& gx = t.grad(x.node);
            for (int ch = 0; ch < c; ++ch)
                for (int i = 0; i < 2 * h; ++i)
                    for (int j = 0; j < 2 * w; ++j)
                        gx[(static_cast<std::int64_t>(ch) * h + i / 2) * w + j / 2] +=
                            go[(static_cast<std::int64_t>(ch) * 2 * h + i) * 2 * w + j];
        };
    });
    return out;
}

// Channel stacking, a first; gradient splits back exactly.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.shape.size() == 3 && b.shape.size() == 3,
                    "concat_channels: inputs must be CxHxW");
    detail::require(a.shape[1] == b.shape[1] && a.shape[2] == b.shape[2],
                    "concat_channels: spatial dims differ, " + shape_str(a.shape) + " vs " +
                        shape_str(b.shape));
    const int ca = a.shape[0], cb = b.shape[0];
    const std::int64_t hw = static_cast<std::int64_t>(a.shape[1]) * a.shape[2];
    Tensor<T> out = Tensor<T>::zeros({ca + cb, a.shape[1], a.shape[2]});
    std::copy(a.data->begin(), a.data->end(), out.data->begin());
    std::copy(b.data->begin(), b.data->end(), out.data->begin() + ca * hw);
    detail::record(out, detail::merge_tape<T>({&a, &b}), [=](int id) {
        return [=](Tape<T>& t) {
            const auto& go = t.grad(id);
            if (a.node >= 0) {
                auto& ga = t.grad(a.node);
                for (std::int64_t e = 0; e < ca * hw; ++e) ga[e] += go[e];
            }
            if (b.node >= 0) {
                auto& gb = t.grad(b.node);
                for (std::int64_t e = 0; e < cb * hw; ++e) gb[e] += go[ca * hw + e];
            }
        };
    });
    return out;
}

// Extracts channels [c0, c0+count) of a CxHxW tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int c0, int count) {
    detail::require(x.shape.size() == 3, "slice_channels: input must be CxHxW");
    detail::require(c0 >= 0 && count > 0 && c0 + count <= x.shape[0],
                    "slice_channels: range [" + std::to_string(c0) + ", " +
                        std::to_string(c0 + count) + ") outside " + std::to_string(x.shape[0]) +
                        " channels");
    const std::int64_t hw = static_cast<std::int64_t>(x.shape[1]) * x.shape[2];
    Tensor<T> out = Tensor<T>::zeros({count, x.shape[1], x.shape[2]});
    std::copy(x.data->begin() + c0 * hw, x.data->begin() + (c0 + count) * hw, out.data->begin());
    detail::record(out, detail::merge_tape<T>({&x}), [=](int id) {
        return [=](Tape<T>& t) {
            const auto& go = t.grad(id);
            auto& gx = t.grad(x.node);
            for (std::int64_t e = 0; e < count * hw; ++e) gx[c0 * hw + e] += go[e];
        };
    });
    return out;
}

// Spatial crop. Values pass through; the window itself carries no gradient.
template <typename T>
Tensor<T> crop_spatial(const Tensor<T>& x, const CropWindow& win) {
    detail::require(x.shape.size() == 3, "crop_spatial: input must be CxHxW");
    const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
    detail::require(win.row0 >= 0 && win.col0 >= 0 && win.height > 0 && win.width > 0 &&
                        win.row0 + win.height <= h && win.col0 + win.width <= w,
                    "crop_spatial: window out of bounds for frame " + shape_str(x.shape));
    Tensor<T> out = Tensor<T>::zeros({c, win.height, win.width});
    const T* xv = x.ptr();
    T* yv = out.data->data();
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < win.height; ++i) {
            const T* irow = xv + (static_cast<std::int64_t>(ch) * h + win.row0 + i) * w + win.col0;
            T* orow = yv + (static_cast<std::int64_t>(ch) * win.height + i) * win.width;
            for (int j = 0; j < win.width; ++j) orow[j] = irow[j];
        }
    detail::record(out, detail::merge_tape<T>({&x}), [=](int id) {
        return [=](Tape<T>& t) {
            const auto& go = t.grad(id);
            auto& gx = t.grad(x.node);
            for (int ch = 0; ch < c; ++ch)
                for (int i = 0; i < win.height; ++i)
                    for (int j = 0; j < win.width; ++j)
                        gx[(static_cast<std::int64_t>(ch) * h + win.row0 + i) * w + win.col0 + j] +=
                            go[(static_cast<std::int64_t>(ch) * win.height + i) * win.width + j];
        };
    });
    return out;
}

// Places x at `win` inside a zeroed H x W frame; exact inverse of
// crop_spatial on the window.
template <typename T>
Tensor<T> pad_to_frame(const Tensor<T>& x, const CropWindow& win, int frame_h, int frame_w) {
    detail::require(x.shape.size() == 3, "pad_to_frame: input must be CxHxW");
    detail::require(x.shape[1] == win.height && x.shape[2] == win.width,
                    "pad_to_frame: input " + shape_str(x.shape) + " does not match window extent " +
                        std::to_string(win.height) + "x" + std::to_string(win.width));
    detail::require(win.row0 >= 0 && win.col0 >= 0 && win.row0 + win.height <= frame_h &&
                        win.col0 + win.width <= frame_w,
                    "pad_to_frame: window outside frame");
    const int c = x.shape[0];
    Tensor<T> out = Tensor<T>::zeros({c, frame_h, frame_w});
    const T* xv = x.ptr();
    T* yv = out.data->data();
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < win.height; ++i) {
            const T* irow = xv + (static_cast<std::int64_t>(ch) * win.height + i) * win.width;
            T* orow = yv + (static_cast<std::int64_t>(ch) * frame_h + win.row0 + i) * frame_w + win.col0;
            for (int j = 0; j < win.width; ++j) orow[j] = irow[j];
        }
    detail::record(out, detail::merge_tape<T>({&x}), [=](int id) {
        return [=](Tape<T>& t) {
            const auto& go = t.grad(id);
            auto& gx = t.grad(x.node);
            for (int ch = 0; ch < c; ++ch)
                for (int i = 0; i < win.height; ++i)
                    for (int j = 0; j < win.width; ++j)
                        gx[(static_cast<std::int64_t>(ch) * win.height + i) * win.width + j] +=
                            go[(static_cast<std::int64_t>(ch) * frame_h + win.row0 + i) * frame_w +
                               win.col0 + j];
        };
    });
    return out;
}

// --- arithmetic and reductions ----------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.shape == b.shape, "add: shapes differ, " + shape_str(a.shape) + " vs " +
                                            shape_str(b.shape));
    Tensor<T> out = Tensor<T>::zeros(a.shape);
    for (std::size_t e = 0; e < out.data->size(); ++e) (*out.data)[e] = (*a.data)[e] + (*b.data)[e];
    detail::record(out, detail::merge_tape<T>({&a, &b}), [=](int id) {
        return [=](Tape<T>& t) {
            const auto& go = t.grad(id);
            if (a.node >= 0) detail::accumulate(t.grad(a.node), go);
            if (b.node >= 0) detail::accumulate(t.grad(b.node), go);
        };
    });
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.shape == b.shape, "mul: shapes differ, " + shape_str(a.shape) + " vs " +
                                            shape_str(b.shape));
    Tensor<T> out = Tensor<T>::zeros(a.shape);
    for (std::size_t e = 0; e < out.data->size(); ++e) (*out.data)[e] = (*a.data)[e] * (*b.data)[e];
    detail::record(out, detail::merge_tape<T>({&a, &b}), [=](int id) {
        return [=](Tape<T>& t) {
            const auto& go = t.grad(id);
            if (a.node >= 0) {
                auto& ga = t.grad(a.node);
                for (std::size_t e = 0; e < go.size(); ++e) ga[e] += go[e] * (*b.data)[e];
            }
            if (b.node >= 0) {
                auto& gb = t.grad(b.node);
                for (std::size_t e = 0; e < go.size(); ++e) gb[e] += go[e] * (*a.data)[e];
            }
        };
    });
    return out;
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.shape == b.shape, "div: shapes differ, " + shape_str(a.shape) + " vs " +
                                            shape_str(b.shape));
    Tensor<T> out = Tensor<T>::zeros(a.shape);
    for (std::size_t e = 0; e < out.data->size(); ++e) (*out.data)[e] = (*a.data)[e] / (*b.data)[e];
    detail::record(out, detail::merge_tape<T>({&a, &b}), [=](int id) {
        return [=](Tape<T>& t) {
            const auto& go = t.grad(id);
            if (a.node >= 0) {
                auto& ga = t.grad(a.node);
                for (std::size_t e = 0; e < go.size(); ++e) ga[e] += go[e] / (*b.data)[e];
            }
            if (b.node >= 0) {
                auto& gb = t.grad(b.node);
                for (std::size_t e = 0; e < go.size(); ++e)
                    gb[e] -= go[e] * (*a.data)[e] / ((*b.data)[e] * (*b.data)[e]);
            }
        };
    });
    return out;
}

// Full reduction to a scalar. Accumulates in double regardless of T.
template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    double s = 0;
    for (T v : *x.data) s += static_cast<double>(v);
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(s));
    detail::record(out, detail::merge_tape<T>({&x}), [=](int id) {
        return [=](Tape<T>& t) {
            const T g = t.grad(id)[0];
            auto& gx = t.grad(x.node);
            for (auto& e : gx) e += g;
        };
    });
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
    Tensor<T> out = Tensor<T>::zeros(x.shape);
    for (std::size_t e = 0; e < out.data->size(); ++e) (*out.data)[e] = (*x.data)[e] * c;
    detail::record(out, detail::merge_tape<T>({&x}), [=](int id) {
        return [=](Tape<T>& t) {
            const auto& go = t.grad(id);
            auto& gx = t.grad(x.node);
            for (std::size_t e = 0; e < go.size(); ++e) gx[e] += go[e] * c;
        };
    });
    return out;
}

template <typename T>
Tensor<T> add_const(const Tensor<T>& x, T c) {
    Tensor<T> out = Tensor<T>::zeros(x.shape);
    for (std::size_t e = 0; e < out.data->size(); ++e) (*out.data)[e] = (*x.data)[e] + c;
    detail::record(out, detail::merge_tape<T>({&x}), [=](int id) {
        return [=](Tape<T>& t) {
            if (x.node >= 0) detail::accumulate(t.grad(x.node), t.grad(id));
        };
    });
    return out;
}

// y = -log(max(x, floor)). Below the floor the output is constant, so the
// gradient there is zero.
template <typename T>
Tensor<T> neg_log_floored(const Tensor<T>& x, T floor_value) {
    Tensor<T> out = Tensor<T>::zeros(x.shape);
    for (std::size_t e = 0; e < out.data->size(); ++e)
        (*out.data)[e] = -std::log(std::max((*x.data)[e], floor_value));
    detail::record(out, detail::merge_tape<T>({&x}), [=](int id) {
        return [=](Tape<T>& t) {
            const auto& go = t.grad(id);
            auto& gx = t.grad(x.node);
            for (std::size_t e = 0; e < go.size(); ++e)
                if ((*x.data)[e] > floor_value) gx[e] -= go[e] / (*x.data)[e];
        };
    });
    return out;
}

}  // namespace fundus::ops
