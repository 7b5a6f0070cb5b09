#pragma once

#include <atomic>
#include <cstdint>
#include <vector>

// Convolution kernels, the hot loops of the engine. Each kernel is written
// gather-style: every output element is accumulated in a fixed loop order, so
// results are bit-identical whether the outer loop runs on one thread or
// many. The serial path is the same body with the OpenMP `if` clause off;
// tests compare both against the naive reference in kernels_ref.hpp.
//
// k = 3 (every block conv) takes a fast path over a zero-padded copy of the
// gathered plane: the padding removes the per-tap bounds handling, so the
// inner loop is nine branchless fused multiply-adds over a full row. That is
// what keeps the deep low-resolution layers (8x8, 16x16 with wide channels)
// from drowning in loop overhead.

namespace fundus::kernels {

inline std::atomic<bool>& parallel_flag() {
    static std::atomic<bool> enabled{true};
    return enabled;
}

inline bool parallel_enabled() { return parallel_flag().load(std::memory_order_relaxed); }
inline void set_parallel(bool on) { parallel_flag().store(on, std::memory_order_relaxed); }

namespace detail {

// planes: count x h x w -> count x (h+2) x (w+2) with a zero border
template <typename T>
std::vector<T> pad1(const T* src, int count, int h, int w) {
    const int ph = h + 2, pw = w + 2;
    std::vector<T> out(static_cast<std::size_t>(count) * ph * pw, T(0));
    for (int c = 0; c < count; ++c)
        for (int i = 0; i < h; ++i) {
            const T* s = src + (static_cast<std::int64_t>(c) * h + i) * w;
            T* d = out.data() + (static_cast<std::int64_t>(c) * ph + i + 1) * pw + 1;
            for (int j = 0; j < w; ++j) d[j] = s[j];
        }
    return out;
}

template <typename T>
void conv2d_forward_generic(const T* in, int cin, int h, int w_dim, const T* w, int cout, int k,
                            const T* bias, T* out, bool par) {
    const int p = k / 2;
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int oc = 0; oc < cout; ++oc) {
        for (int i = 0; i < h; ++i) {
            T* orow = out + (static_cast<std::int64_t>(oc) * h + i) * w_dim;
            const T b = bias ? bias[oc] : T(0);
            for (int j = 0; j < w_dim; ++j) orow[j] = b;
            for (int ic = 0; ic < cin; ++ic) {
                const T* wk = w + (static_cast<std::int64_t>(oc) * cin + ic) * k * k;
                for (int ki = 0; ki < k; ++ki) {
                    const int ii = i + ki - p;
                    if (ii < 0 || ii >= h) continue;
                    const T* irow = in + (static_cast<std::int64_t>(ic) * h + ii) * w_dim;
                    for (int kj = 0; kj < k; ++kj) {
                        const T wv = wk[ki * k + kj];
                        const int dj = kj - p;
                        const int j0 = dj < 0 ? -dj : 0;
                        const int j1 = dj > 0 ? w_dim - dj : w_dim;
#pragma omp simd
                        for (int j = j0; j < j1; ++j) orow[j] += wv * irow[j + dj];
                    }
                }
            }
        }
    }
}

// Same per-element accumulation order as the generic path (ic, then ki, kj).
template <typename T>
void conv2d_forward_k3(const T* in, int cin, int h, int w_dim, const T* w, int cout,
                       const T* bias, T* out, bool par) {
    const int pw = w_dim + 2;
    const std::vector<T> pin = pad1(in, cin, h, w_dim);
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int oc = 0; oc < cout; ++oc) {
        for (int i = 0; i < h; ++i) {
            T* orow = out + (static_cast<std::int64_t>(oc) * h + i) * w_dim;
            const T b = bias ? bias[oc] : T(0);
            for (int j = 0; j < w_dim; ++j) orow[j] = b;
            for (int ic = 0; ic < cin; ++ic) {
                const T* wk = w + (static_cast<std::int64_t>(oc) * cin + ic) * 9;
                const T* r0 = pin.data() + (static_cast<std::int64_t>(ic) * (h + 2) + i) * pw;
                const T* r1 = r0 + pw;
                const T* r2 = r1 + pw;
                const T w0 = wk[0], w1 = wk[1], w2 = wk[2], w3 = wk[3], w4 = wk[4], w5 = wk[5],
                        w6 = wk[6], w7 = wk[7], w8 = wk[8];
#pragma omp simd
                for (int j = 0; j < w_dim; ++j) {
                    orow[j] += w0 * r0[j];
                    orow[j] += w1 * r0[j + 1];
                    orow[j] += w2 * r0[j + 2];
                    orow[j] += w3 * r1[j];
                    orow[j] += w4 * r1[j + 1];
                    orow[j] += w5 * r1[j + 2];
                    orow[j] += w6 * r2[j];
                    orow[j] += w7 * r2[j + 1];
                    orow[j] += w8 * r2[j + 2];
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_input_generic(const T* gout, const T* w, int cin, int h, int w_dim, int cout,
                                   int k, T* gin, bool par) {
    const int p = k / 2;
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int ic = 0; ic < cin; ++ic) {
        for (int y = 0; y < h; ++y) {
            T* grow = gin + (static_cast<std::int64_t>(ic) * h + y) * w_dim;
            for (int oc = 0; oc < cout; ++oc) {
                const T* wk = w + (static_cast<std::int64_t>(oc) * cin + ic) * k * k;
                for (int ki = 0; ki < k; ++ki) {
                    const int gy = y + p - ki;
                    if (gy < 0 || gy >= h) continue;
                    const T* gorow = gout + (static_cast<std::int64_t>(oc) * h + gy) * w_dim;
                    for (int kj = 0; kj < k; ++kj) {
                        const T wv = wk[ki * k + kj];
                        const int dj = p - kj;
                        const int x0 = dj < 0 ? -dj : 0;
                        const int x1 = dj > 0 ? w_dim - dj : w_dim;
#pragma omp simd
                        for (int x = x0; x < x1; ++x) grow[x] += wv * gorow[x + dj];
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_input_k3(const T* gout, const T* w, int cin, int h, int w_dim, int cout,
                              T* gin, bool par) {
    const int pw = w_dim + 2;
    const std::vector<T> pg = pad1(gout, cout, h, w_dim);
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int ic = 0; ic < cin; ++ic) {
        for (int y = 0; y < h; ++y) {
            T* grow = gin + (static_cast<std::int64_t>(ic) * h + y) * w_dim;
            for (int oc = 0; oc < cout; ++oc) {
                const T* wk = w + (static_cast<std::int64_t>(oc) * cin + ic) * 9;
                // gout[y+1-ki][x+1-kj] lives at padded row y+2-ki, col x+2-kj
                const T* r2 = pg.data() + (static_cast<std::int64_t>(oc) * (h + 2) + y) * pw;
                const T* r1 = r2 + pw;
                const T* r0 = r1 + pw;
                const T w0 = wk[0], w1 = wk[1], w2 = wk[2], w3 = wk[3], w4 = wk[4], w5 = wk[5],
                        w6 = wk[6], w7 = wk[7], w8 = wk[8];
#pragma omp simd
                for (int x = 0; x < w_dim; ++x) {
                    grow[x] += w0 * r0[x + 2];
                    grow[x] += w1 * r0[x + 1];
                    grow[x] += w2 * r0[x];
                    grow[x] += w3 * r1[x + 2];
                    grow[x] += w4 * r1[x + 1];
                    grow[x] += w5 * r1[x];
                    grow[x] += w6 * r2[x + 2];
                    grow[x] += w7 * r2[x + 1];
                    grow[x] += w8 * r2[x];
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_params_generic(const T* gout, const T* in, int cin, int h, int w_dim,
                                    int cout, int k, T* gw, bool par) {
    const int p = k / 2;
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int oc = 0; oc < cout; ++oc) {
        for (int ic = 0; ic < cin; ++ic) {
            T* gwk = gw + (static_cast<std::int64_t>(oc) * cin + ic) * k * k;
            for (int ki = 0; ki < k; ++ki) {
                for (int kj = 0; kj < k; ++kj) {
                    const int di = ki - p;
                    const int dj = kj - p;
                    const int i0 = di < 0 ? -di : 0;
                    const int i1 = di > 0 ? h - di : h;
                    const int j0 = dj < 0 ? -dj : 0;
                    const int j1 = dj > 0 ? w_dim - dj : w_dim;
                    T acc = 0;
                    for (int i = i0; i < i1; ++i) {
                        const T* gorow = gout + (static_cast<std::int64_t>(oc) * h + i) * w_dim;
                        const T* irow = in + (static_cast<std::int64_t>(ic) * h + i + di) * w_dim;
                        T s = 0;
#pragma omp simd reduction(+ : s)
                        for (int j = j0; j < j1; ++j) s += gorow[j] * irow[j + dj];
                        acc += s;
                    }
                    gwk[ki * k + kj] += acc;
                }
            }
        }
    }
}

// One sweep over the plane accumulates all nine taps at once.
template <typename T>
void conv2d_backward_params_k3(const T* gout, const T* in, int cin, int h, int w_dim, int cout,
                               T* gw, bool par) {
    const int pw = w_dim + 2;
    const std::vector<T> pin = pad1(in, cin, h, w_dim);
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int oc = 0; oc < cout; ++oc) {
        for (int ic = 0; ic < cin; ++ic) {
            T a0 = 0, a1 = 0, a2 = 0, a3 = 0, a4 = 0, a5 = 0, a6 = 0, a7 = 0, a8 = 0;
            for (int i = 0; i < h; ++i) {
                const T* g = gout + (static_cast<std::int64_t>(oc) * h + i) * w_dim;
                const T* r0 = pin.data() + (static_cast<std::int64_t>(ic) * (h + 2) + i) * pw;
                const T* r1 = r0 + pw;
                const T* r2 = r1 + pw;
#pragma omp simd reduction(+ : a0, a1, a2, a3, a4, a5, a6, a7, a8)
                for (int j = 0; j < w_dim; ++j) {
                    const T gv = g[j];
                    a0 += gv * r0[j];
                    a1 += gv * r0[j + 1];
                    a2 += gv * r0[j + 2];
                    a3 += gv * r1[j];
                    a4 += gv * r1[j + 1];
                    a5 += gv * r1[j + 2];
                    a6 += gv * r2[j];
                    a7 += gv * r2[j + 1];
                    a8 += gv * r2[j + 2];
                }
            }
            T* gwk = gw + (static_cast<std::int64_t>(oc) * cin + ic) * 9;
            gwk[0] += a0;
            gwk[1] += a1;
            gwk[2] += a2;
            gwk[3] += a3;
            gwk[4] += a4;
            gwk[5] += a5;
            gwk[6] += a6;
            gwk[7] += a7;
            gwk[8] += a8;
        }
    }
}

}  // namespace detail

// out[oc,i,j] = bias[oc] + sum_{ic,ki,kj} w[oc,ic,ki,kj] * in[ic, i+ki-p, j+kj-p]
// Zero same-padding, odd k, p = k/2. `out` is overwritten.
template <typename T>
void conv2d_forward(const T* in, int cin, int h, int w_dim, const T* w, int cout, int k,
                    const T* bias, T* out) {
    const bool par = parallel_enabled();
    if (k == 3)
        detail::conv2d_forward_k3(in, cin, h, w_dim, w, cout, bias, out, par);
    else
        detail::conv2d_forward_generic(in, cin, h, w_dim, w, cout, k, bias, out, par);
}

// gin[ic,y,x] += sum_{oc,ki,kj} w[oc,ic,ki,kj] * gout[oc, y+p-ki, x+p-kj]
template <typename T>
void conv2d_backward_input(const T* gout, const T* w, int cin, int h, int w_dim, int cout, int k,
                           T* gin) {
    const bool par = parallel_enabled();
    if (k == 3)
        detail::conv2d_backward_input_k3(gout, w, cin, h, w_dim, cout, gin, par);
    else
        detail::conv2d_backward_input_generic(gout, w, cin, h, w_dim, cout, k, gin, par);
}

// gw[oc,ic,ki,kj] += sum_{i,j} gout[oc,i,j] * in[ic, i+ki-p, j+kj-p]
// gb[oc]          += sum_{i,j} gout[oc,i,j]            (gw or gb may be null)
template <typename T>
void conv2d_backward_params(const T* gout, const T* in, int cin, int h, int w_dim, int cout, int k,
                            T* gw, T* gb) {
    const bool par = parallel_enabled();
    if (gw) {
        if (k == 3)
            detail::conv2d_backward_params_k3(gout, in, cin, h, w_dim, cout, gw, par);
        else
            detail::conv2d_backward_params_generic(gout, in, cin, h, w_dim, cout, k, gw, par);
    }
    if (gb) {
#pragma omp parallel for schedule(static) if (par)
        for (int oc = 0; oc < cout; ++oc) {
            const T* go = gout + static_cast<std::int64_t>(oc) * h * w_dim;
            T s = 0;
#pragma omp simd reduction(+ : s)
            for (std::int64_t e = 0; e < static_cast<std::int64_t>(h) * w_dim; ++e) s += go[e];
            gb[oc] += s;
        }
    }
}

}  // namespace fundus::kernels
