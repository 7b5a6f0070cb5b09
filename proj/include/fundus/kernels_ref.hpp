#pragma once

// Textbook serial convolution, kept as the reference the optimized kernels
// are tested and benchmarked against. One scalar accumulator per output
// element, no pragmas, no tiling.

namespace fundus::kernels_ref {

template <typename T>
void conv2d_forward(const T* in, int cin, int h, int w_dim, const T* w, int cout, int k,
                    const T* bias, T* out) {
    const int p = k / 2;
    for (int oc = 0; oc < cout; ++oc)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w_dim; ++j) {
                T s = bias ? bias[oc] : T(0);
                for (int ic = 0; ic < cin; ++ic)
                    for (int ki = 0; ki < k; ++ki)
                        for (int kj = 0; kj < k; ++kj) {
                            const int ii = i + ki - p;
                            const int jj = j + kj - p;
                            if (ii < 0 || ii >= h || jj < 0 || jj >= w_dim) continue;
                            s += w[((oc * cin + ic) * k + ki) * k + kj] * in[(ic * h + ii) * w_dim + jj];
                        }
                out[(oc * h + i) * w_dim + j] = s;
            }
}

template <typename T>
void conv2d_backward_input(const T* gout, const T* w, int cin, int h, int w_dim, int cout, int k,
                           T* gin) {
    const int p = k / 2;
    for (int ic = 0; ic < cin; ++ic)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w_dim; ++x) {
                T s = 0;
                for (int oc = 0; oc < cout; ++oc)
                    for (int ki = 0; ki < k; ++ki)
                        for (int kj = 0; kj < k; ++kj) {
                            const int gy = y + p - ki;
                            const int gx = x + p - kj;
                            if (gy < 0 || gy >= h || gx < 0 || gx >= w_dim) continue;
                            s += w[((oc * cin + ic) * k + ki) * k + kj] * gout[(oc * h + gy) * w_dim + gx];
                        }
                gin[(ic * h + y) * w_dim + x] += s;
            }
}

template <typename T>
void conv2d_backward_params(const T* gout, const T* in, int cin, int h, int w_dim, int cout, int k,
                            T* gw, T* gb) {
    const int p = k / 2;
    for (int oc = 0; oc < cout; ++oc)
        for (int ic = 0; ic < cin; ++ic)
            for (int ki = 0; ki < k; ++ki)
                for (int kj = 0; kj < k; ++kj) {
                    T s = 0;
                    for (int i = 0; i < h; ++i)
                        for (int j = 0; j < w_dim; ++j) {
                            const int ii = i + ki - p;
                            const int jj = j + kj - p;
                            if (ii < 0 || ii >= h || jj < 0 || jj >= w_dim) continue;
                            s += gout[(oc * h + i) * w_dim + j] * in[(ic * h + ii) * w_dim + jj];
                        }
                    gw[((oc * cin + ic) * k + ki) * k + kj] += s;
                }
    if (gb)
        for (int oc = 0; oc < cout; ++oc) {
            T s = 0;
            for (int e = 0; e < h * w_dim; ++e) s += gout[oc * h * w_dim + e];
            gb[oc] += s;
        }
}

}  // namespace fundus::kernels_ref
