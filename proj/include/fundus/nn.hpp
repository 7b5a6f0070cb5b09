#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fundus/ops.hpp"
#include "fundus/rng.hpp"
#include "fundus/tape.hpp"

namespace fundus::nn {

// He-uniform for conv weights feeding relu; biases stay zero.
template <typename T>
void he_uniform_init(Param<T>& w, int fan_in, Rng& rng) {
    const double limit = std::sqrt(6.0 / fan_in);
    for (auto& v : w.value) v = static_cast<T>(rng.uniform(-limit, limit));
}

template <typename T>
struct ConvLayer {
    Param<T>* w = nullptr;
    Param<T>* b = nullptr;
    int kernel = 3;
};

template <typename T>
ConvLayer<T> make_conv(ParamStore<T>& store, const std::string& path, int cin, int cout, int k,
                       Rng* rng) {
    ConvLayer<T> l;
    l.kernel = k;
    l.w = &store.add(path + ".w", {cout, cin, k, k});
    l.b = &store.add(path + ".b", {cout});
    if (!store.count_only() && rng) he_uniform_init(*l.w, cin * k * k, *rng);
    return l;
}

template <typename T>
Tensor<T> bind(Tape<T>* tape, Param<T>& p) {
    return tape ? tape->leaf(p) : Tensor<T>::view(p.shape, &p.value);
}

template <typename T>
Tensor<T> apply_conv(Tape<T>* tape, const ConvLayer<T>& l, const Tensor<T>& x) {
    return ops::conv2d(x, bind(tape, *l.w), bind(tape, *l.b));
}

// `convs_per_block` 3x3 convolutions, each followed by relu.
template <typename T>
struct ConvBlock {
    std::vector<ConvLayer<T>> convs;

    Tensor<T> forward(Tape<T>* tape, Tensor<T> x) const {
        for (const auto& c : convs) x = ops::relu(apply_conv(tape, c, x));
        return x;
    }
};

template <typename T>
ConvBlock<T> make_block(ParamStore<T>& store, const std::string& path, int cin, int cout,
                        int convs_per_block, Rng* rng) {
    ConvBlock<T> b;
    for (int i = 0; i < convs_per_block; ++i)
        b.convs.push_back(make_conv(store, path + ".c" + std::to_string(i), i == 0 ? cin : cout,
                                    cout, 3, rng));
    return b;
}

// Contracting path: blocks at scales 0..depth-1 (skip taken before pooling),
// then a bottleneck block at scale depth.
template <typename T>
struct Encoder {
    std::vector<ConvBlock<T>> blocks;
    ConvBlock<T> bottleneck;

    struct Out {
        std::vector<Tensor<T>> skips;  // per scale, pre-pool
        Tensor<T> bottom;
    };

    Out forward(Tape<T>* tape, Tensor<T> x) const {
        Out out;
        for (const auto& b : blocks) {
            x = b.forward(tape, x);
            out.skips.push_back(x);
            x = ops::maxpool2(x);
        }
        out.bottom = bottleneck.forward(tape, x);
        return out;
    }
};

template <typename T>
Encoder<T> make_encoder(ParamStore<T>& store, const std::string& path, int in_channels, int base,
                        int depth, int convs_per_block, Rng* rng) {
    Encoder<T> e;
    int cin = in_channels;
    for (int s = 0; s < depth; ++s) {
        const int cout = base << s;
        e.blocks.push_back(make_block(store, path + ".b" + std::to_string(s), cin, cout,
                                      convs_per_block, rng));
        cin = cout;
    }
    e.bottleneck = make_block(store, path + ".bott", cin, base << depth, convs_per_block, rng);
    return e;
}

// Expanding path: per scale, nearest-neighbor upsample + 3x3 conv, concat
// with the (possibly cropped) skip, then a conv block. 1x1 head emits logits.
template <typename T>
struct Decoder {
    std::vector<ConvLayer<T>> upconvs;  // index s, applied at scale s
    std::vector<ConvBlock<T>> blocks;
    ConvLayer<T> head;

    Tensor<T> forward(Tape<T>* tape, Tensor<T> x, const std::vector<Tensor<T>>& skips) const {
        for (int s = static_cast<int>(upconvs.size()) - 1; s >= 0; --s) {
            x = ops::relu(apply_conv(tape, upconvs[s], ops::upsample2(x)));
            x = ops::concat_channels(x, skips[s]);
            x = blocks[s].forward(tape, x);
        }
        return apply_conv(tape, head, x);  // logits
    }
};

template <typename T>
Decoder<T> make_decoder(ParamStore<T>& store, const std::string& path, int base, int depth,
                        int convs_per_block, int out_channels, Rng* rng) {
    Decoder<T> d;
    d.upconvs.resize(depth);
    d.blocks.resize(depth);
    for (int s = 0; s < depth; ++s) {
        const int cout = base << s;
        d.upconvs[s] = make_conv(store, path + ".up" + std::to_string(s), cout * 2, cout, 3, rng);
        d.blocks[s] = make_block(store, path + ".b" + std::to_string(s), cout * 2, cout,
                                 convs_per_block, rng);
    }
    d.head = make_conv(store, path + ".head", base, out_channels, 1, rng);
    return d;
}

}  // namespace fundus::nn
