#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "semidrd/nn/layers.hpp"

namespace semidrd {

/// Both branch networks accept (N,3,H,W) batches with H,W >= 9 (so the 3x3
/// paddings stay meaningful) and reject non-finite values.
template <class T>
void check_branch_input(const Tensor<T>& x, const char* who) {
    if (x.h() < 9 || x.w() < 9)
        throw std::invalid_argument(std::string(who) + ": input must be at least 9x9, got " + shape_str(x));
    if (!all_finite(x)) throw std::invalid_argument(std::string(who) + ": non-finite input");
}

/// Residual block with squeeze-and-excitation applied to the residual sum:
/// y = SE(x + conv2(prelu(conv1(x)))). With SE disabled it is a plain
/// residual block.
template <class T>
struct RainResidualBlock {
    Conv2dLayer<T> conv1, conv2;
    PReLULayer<T> act;
    SEGate<T> se;
    bool use_se = true;

    RainResidualBlock() = default;
    RainResidualBlock(int64_t m, bool use_se_, int64_t reduction, Rng& rng)
        : conv1(m, m, 3, 1, 1, rng), conv2(m, m, 3, 1, 1, rng), act(m), use_se(use_se_) {
        if (use_se) se = SEGate<T>(m, reduction, rng);
    }

    typename Graph<T>::Value forward(Graph<T>& g, typename Graph<T>::Value x) {
        auto r = conv2.forward(g, act.forward(g, conv1.forward(g, x)));
        auto s = ops::add(g, r, x);
        return use_se ? se.forward(g, s) : s;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        conv1.collect(prefix + ".conv1", out);
        act.collect(prefix + ".act", out);
        conv2.collect(prefix + ".conv2", out);
        if (use_se) se.collect(prefix + ".se", out);
    }
};

/// Maps a rainy image batch (N,3,H,W) to its predicted rain layer (same
/// shape, unclamped). Encoder conv, a stack of rain residual blocks, and two
/// decoder convs; the final conv starts at zero so the initial prediction is
/// an empty rain layer.
template <class T>
struct RainResidualNet {
    Conv2dLayer<T> enc;
    PReLULayer<T> enc_act;
    std::vector<RainResidualBlock<T>> blocks;
    Conv2dLayer<T> dec1;
    PReLULayer<T> dec_act;
    Conv2dLayer<T> dec2;

    RainResidualNet() = default;
    RainResidualNet(int64_t channels, int n_blocks, bool use_se, int64_t se_reduction, Rng& rng)
        : enc(3, channels, 3, 1, 1, rng), enc_act(channels), dec1(channels, channels, 3, 1, 1, rng),
          dec_act(channels), dec2(channels, 3, 3, 1, 1, rng, /*zero_init=*/true) {
        dec2.b.value.fill(T(0));
        blocks.reserve(static_cast<size_t>(n_blocks));
        for (int i = 0; i < n_blocks; ++i) blocks.emplace_back(channels, use_se, se_reduction, rng);
    }

    typename Graph<T>::Value forward(Graph<T>& g, typename Graph<T>::Value x) {
        check_branch_input(x.val(), "rain residual net");
        auto h = enc_act.forward(g, enc.forward(g, x));
        for (auto& b : blocks) h = b.forward(g, h);
        h = dec_act.forward(g, dec1.forward(g, h));
        return dec2.forward(g, h);
    }

    /// Plain forward on a tensor (no gradients kept).
    Tensor<T> forward_t(const Tensor<T>& x) {
        Graph<T> g;
        return forward(g, g.constant(x)).val();
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        enc.collect(prefix + ".enc", out);
        enc_act.collect(prefix + ".enc_act", out);
        for (size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".block" + std::to_string(i), out);
        dec1.collect(prefix + ".dec1", out);
        dec_act.collect(prefix + ".dec_act", out);
        dec2.collect(prefix + ".dec2", out);
    }

};

/// Preliminary derained image: clamp(O - R_pred, 0, 1), elementwise.
template <class T>
Tensor<T> preliminary_from(const Tensor<T>& rainy, const Tensor<T>& rain_pred) {
    check_same_shape(rainy, rain_pred, "preliminary_from");
    return clamp01(sub(rainy, rain_pred));
}

template <class T>
Tensor<T> derain_preliminary(const Tensor<T>& rainy, RainResidualNet<T>& net) {
    return preliminary_from(rainy, net.forward_t(rainy));
}

}  // namespace semidrd
