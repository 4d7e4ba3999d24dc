#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "semidrd/nn/layers.hpp"
#include "semidrd/nn/rain_residual_net.hpp"

namespace semidrd {

enum class BlockKind { Direct, Residual, Sdcab };

inline BlockKind block_kind_from_string(const std::string& s) {
    if (s == "direct" || s == "db") return BlockKind::Direct;
    if (s == "residual" || s == "rb") return BlockKind::Residual;
    if (s == "sdcab") return BlockKind::Sdcab;
    throw std::invalid_argument("unknown block kind: " + s);
}

inline std::string to_string(BlockKind k) {
    switch (k) {
        case BlockKind::Direct: return "direct";
        case BlockKind::Residual: return "residual";
        default: return "sdcab";
    }
}

/// Dilated convolution concatenation layer: parallel 3x3 convolutions, one
/// per dilation scale (padding = dilation keeps spatial size), concatenated
/// and fused back to M channels by a 1x1 convolution.
template <class T>
struct Dccl {
    std::vector<Conv2dLayer<T>> branches;
    std::vector<int> dilations;
    Conv2dLayer<T> fuse;

    Dccl() = default;
    Dccl(int64_t m, const std::vector<int>& dils, Rng& rng) : dilations(dils) {
        if (dils.empty()) throw std::invalid_argument("Dccl: empty dilation set");
        for (int d : dils) branches.emplace_back(m, m, 3, d, d, rng);
        fuse = Conv2dLayer<T>(static_cast<int64_t>(dils.size()) * m, m, 1, 0, 1, rng);
    }

    typename Graph<T>::Value forward(Graph<T>& g, typename Graph<T>::Value x) {
        if (x.c() != branches[0].w.value.c())
            throw std::invalid_argument("Dccl: input has " + std::to_string(x.c()) + " channels, expects " +
                                        std::to_string(branches[0].w.value.c()));
        std::vector<typename Graph<T>::Value> outs;
        outs.reserve(branches.size());
        for (auto& br : branches) outs.push_back(br.forward(g, x));
        return fuse.forward(g, ops::concat_channels(g, outs));
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        for (size_t i = 0; i < branches.size(); ++i) branches[i].collect(prefix + ".branch" + std::to_string(i), out);
        fuse.collect(prefix + ".fuse", out);
    }
};

/// Structure detail context aggregation block: two DCCL stages with batch
/// norm, a PReLU between them, and an identity skip:
///   y = x + BN2(DCCL2(PReLU(BN1(DCCL1(x)))))
template <class T>
struct SdcabBlock {
    Dccl<T> dccl1, dccl2;
    BatchNorm2d<T> bn1, bn2;
    PReLULayer<T> act;

    SdcabBlock() = default;
    SdcabBlock(int64_t m, const std::vector<int>& dils, T bn_eps, Rng& rng)
        : dccl1(m, dils, rng), dccl2(m, dils, rng), bn1(m, bn_eps), bn2(m, bn_eps), act(m) {}

    typename Graph<T>::Value forward(Graph<T>& g, typename Graph<T>::Value x, NormMode mode) {
        auto h = act.forward(g, bn1.forward(g, dccl1.forward(g, x), mode));
        h = bn2.forward(g, dccl2.forward(g, h), mode);
        return ops::add(g, x, h);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        dccl1.collect(prefix + ".dccl1", out);
        bn1.collect(prefix + ".bn1", out);
        act.collect(prefix + ".act", out);
        dccl2.collect(prefix + ".dccl2", out);
        bn2.collect(prefix + ".bn2", out);
    }
};

/// Two plain 3x3 convolutions with activations, no skip (ablation block).
template <class T>
struct DirectBlock {
    Conv2dLayer<T> conv1, conv2;
    PReLULayer<T> act1, act2;

    DirectBlock() = default;
    DirectBlock(int64_t m, Rng& rng) : conv1(m, m, 3, 1, 1, rng), conv2(m, m, 3, 1, 1, rng), act1(m), act2(m) {}

    typename Graph<T>::Value forward(Graph<T>& g, typename Graph<T>::Value x) {
        return act2.forward(g, conv2.forward(g, act1.forward(g, conv1.forward(g, x))));
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        conv1.collect(prefix + ".conv1", out);
        act1.collect(prefix + ".act1", out);
        conv2.collect(prefix + ".conv2", out);
        act2.collect(prefix + ".act2", out);
    }
};

/// Predicts the signed detail residual to add back after rain removal.
/// Encoder conv, a stack of SDCAB (or ablation) blocks, two decoder convs;
/// the final conv starts at zero so the detail branch begins as a no-op.
template <class T>
struct DetailRepairNet {
    using Block = std::variant<SdcabBlock<T>, RainResidualBlock<T>, DirectBlock<T>>;

    Conv2dLayer<T> enc;
    PReLULayer<T> enc_act;
    std::vector<Block> blocks;
    Conv2dLayer<T> dec1;
    PReLULayer<T> dec_act;
    Conv2dLayer<T> dec2;
    std::vector<int> dilations;
    BlockKind kind = BlockKind::Sdcab;

    DetailRepairNet() = default;
    DetailRepairNet(int64_t channels, int n_blocks, const std::vector<int>& dils, BlockKind kind_, T bn_eps, Rng& rng)
        : enc(3, channels, 3, 1, 1, rng), enc_act(channels), dec1(channels, channels, 3, 1, 1, rng),
          dec_act(channels), dec2(channels, 3, 3, 1, 1, rng, /*zero_init=*/true), dilations(dils), kind(kind_) {
        dec2.b.value.fill(T(0));
        blocks.reserve(static_cast<size_t>(n_blocks));
        for (int i = 0; i < n_blocks; ++i) {
            switch (kind) {
                case BlockKind::Sdcab: blocks.emplace_back(SdcabBlock<T>(channels, dils, bn_eps, rng)); break;
                case BlockKind::Residual:
                    blocks.emplace_back(RainResidualBlock<T>(channels, /*use_se=*/false, 1, rng));
                    break;
                case BlockKind::Direct: blocks.emplace_back(DirectBlock<T>(channels, rng)); break;
            }
        }
    }

    typename Graph<T>::Value forward_block(Graph<T>& g, Block& b, typename Graph<T>::Value h, NormMode mode) {
        return std::visit(
            [&](auto& blk) -> typename Graph<T>::Value {
                using B = std::decay_t<decltype(blk)>;
                if constexpr (std::is_same_v<B, SdcabBlock<T>>)
                    return blk.forward(g, h, mode);
                else
                    return blk.forward(g, h);
            },
            b);
    }

    typename Graph<T>::Value forward(Graph<T>& g, typename Graph<T>::Value x, NormMode mode) {
        check_branch_input(x.val(), "detail repair net");
        auto h = enc_act.forward(g, enc.forward(g, x));
        for (auto& b : blocks) h = forward_block(g, b, h, mode);
        h = dec_act.forward(g, dec1.forward(g, h));
        return dec2.forward(g, h);
    }

    /// Forward through layers 0..depth of the canonical layout: layer 0 is
    /// the encoder conv, layers 1..n_blocks the blocks, then the two decoder
    /// convs. Used by the impulse-response probe.
    typename Graph<T>::Value forward_depth(Graph<T>& g, typename Graph<T>::Value x, int depth, NormMode mode) {
        const int nb = static_cast<int>(blocks.size());
        if (depth < 0 || depth > nb + 2) throw std::invalid_argument("forward_depth: depth out of range");
        auto h = enc_act.forward(g, enc.forward(g, x));
        for (int i = 0; i < std::min(depth, nb); ++i) h = forward_block(g, blocks[static_cast<size_t>(i)], h, mode);
        if (depth >= nb + 1) h = dec_act.forward(g, dec1.forward(g, h));
        if (depth >= nb + 2) h = dec2.forward(g, h);
        return h;
    }

    Tensor<T> forward_t(const Tensor<T>& x, NormMode mode) {
        Graph<T> g;
        return forward(g, g.constant(x), mode).val();
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        enc.collect(prefix + ".enc", out);
        enc_act.collect(prefix + ".enc_act", out);
        for (size_t i = 0; i < blocks.size(); ++i) {
            const std::string p = prefix + ".block" + std::to_string(i);
            std::visit([&](auto& blk) { blk.collect(p, out); }, blocks[i]);
        }
        dec1.collect(prefix + ".dec1", out);
        dec_act.collect(prefix + ".dec_act", out);
        dec2.collect(prefix + ".dec2", out);
    }
};

/// Closed-form receptive field of the layer-`depth` output for the canonical
/// 19-layer layout (encoder conv, `n_blocks` SDCAB layers, two decoder
/// convs). Each 3x3 convolution at dilation d widens the field by 2d; an
/// SDCAB contributes two DCCL stages whose widest branch runs at
/// max(dilation_set).
inline int receptive_field(int depth, const std::vector<int>& dilation_set, int n_blocks = 16) {
    if (dilation_set.empty()) throw std::invalid_argument("receptive_field: empty dilation set");
    for (int d : dilation_set)
        if (d < 1) throw std::invalid_argument("receptive_field: dilation must be >= 1");
    if (depth < 0 || depth > n_blocks + 2) throw std::invalid_argument("receptive_field: depth out of range");
    const int dmax = *std::max_element(dilation_set.begin(), dilation_set.end());
    const int sdcab_layers = std::min(depth, n_blocks);
    const int tail_convs = std::max(0, depth - n_blocks);
    return 3 + sdcab_layers * 2 * (2 * dmax) + tail_convs * 2;
}

/// Receptive-field growth when each block contributes a single dilated 3x3
/// stage on its widest path (one dilated conv per layer). This is the growth
/// column reported for the dilation-7 layout: 3, 17, 31, ..., 227, 229, 231.
inline int receptive_field_single_stage(int depth, int dilation = 7, int n_blocks = 16) {
    if (dilation < 1) throw std::invalid_argument("receptive_field_single_stage: dilation must be >= 1");
    if (depth < 0 || depth > n_blocks + 2)
        throw std::invalid_argument("receptive_field_single_stage: depth out of range");
    const int dil_layers = std::min(depth, n_blocks);
    const int tail_convs = std::max(0, depth - n_blocks);
    return 3 + dil_layers * 2 * dilation + tail_convs * 2;
}

/// Ground-truth probe for receptive_field: feed a centered delta through the
/// first `depth` layers of a real network with all-positive weights, zero
/// biases and batch norm bypassed, and measure the bounding box of the
/// nonzero response.
template <class T = double>
int impulse_footprint(const std::vector<int>& dilation_set, int depth, int64_t channels = 4) {
    if (dilation_set.empty()) throw std::invalid_argument("impulse_footprint: empty dilation set");
    Rng rng(1);
    const int nb = std::max(1, std::min(depth, 16));
    DetailRepairNet<T> net(channels, nb, dilation_set, BlockKind::Sdcab, T(1e-5), rng);
    ParamList<T> ps;
    net.collect("drn", ps);
    for (auto& p : ps) {
        const std::string& n = p.name;
        if (n.size() >= 2 && n.compare(n.size() - 2, 2, ".w") == 0)
            p.param->value.fill(T(0.05));
        else if (n.size() >= 2 && n.compare(n.size() - 2, 2, ".b") == 0)
            p.param->value.fill(T(0));
        else if (n.size() >= 6 && n.compare(n.size() - 6, 6, ".slope") == 0)
            p.param->value.fill(T(0.25));
    }

    int side = receptive_field(depth, dilation_set, nb) + 10;
    for (int attempt = 0; attempt < 4; ++attempt) {
        if (side % 2 == 0) ++side;
        Tensor<T> delta(1, 3, side, side);
        for (int64_t c = 0; c < 3; ++c) delta.at(0, c, side / 2, side / 2) = T(1);
        Graph<T> g;
        Tensor<T> out = net.forward_depth(g, g.constant(delta), depth, NormMode::Bypass).val();

        int64_t lo_h = side, hi_h = -1, lo_w = side, hi_w = -1;
        for (int64_t c = 0; c < out.c(); ++c)
            for (int64_t h = 0; h < out.h(); ++h)
                for (int64_t w = 0; w < out.w(); ++w)
                    if (std::abs(static_cast<double>(out.at(0, c, h, w))) > 1e-12) {
                        lo_h = std::min(lo_h, h);
                        hi_h = std::max(hi_h, h);
                        lo_w = std::min(lo_w, w);
                        hi_w = std::max(hi_w, w);
                    }
        if (hi_h < 0) return 0;
        const bool touches_border = lo_h == 0 || lo_w == 0 || hi_h == side - 1 || hi_w == side - 1;
        if (!touches_border) return static_cast<int>(std::max(hi_h - lo_h, hi_w - lo_w) + 1);
        side += 32;
    }
    throw std::runtime_error("impulse_footprint: response did not fit the probe canvas");
}

}  // namespace semidrd
