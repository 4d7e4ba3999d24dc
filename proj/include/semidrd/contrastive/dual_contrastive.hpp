#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "semidrd/contrastive/memory_bank.hpp"
#include "semidrd/core/graph.hpp"
#include "semidrd/core/ops.hpp"
#include "semidrd/nn/perceptual_encoder.hpp"

namespace semidrd {

/// Per-tap weights, negative count and the denominator guard of the
/// contrastive ratio losses.
struct ContrastiveWeights {
    std::vector<double> omega = {0.2, 0.5, 1.0};
    int m = 4;            // negatives per anchor
    double eps = 1e-7;    // added to each ratio's denominator

    void validate() const {
        if (m < 1) throw std::invalid_argument("contrastive: m must be >= 1");
        if (eps <= 0) throw std::invalid_argument("contrastive: eps must be > 0");
        for (double w : omega)
            if (w < 0) throw std::invalid_argument("contrastive: omega must be nonnegative");
    }
};

/// Resize a stored rain layer to (h,w): center-crop larger dims, tile smaller
/// ones.
template <class T>
Tensor<T> fit_rain_layer(const Tensor<T>& rain, int64_t h, int64_t w) {
    if (rain.h() == h && rain.w() == w) return rain;
    Tensor<T> out(1, rain.c(), h, w);
    const int64_t oy = rain.h() >= h ? (rain.h() - h) / 2 : 0;
    const int64_t ox = rain.w() >= w ? (rain.w() - w) / 2 : 0;
    for (int64_t c = 0; c < rain.c(); ++c)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const int64_t sy = rain.h() >= h ? oy + y : y % rain.h();
                const int64_t sx = rain.w() >= w ? ox + x : x % rain.w();
                out.at(0, c, y, x) = rain.at(0, c, sy, sx);
            }
    return out;
}

/// Augmented negative set: m-1 re-rained copies of the anchor built from bank
/// layers, clamp(anchor + R_k), plus the original rainy image as the m-th
/// negative. If the bank has no matching entries yet, every negative is the
/// original rainy image so the loss is defined from step one.
template <class T>
std::vector<Tensor<T>> augment_negatives(const Tensor<T>& anchor_derained, const Tensor<T>& original_rainy,
                                         const MemoryBank& bank, int m, uint64_t seed,
                                         std::optional<RainOrigin> tag_filter = std::nullopt) {
    if (m < 1) throw std::invalid_argument("augment_negatives: m must be >= 1");
    check_same_shape(anchor_derained, original_rainy, "augment_negatives");
    std::vector<Tensor<T>> negs;
    negs.reserve(static_cast<size_t>(m));
    try {
        if (m > 1) {
            auto rains = bank.sample(static_cast<size_t>(m - 1), tag_filter, seed);
            for (auto& r : rains) {
                Tensor<T> rt = fit_rain_layer(r.template cast<T>(), anchor_derained.h(), anchor_derained.w());
                negs.push_back(clamp01(add(anchor_derained, rt)));
            }
        }
        negs.push_back(original_rainy);
    } catch (const EmptyBankError&) {
        negs.assign(static_cast<size_t>(m), original_rainy);
    }
    return negs;
}

/// Map the content image onto the per-channel mean/std of the style
/// reference (pixel-space statistics transfer), then clamp to [0,1].
template <class T>
Tensor<T> domain_transform(const Tensor<T>& content, const Tensor<T>& style_ref) {
    if (content.c() != style_ref.c()) throw std::invalid_argument("domain_transform: channel mismatch");
    constexpr double kVarGuard = 1e-6;
    Tensor<T> out = content;
    const int64_t HW = content.h() * content.w();
    const int64_t sHW = style_ref.h() * style_ref.w();
    for (int64_t c = 0; c < content.c(); ++c) {
        double mc = 0, ms = 0;
        for (int64_t i = 0; i < HW; ++i) mc += static_cast<double>(content.plane(0)[c * HW + i]);
        mc /= static_cast<double>(HW);
        for (int64_t i = 0; i < sHW; ++i) ms += static_cast<double>(style_ref.plane(0)[c * sHW + i]);
        ms /= static_cast<double>(sHW);
        double vc = 0, vs = 0;
        for (int64_t i = 0; i < HW; ++i) {
            const double d = static_cast<double>(content.plane(0)[c * HW + i]) - mc;
            vc += d * d;
        }
        vc = std::sqrt(vc / static_cast<double>(HW));
        for (int64_t i = 0; i < sHW; ++i) {
            const double d = static_cast<double>(style_ref.plane(0)[c * sHW + i]) - ms;
            vs += d * d;
        }
        vs = std::sqrt(vs / static_cast<double>(sHW));
        const double scale = vs / std::max(vc, kVarGuard);
        T* op = out.plane(0) + c * HW;
        for (int64_t i = 0; i < HW; ++i) {
            const double v = (static_cast<double>(op[i]) - mc) * scale + ms;
            op[i] = static_cast<T>(std::min(1.0, std::max(0.0, v)));
        }
    }
    return out;
}

/// Perceptual ratio loss: sum over negatives k and taps i of
///   omega_i * ||phi_i(positive) - phi_i(anchor)||^2
///           / (||phi_i(negative_k) - phi_i(anchor)||^2 + eps).
/// Differentiable w.r.t. the anchor (and positive) through the frozen
/// encoder.
template <class T>
typename Graph<T>::Value contrastive_loss_g(Graph<T>& g, typename Graph<T>::Value anchor,
                                            typename Graph<T>::Value positive,
                                            const std::vector<typename Graph<T>::Value>& negatives,
                                            const PerceptualEncoder<T>& encoder, const ContrastiveWeights& w) {
    w.validate();
    if (negatives.empty()) throw std::invalid_argument("contrastive_loss: need at least one negative");
    auto taps_a = encoder.taps_g(g, anchor);
    auto taps_p = encoder.taps_g(g, positive);
    const size_t n_taps = taps_a.size();
    if (w.omega.size() < n_taps) throw std::invalid_argument("contrastive_loss: fewer weights than encoder taps");

    std::vector<typename Graph<T>::Value> nums;
    nums.reserve(n_taps);
    for (size_t i = 0; i < n_taps; ++i) nums.push_back(ops::sq_l2_sum(g, taps_p[i], taps_a[i]));

    std::vector<typename Graph<T>::Value> terms;
    for (const auto& neg : negatives) {
        auto taps_n = encoder.taps_g(g, neg);
        for (size_t i = 0; i < n_taps; ++i) {
            auto den = ops::affine(g, ops::sq_l2_sum(g, taps_n[i], taps_a[i]), T(1), static_cast<T>(w.eps));
            terms.push_back(ops::affine(g, ops::div(g, nums[i], den), static_cast<T>(w.omega[i]), T(0)));
        }
    }
    return ops::sum(g, terms);
}

template <class T>
T contrastive_loss(const Tensor<T>& anchor, const Tensor<T>& positive, const std::vector<Tensor<T>>& negatives,
                   const PerceptualEncoder<T>& encoder, const ContrastiveWeights& w) {
    Graph<T> g;
    std::vector<typename Graph<T>::Value> negs;
    negs.reserve(negatives.size());
    for (const auto& n : negatives) negs.push_back(g.constant(n));
    return contrastive_loss_g(g, g.constant(anchor), g.constant(positive), negs, encoder, w).val().item();
}

/// Supervised phase: anchor = derained output, positive = paired clean image,
/// negatives = augmented rainy set from the bank (any origin).
template <class T>
T supervised_dual_loss(const Tensor<T>& derained, const Tensor<T>& clean, const Tensor<T>& rainy,
                       const MemoryBank& bank, const PerceptualEncoder<T>& encoder, const ContrastiveWeights& w,
                       uint64_t seed) {
    auto negs = augment_negatives(derained, rainy, bank, w.m, seed, std::nullopt);
    return contrastive_loss(derained, clean, negs, encoder, w);
}

/// Unsupervised phase: anchor = derained real image, positive = pseudo-clean
/// image mapped to the anchor's appearance statistics, negatives built from
/// real-origin rain layers only.
template <class T>
T unsupervised_dual_loss(const Tensor<T>& derained, const Tensor<T>& pseudo_clean, const Tensor<T>& rainy,
                         const MemoryBank& bank, const PerceptualEncoder<T>& encoder, const ContrastiveWeights& w,
                         uint64_t seed) {
    Tensor<T> positive = domain_transform(pseudo_clean, derained);
    auto negs = augment_negatives(derained, rainy, bank, w.m, seed, RainOrigin::Real);
    return contrastive_loss(derained, positive, negs, encoder, w);
}

}  // namespace semidrd
