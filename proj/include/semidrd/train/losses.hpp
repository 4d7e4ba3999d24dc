#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "semidrd/contrastive/dual_contrastive.hpp"
#include "semidrd/data/batch_stream.hpp"
#include "semidrd/train/models.hpp"

namespace semidrd {

/// Per-step loss breakdown as logged to loss.csv.
struct LossReport {
    int64_t step = 0;
    int epoch = 0;
    char phase = 'L';  // 'L' labeled, 'U' unlabeled
    double lr = 0;
    double l_total = 0;
    double l_sup = 0;
    double l_unsup = 0;
    double l_d = 0;
    double l_r = 0;
    double l_dual_sup = 0;
    double l_dual_unsup = 0;

    static std::string csv_header() {
        return "step,epoch,phase,lr,l_total,l_sup,l_unsup,l_d,l_r,l_dual_sup,l_dual_unsup";
    }
    std::string csv_row() const {
        std::ostringstream os;
        os.precision(9);
        os << step << "," << epoch << "," << phase << "," << lr << "," << l_total << "," << l_sup << "," << l_unsup
           << "," << l_d << "," << l_r << "," << l_dual_sup << "," << l_dual_unsup;
        return os.str();
    }
};

inline ContrastiveWeights contrastive_weights(const TrainConfig& cfg) {
    ContrastiveWeights w;
    w.omega = cfg.omega;
    w.m = cfg.m;
    w.eps = cfg.eps;
    return w;
}

template <class T>
struct SupervisedLossGraph {
    typename Graph<T>::Value loss;  // L_sup
    T l_d = 0, l_r = 0, l_dual = 0;
    std::vector<Tensor<T>> rain_layers;  // detached f(O) per batch item
};

/// L_sup = L_d + lambda_r * L_r + lambda_dual * L_dual over one labeled
/// batch. L_r compares the predicted rain layer against the stored streaks;
/// L_d compares the full derained output O - f(O) + g(O) against the clean
/// target. The contrastive term runs per batch item with the derained output
/// as anchor, the clean image as positive, and bank-augmented negatives
/// (built from the detached anchor; no gradient flows through them).
template <class T>
SupervisedLossGraph<T> supervised_loss_g(Graph<T>& g, DerainModels<T>& models, const PerceptualEncoder<T>& encoder,
                                         const MemoryBank& bank, const TrainConfig& cfg, const Tensor<T>& rainy,
                                         const Tensor<T>& clean, const Tensor<T>& streaks, uint64_t seed) {
    auto O = g.constant(rainy);
    auto B = g.constant(clean);
    auto R = g.constant(streaks);
    auto f = models.rrn.forward(g, O);
    auto prelim = ops::sub(g, O, f);
    auto detail = models.drn.forward(g, O, NormMode::Train);
    auto derained = ops::add(g, prelim, detail);

    auto l_r = ops::l1_mean(g, f, R);
    auto l_d = ops::l1_mean(g, derained, B);
    auto loss = ops::add(g, l_d, ops::affine(g, l_r, static_cast<T>(cfg.lambda_r), T(0)));

    SupervisedLossGraph<T> out;
    out.l_r = l_r.val().item();
    out.l_d = l_d.val().item();
    const int64_t N = rainy.n();
    if (cfg.lambda_dual > 0) {
        const ContrastiveWeights w = contrastive_weights(cfg);
        std::vector<typename Graph<T>::Value> terms;
        terms.reserve(static_cast<size_t>(N));
        for (int64_t n = 0; n < N; ++n) {
            auto anchor = ops::slice_batch(g, derained, n);
            auto positive = ops::slice_batch(g, B, n);
            Tensor<T> rainy_n = ops::slice_batch(g, O, n).val();
            auto negs_t = augment_negatives(anchor.val(), rainy_n, bank, w.m, Rng::mix(seed, static_cast<uint64_t>(n)));
            std::vector<typename Graph<T>::Value> negs;
            negs.reserve(negs_t.size());
            for (auto& t : negs_t) negs.push_back(g.constant(std::move(t)));
            terms.push_back(contrastive_loss_g(g, anchor, positive, negs, encoder, w));
        }
        auto l_dual = ops::affine(g, ops::sum(g, terms), T(1) / static_cast<T>(N), T(0));
        out.l_dual = l_dual.val().item();
        loss = ops::add(g, loss, ops::affine(g, l_dual, static_cast<T>(cfg.lambda_dual), T(0)));
    }
    out.loss = loss;
    out.rain_layers.reserve(static_cast<size_t>(N));
    for (int64_t n = 0; n < N; ++n) out.rain_layers.push_back(ops::slice_batch(g, f, n).val());
    return out;
}

template <class T>
struct UnsupervisedLossGraph {
    typename Graph<T>::Value loss;  // L_unsup = L_dual(unsup)
    T l_dual = 0;
    std::vector<Tensor<T>> rain_layers;
};

/// L_unsup over one unlabeled batch: the derained real image anchors a
/// contrastive term whose positive is the pseudo-clean image carried into the
/// anchor's appearance statistics and whose negatives come from real-origin
/// bank layers (falling back to the rainy input while the bank is empty).
template <class T>
UnsupervisedLossGraph<T> unsupervised_loss_g(Graph<T>& g, DerainModels<T>& models,
                                             const PerceptualEncoder<T>& encoder, const MemoryBank& bank,
                                             const TrainConfig& cfg, const Tensor<T>& rainy,
                                             const Tensor<T>& pseudo_clean, uint64_t seed) {
    auto O = g.constant(rainy);
    auto f = models.rrn.forward(g, O);
    auto detail = models.drn.forward(g, O, NormMode::Train);
    auto derained = ops::add(g, ops::sub(g, O, f), detail);

    const ContrastiveWeights w = contrastive_weights(cfg);
    const int64_t N = rainy.n();
    std::vector<typename Graph<T>::Value> terms;
    terms.reserve(static_cast<size_t>(N));
    for (int64_t n = 0; n < N; ++n) {
        auto anchor = ops::slice_batch(g, derained, n);
        Tensor<T> rainy_n = ops::slice_batch(g, O, n).val();
        Tensor<T> pseudo_n(1, 3, pseudo_clean.h(), pseudo_clean.w());
        std::copy_n(pseudo_clean.plane(n), pseudo_n.numel(), pseudo_n.data.data());
        auto positive = g.constant(domain_transform(pseudo_n, anchor.val()));
        auto negs_t = augment_negatives(anchor.val(), rainy_n, bank, w.m, Rng::mix(seed, static_cast<uint64_t>(n)),
                                        RainOrigin::Real);
        std::vector<typename Graph<T>::Value> negs;
        negs.reserve(negs_t.size());
        for (auto& t : negs_t) negs.push_back(g.constant(std::move(t)));
        terms.push_back(contrastive_loss_g(g, anchor, positive, negs, encoder, w));
    }
    UnsupervisedLossGraph<T> out;
    out.loss = ops::affine(g, ops::sum(g, terms), T(1) / static_cast<T>(N), T(0));
    out.l_dual = out.loss.val().item();
    out.rain_layers.reserve(static_cast<size_t>(N));
    for (int64_t n = 0; n < N; ++n) out.rain_layers.push_back(ops::slice_batch(g, f, n).val());
    return out;
}

template <class T>
void push_rain_layers(MemoryBank& bank, const std::vector<Tensor<T>>& layers, RainOrigin tag) {
    for (const auto& t : layers) bank.push(t.template cast<float>(), tag);
}

/// Value-level supervised loss over a labeled batch: computes the loss,
/// pushes the detached predicted rain layers into the bank, and reports the
/// per-term breakdown. Throws TrainingDiverged on a non-finite result.
template <class T>
std::pair<T, LossReport> supervised_loss(const Tensor<T>& rainy, const Tensor<T>& clean, const Tensor<T>& streaks,
                                         DerainModels<T>& models, const PerceptualEncoder<T>& encoder,
                                         MemoryBank& bank, const TrainConfig& cfg, uint64_t seed) {
    Graph<T> g;
    auto res = supervised_loss_g(g, models, encoder, bank, cfg, rainy, clean, streaks, seed);
    const T v = res.loss.val().item();
    LossReport rep;
    rep.phase = 'L';
    rep.l_sup = static_cast<double>(v);
    rep.l_d = static_cast<double>(res.l_d);
    rep.l_r = static_cast<double>(res.l_r);
    rep.l_dual_sup = static_cast<double>(res.l_dual);
    rep.l_total = rep.l_sup;
    if (!std::isfinite(static_cast<double>(v)))
        throw TrainingDiverged("supervised loss diverged: " + rep.csv_row());
    push_rain_layers(bank, res.rain_layers, RainOrigin::Synthetic);
    return {v, rep};
}

template <class T>
std::pair<T, LossReport> unsupervised_loss(const Tensor<T>& rainy, const Tensor<T>& pseudo_clean,
                                           DerainModels<T>& models, const PerceptualEncoder<T>& encoder,
                                           MemoryBank& bank, const TrainConfig& cfg, uint64_t seed) {
    Graph<T> g;
    auto res = unsupervised_loss_g(g, models, encoder, bank, cfg, rainy, pseudo_clean, seed);
    const T v = res.loss.val().item();
    LossReport rep;
    rep.phase = 'U';
    rep.l_unsup = static_cast<double>(v);
    rep.l_dual_unsup = static_cast<double>(res.l_dual);
    if (!std::isfinite(static_cast<double>(v)))
        throw TrainingDiverged("unsupervised loss diverged: " + rep.csv_row());
    push_rain_layers(bank, res.rain_layers, RainOrigin::Real);
    return {v, rep};
}

}  // namespace semidrd
