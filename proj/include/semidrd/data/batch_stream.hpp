#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "semidrd/core/errors.hpp"
#include "semidrd/core/rng.hpp"
#include "semidrd/data/dataset.hpp"

namespace semidrd {

struct LabeledBatch {
    Tensor<float> rainy, clean, streaks;  // (B,3,p,p)
};

struct UnlabeledBatch {
    Tensor<float> rainy, pseudo_clean;  // (B,3,p,p)
};

using Batch = std::variant<LabeledBatch, UnlabeledBatch>;

/// One epoch's worth of training batches. Labeled and unlabeled batches
/// strictly alternate, labeled first; with the unlabeled pool disabled only
/// labeled batches are emitted. Sample order, crop windows and pseudo-clean
/// pairings are all drawn from the stream seed, so equal seeds give equal
/// streams. Single consumer.
class BatchStream {
public:
    BatchStream(const std::vector<LabeledSample>& labeled, const std::vector<UnlabeledSample>& unlabeled,
                int batch_size, int64_t patch, uint64_t seed, bool semi_supervised)
        : labeled_(labeled), unlabeled_(unlabeled), batch_(batch_size), patch_(patch), rng_(seed),
          semi_(semi_supervised) {
        if (batch_ < 1) throw ConfigError("batch size must be >= 1");
        if (labeled_.empty()) throw ConfigError("labeled pool is empty");
        if (semi_ && unlabeled_.empty()) throw ConfigError("semi-supervised mode needs a non-empty unlabeled pool");
        for (const auto& s : labeled_)
            if (s.rainy.h() < patch_ || s.rainy.w() < patch_)
                throw ConfigError("labeled image smaller than patch size " + std::to_string(patch_));
        if (semi_)
            for (const auto& s : unlabeled_)
                if (s.rainy.h() < patch_ || s.rainy.w() < patch_)
                    throw ConfigError("unlabeled image smaller than patch size " + std::to_string(patch_));

        order_l_.resize(labeled_.size());
        for (size_t i = 0; i < order_l_.size(); ++i) order_l_[i] = i;
        shuffle(order_l_);
        if (semi_) {
            order_u_.resize(unlabeled_.size());
            for (size_t i = 0; i < order_u_.size(); ++i) order_u_[i] = i;
            shuffle(order_u_);
        }
        n_pairs_ = (labeled_.size() + static_cast<size_t>(batch_) - 1) / static_cast<size_t>(batch_);
    }

    /// Batches this stream will emit in total.
    size_t total_batches() const { return n_pairs_ * (semi_ ? 2 : 1); }

    std::optional<Batch> next() {
        if (emitted_ >= total_batches()) return std::nullopt;
        const bool labeled_turn = !semi_ || emitted_ % 2 == 0;
        const size_t pair = semi_ ? emitted_ / 2 : emitted_;
        ++emitted_;
        if (labeled_turn) return Batch{labeled_batch(pair)};
        return Batch{unlabeled_batch(pair)};
    }

private:
    void shuffle(std::vector<size_t>& v) {
        for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng_.below(i)]);
    }

    std::pair<int64_t, int64_t> crop_origin(const Tensor<float>& img) {
        const int64_t top = img.h() == patch_ ? 0 : static_cast<int64_t>(rng_.below(static_cast<uint64_t>(img.h() - patch_ + 1)));
        const int64_t left = img.w() == patch_ ? 0 : static_cast<int64_t>(rng_.below(static_cast<uint64_t>(img.w() - patch_ + 1)));
        return {top, left};
    }

    static void put(Tensor<float>& dst, int64_t slot, const Tensor<float>& patch) {
        std::copy_n(patch.data.data(), patch.numel(), dst.plane(slot));
    }

    LabeledBatch labeled_batch(size_t pair) {
        LabeledBatch b{Tensor<float>(batch_, 3, patch_, patch_), Tensor<float>(batch_, 3, patch_, patch_),
                       Tensor<float>(batch_, 3, patch_, patch_)};
        for (int64_t k = 0; k < batch_; ++k) {
            const size_t idx = order_l_[(pair * static_cast<size_t>(batch_) + static_cast<size_t>(k)) % order_l_.size()];
            const LabeledSample& s = labeled_[idx];
            auto [top, left] = crop_origin(s.rainy);
            put(b.rainy, k, crop_patch(s.rainy, top, left, patch_));
            put(b.clean, k, crop_patch(s.clean, top, left, patch_));
            put(b.streaks, k, crop_patch(s.streaks, top, left, patch_));
        }
        return b;
    }

    UnlabeledBatch unlabeled_batch(size_t pair) {
        UnlabeledBatch b{Tensor<float>(batch_, 3, patch_, patch_), Tensor<float>(batch_, 3, patch_, patch_)};
        for (int64_t k = 0; k < batch_; ++k) {
            const size_t idx = order_u_[(pair * static_cast<size_t>(batch_) + static_cast<size_t>(k)) % order_u_.size()];
            const UnlabeledSample& s = unlabeled_[idx];
            auto [top, left] = crop_origin(s.rainy);
            put(b.rainy, k, crop_patch(s.rainy, top, left, patch_));
            // pseudo ground truth: a random clean image from the labeled pool
            const LabeledSample& pc = labeled_[rng_.below(labeled_.size())];
            auto [ptop, pleft] = crop_origin(pc.clean);
            put(b.pseudo_clean, k, crop_patch(pc.clean, ptop, pleft, patch_));
        }
        return b;
    }

    const std::vector<LabeledSample>& labeled_;
    const std::vector<UnlabeledSample>& unlabeled_;
    int64_t batch_;
    int64_t patch_;
    Rng rng_;
    bool semi_;
    std::vector<size_t> order_l_, order_u_;
    size_t n_pairs_ = 0;
    size_t emitted_ = 0;
};

}  // namespace semidrd
