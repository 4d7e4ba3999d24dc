#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "semidrd/core/errors.hpp"
#include "semidrd/core/rng.hpp"
#include "semidrd/core/tensor.hpp"

namespace semidrd {

enum class RainOrigin : uint8_t { Synthetic = 0, Real = 1 };

/// Bounded FIFO store of predicted rain-streak layers, tagged by origin.
/// Entries are detached value copies; sampling never mutates the bank.
class MemoryBank {
public:
    struct Entry {
        Tensor<float> rain;
        RainOrigin tag;
    };

    explicit MemoryBank(size_t capacity = 64) : capacity_(capacity) {}

    size_t capacity() const { return capacity_; }
    size_t size() const { return entries_.size(); }
    const Entry& entry(size_t i) const { return entries_[i]; }

    void push(Tensor<float> rain, RainOrigin tag) {
        if (!all_finite(rain)) throw std::invalid_argument("memory bank: non-finite rain layer");
        entries_.push_back(Entry{std::move(rain), tag});
        while (entries_.size() > capacity_) entries_.pop_front();
    }

    /// m entries drawn uniformly with replacement from those matching the
    /// filter; deterministic per seed. Throws EmptyBankError when nothing
    /// matches (callers with a fallback catch it).
    std::vector<Tensor<float>> sample(size_t m, std::optional<RainOrigin> tag_filter, uint64_t seed) const {
        std::vector<size_t> pool;
        for (size_t i = 0; i < entries_.size(); ++i)
            if (!tag_filter || entries_[i].tag == *tag_filter) pool.push_back(i);
        if (pool.empty()) throw EmptyBankError("memory bank has no matching entries");
        Rng rng(seed);
        std::vector<Tensor<float>> out;
        out.reserve(m);
        for (size_t k = 0; k < m; ++k) out.push_back(entries_[pool[rng.below(pool.size())]].rain);
        return out;
    }

    void clear() { entries_.clear(); }

private:
    size_t capacity_;
    std::deque<Entry> entries_;
};

}  // namespace semidrd
