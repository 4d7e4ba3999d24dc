#pragma once

#include "semidrd/train/config.hpp"

namespace semidrd {

/// Piecewise-constant learning rate: starts at cfg.lr and multiplies by
/// cfg.decay_factor at each milestone epoch.
inline double lr_at(int epoch, const TrainConfig& cfg) {
    double lr = cfg.lr;
    for (int milestone : cfg.decay_epochs)
        if (epoch >= milestone) lr *= cfg.decay_factor;
    return lr;
}

}  // namespace semidrd
