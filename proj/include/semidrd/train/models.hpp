#pragma once

#include "semidrd/nn/detail_repair_net.hpp"
#include "semidrd/nn/perceptual_encoder.hpp"
#include "semidrd/nn/rain_residual_net.hpp"
#include "semidrd/train/config.hpp"

namespace semidrd {

/// The two trainable sub-networks. The rain branch predicts the streak layer
/// f(O); the detail branch predicts the residual g(O) added back after
/// subtraction.
template <class T>
struct DerainModels {
    RainResidualNet<T> rrn;
    DetailRepairNet<T> drn;

    ParamList<T> param_list() {
        ParamList<T> out;
        rrn.collect("rrn", out);
        drn.collect("drn", out);
        return out;
    }
};

template <class T = float>
DerainModels<T> build_models(const TrainConfig& cfg) {
    cfg.validate();
    DerainModels<T> m;
    Rng r1(Rng::mix(cfg.seed, 0x5252ULL));
    m.rrn = RainResidualNet<T>(cfg.channels, cfg.rrn_blocks, cfg.se, cfg.se_reduction, r1);
    Rng r2(Rng::mix(cfg.seed, 0x4452ULL));
    m.drn = DetailRepairNet<T>(cfg.channels, cfg.drn_blocks, cfg.dilations, block_kind_from_string(cfg.block_kind),
                               static_cast<T>(cfg.bn_eps), r2);
    return m;
}

template <class T = float>
PerceptualEncoder<T> build_encoder(const TrainConfig& cfg) {
    EncoderSpec spec = EncoderSpec::by_name(cfg.encoder);
    spec.norm_mean = cfg.encoder_norm_mean;
    spec.norm_std = cfg.encoder_norm_std;
    if (!cfg.encoder_weights.empty()) return PerceptualEncoder<T>(spec, cfg.encoder_weights);
    return PerceptualEncoder<T>(spec, Rng::mix(cfg.seed, 0x764716ULL));
}

template <class T>
void zero_grads(const ParamList<T>& params) {
    for (const auto& p : params) p.param->zero_grad();
}

}  // namespace semidrd
