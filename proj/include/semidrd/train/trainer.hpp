#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <variant>

#include "semidrd/data/batch_stream.hpp"
#include "semidrd/train/checkpoint.hpp"
#include "semidrd/train/losses.hpp"
#include "semidrd/train/schedule.hpp"

namespace semidrd {

struct TrainCallbacks {
    std::function<void(const LossReport&)> on_step;
    std::function<void(int epoch, const Checkpoint&)> on_epoch;
    /// Return true to stop after the current step (used by smoke runs with a
    /// target metric).
    std::function<bool(int64_t step)> should_stop;
};

/// Alternating semi-supervised training (labeled batch, then unlabeled batch)
/// with Adam and the milestone learning-rate schedule. Fully deterministic in
/// (config, data): every random stream is derived from cfg.seed plus the
/// epoch/step counters, so a resumed run continues bit-exactly.
///
/// Unlabeled steps with lambda_unsup == 0 compute and log their loss but
/// apply no optimizer update, leaving every parameter untouched.
inline Checkpoint train(const TrainConfig& cfg, const std::vector<LabeledSample>& labeled,
                        const std::vector<UnlabeledSample>& unlabeled, const TrainCallbacks& cb = {},
                        const Checkpoint* resume = nullptr) {
    cfg.validate();
    DerainModels<float> models = build_models<float>(cfg);
    PerceptualEncoder<float> encoder = build_encoder<float>(cfg);
    MemoryBank bank(cfg.bank_capacity);
    ParamList<float> params = models.param_list();
    Adam<float> adam(params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

    int start_epoch = 0;
    int64_t step = 0;
    if (resume) {
        restore_into(*resume, models, adam, bank);
        start_epoch = static_cast<int>(resume->epoch);
        step = resume->step;
    }

    const bool semi = cfg.semi_supervised;
    double last_l_sup = 0.0;
    bool stop = false;
    for (int epoch = start_epoch; epoch < cfg.epochs && !stop; ++epoch) {
        const double lr = lr_at(epoch, cfg);
        BatchStream stream(labeled, unlabeled, cfg.batch, cfg.patch,
                           Rng::mix(cfg.seed, 0xe90cULL, static_cast<uint64_t>(epoch)), semi);
        while (auto batch = stream.next()) {
            const uint64_t step_seed = Rng::mix(cfg.seed, 0x57e9ULL, static_cast<uint64_t>(step));
            LossReport rep;
            rep.step = step;
            rep.epoch = epoch;
            rep.lr = lr;
            if (std::holds_alternative<LabeledBatch>(*batch)) {
                const LabeledBatch& lb = std::get<LabeledBatch>(*batch);
                zero_grads(params);
                Graph<float> g;
                auto res = supervised_loss_g(g, models, encoder, bank, cfg, lb.rainy, lb.clean, lb.streaks, step_seed);
                const float v = res.loss.val().item();
                rep.phase = 'L';
                rep.l_sup = v;
                rep.l_d = res.l_d;
                rep.l_r = res.l_r;
                rep.l_dual_sup = res.l_dual;
                rep.l_total = v;
                if (!std::isfinite(rep.l_sup))
                    throw TrainingDiverged("step " + std::to_string(step) + ": " + rep.csv_row());
                g.backward(res.loss);
                adam.step(params, lr, cfg.clip_grad);
                push_rain_layers(bank, res.rain_layers, RainOrigin::Synthetic);
                last_l_sup = v;
            } else {
                const UnlabeledBatch& ub = std::get<UnlabeledBatch>(*batch);
                zero_grads(params);
                Graph<float> g;
                auto res = unsupervised_loss_g(g, models, encoder, bank, cfg, ub.rainy, ub.pseudo_clean, step_seed);
                const float v = res.loss.val().item();
                rep.phase = 'U';
                rep.l_unsup = v;
                rep.l_dual_unsup = res.l_dual;
                rep.l_sup = last_l_sup;
                rep.l_total = static_cast<float>(last_l_sup) + static_cast<float>(cfg.lambda_unsup) * v;
                if (!std::isfinite(rep.l_unsup))
                    throw TrainingDiverged("step " + std::to_string(step) + ": " + rep.csv_row());
                if (cfg.lambda_unsup > 0) {
                    auto scaled = ops::affine(g, res.loss, static_cast<float>(cfg.lambda_unsup), 0.0f);
                    g.backward(scaled);
                    adam.step(params, lr, cfg.clip_grad);
                }
                push_rain_layers(bank, res.rain_layers, RainOrigin::Real);
            }
            ++step;
            if (cb.on_step) cb.on_step(rep);
            if (cb.should_stop && cb.should_stop(step)) {
                stop = true;
                break;
            }
        }
        Checkpoint ck = snapshot(cfg, models, adam, bank, epoch + 1, step, Rng::mix(cfg.seed, static_cast<uint64_t>(step)));
        if (cb.on_epoch) cb.on_epoch(epoch, ck);
        if (stop) return ck;
    }
    return snapshot(cfg, models, adam, bank, cfg.epochs, step, Rng::mix(cfg.seed, static_cast<uint64_t>(step)));
}

}  // namespace semidrd
