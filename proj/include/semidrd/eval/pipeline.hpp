#pragma once

#include <string>
#include <vector>

#include "semidrd/data/dataset.hpp"
#include "semidrd/eval/metrics.hpp"
#include "semidrd/train/models.hpp"

namespace semidrd {

/// Final derained output from precomputed branch outputs:
/// clamp(O - f(O) + g(O), 0, 1).
template <class T>
Tensor<T> derain_from(const Tensor<T>& rainy, const Tensor<T>& rain_pred, const Tensor<T>& detail_pred) {
    check_same_shape(rainy, rain_pred, "derain_from");
    check_same_shape(rainy, detail_pred, "derain_from");
    Tensor<T> out = rainy;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = std::min(T(1), std::max(T(0), out.data[i] - rain_pred.data[i] + detail_pred.data[i]));
    return out;
}

/// Inference: run both branches (batch norm on running statistics) and
/// compose the derained image.
template <class T>
Tensor<T> derain(const Tensor<T>& rainy, DerainModels<T>& models) {
    Graph<T> g;
    auto O = g.constant(rainy);
    auto f = models.rrn.forward(g, O);
    auto d = models.drn.forward(g, O, NormMode::Eval);
    return derain_from(rainy, f.val(), d.val());
}

/// Full-reference evaluation of the derained outputs against the clean
/// targets, one row per sample in input order plus dataset means.
inline MetricsReport evaluate(DerainModels<float>& models, const std::vector<LabeledSample>& samples,
                              const std::vector<std::string>& ids = {}) {
    MetricsReport rep;
    for (size_t i = 0; i < samples.size(); ++i) {
        const Tensor<float> out = derain(samples[i].rainy, models);
        MetricsReport::Row row;
        row.id = i < ids.size() ? ids[i] : "image-" + std::to_string(i);
        row.psnr = psnr(out, samples[i].clean);
        row.ssim = ssim(out, samples[i].clean);
        rep.rows.push_back(std::move(row));
    }
    rep.finish();
    return rep;
}

}  // namespace semidrd
