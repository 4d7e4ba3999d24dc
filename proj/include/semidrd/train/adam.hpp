#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "semidrd/nn/layers.hpp"

namespace semidrd {

/// Adam over a fixed parameter list (trainable entries only). Moment tensors
/// are kept in parameter order and serialize into checkpoints.
template <class T>
class Adam {
public:
    Adam() = default;
    explicit Adam(const ParamList<T>& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& p : params) {
            if (!p.trainable) continue;
            m_.push_back(Tensor<T>::zeros_like(p.param->value));
            v_.push_back(Tensor<T>::zeros_like(p.param->value));
        }
    }

    /// One update from the gradients currently held by the params; clears
    /// them afterwards. clip > 0 rescales the global gradient norm to clip.
    void step(const ParamList<T>& params, double lr, double clip = 0.0) {
        ++t_;
        double scale = 1.0;
        if (clip > 0.0) {
            double sq = 0.0;
            for (const auto& p : params) {
                if (!p.trainable || p.param->grad.empty()) continue;
                for (T g : p.param->grad.data) sq += static_cast<double>(g) * static_cast<double>(g);
            }
            const double norm = std::sqrt(sq);
            if (norm > clip) scale = clip / norm;
        }
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        size_t k = 0;
        for (const auto& p : params) {
            if (!p.trainable) continue;
            Tensor<T>& m = m_[k];
            Tensor<T>& v = v_[k];
            ++k;
            Tensor<T>& val = p.param->value;
            if (p.param->grad.empty()) p.param->grad = Tensor<T>::zeros_like(val);
            Tensor<T>& gr = p.param->grad;
            for (size_t i = 0; i < val.data.size(); ++i) {
                const double g = static_cast<double>(gr.data[i]) * scale;
                const double mi = beta1_ * static_cast<double>(m.data[i]) + (1.0 - beta1_) * g;
                const double vi = beta2_ * static_cast<double>(v.data[i]) + (1.0 - beta2_) * g * g;
                m.data[i] = static_cast<T>(mi);
                v.data[i] = static_cast<T>(vi);
                val.data[i] -= static_cast<T>(lr * (mi / c1) / (std::sqrt(vi / c2) + eps_));
            }
            p.param->zero_grad();
        }
    }

    int64_t steps() const { return t_; }
    void set_steps(int64_t t) { t_ = t; }
    std::vector<Tensor<T>>& moments1() { return m_; }
    std::vector<Tensor<T>>& moments2() { return v_; }

private:
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    int64_t t_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

}  // namespace semidrd
