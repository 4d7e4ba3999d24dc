#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semidrd/core/graph.hpp"
#include "semidrd/core/ops.hpp"
#include "semidrd/core/rng.hpp"

namespace semidrd {

enum class NormMode { Train, Eval, Bypass };

/// Named handle to a parameter or a persistent (non-trainable) buffer.
template <class T>
struct ParamRef {
    std::string name;
    Param<T>* param = nullptr;
    bool trainable = true;
};

template <class T>
using ParamList = std::vector<ParamRef<T>>;

/// Fan-in scaled uniform init: U(-1/sqrt(fan_in), +1/sqrt(fan_in)).
template <class T>
void init_fan_in(Tensor<T>& w, int64_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (T& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <class T>
struct Conv2dLayer {
    Param<T> w;  // (Cout,Cin,kh,kw)
    Param<T> b;  // (1,Cout,1,1)
    int pad = 0;
    int dilation = 1;

    Conv2dLayer() = default;
    Conv2dLayer(int64_t cin, int64_t cout, int k, int pad_, int dil, Rng& rng, bool zero_init = false)
        : pad(pad_), dilation(dil) {
        w.value = Tensor<T>(cout, cin, k, k);
        b.value = Tensor<T>(1, cout, 1, 1);
        if (!zero_init) init_fan_in(w.value, cin * k * k, rng);
    }

    typename Graph<T>::Value forward(Graph<T>& g, typename Graph<T>::Value x) {
        return ops::conv2d(g, x, g.param(w), g.param(b), pad, dilation);
    }
    typename Graph<T>::Value forward_frozen(Graph<T>& g, typename Graph<T>::Value x) const {
        return ops::conv2d(g, x, g.constant(w.value), g.constant(b.value), pad, dilation);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".w", &w, true});
        out.push_back({prefix + ".b", &b, true});
    }
};

template <class T>
struct PReLULayer {
    Param<T> slope;  // (1,C,1,1), initialized to 0.25

    PReLULayer() = default;
    explicit PReLULayer(int64_t c) { slope.value = Tensor<T>(1, c, 1, 1, T(0.25)); }

    typename Graph<T>::Value forward(Graph<T>& g, typename Graph<T>::Value x) {
        return ops::prelu(g, x, g.param(slope));
    }

    void collect(const std::string& prefix, ParamList<T>& out) { out.push_back({prefix + ".slope", &slope, true}); }
};

/// Per-channel batch norm. Training uses batch statistics and folds them into
/// momentum-free cumulative running averages; inference uses the averages.
template <class T>
struct BatchNorm2d {
    Param<T> gamma;  // (1,C,1,1), init 1
    Param<T> beta;   // (1,C,1,1), init 0
    Param<T> running_mean;   // buffers, stored as params for serialization
    Param<T> running_var;
    Param<T> batches_seen;   // (1,1,1,1) counter
    T eps = T(1e-5);

    BatchNorm2d() = default;
    explicit BatchNorm2d(int64_t c, T eps_ = T(1e-5)) : eps(eps_) {
        gamma.value = Tensor<T>(1, c, 1, 1, T(1));
        beta.value = Tensor<T>(1, c, 1, 1, T(0));
        running_mean.value = Tensor<T>(1, c, 1, 1, T(0));
        running_var.value = Tensor<T>(1, c, 1, 1, T(1));
        batches_seen.value = Tensor<T>(1, 1, 1, 1, T(0));
    }

    typename Graph<T>::Value forward(Graph<T>& g, typename Graph<T>::Value x, NormMode mode) {
        if (mode == NormMode::Bypass) return x;
        if (mode == NormMode::Eval) {
            const int64_t C = gamma.value.c();
            std::vector<double> rm(static_cast<size_t>(C)), rv(static_cast<size_t>(C));
            for (int64_t c = 0; c < C; ++c) {
                rm[static_cast<size_t>(c)] = static_cast<double>(running_mean.value.data[static_cast<size_t>(c)]);
                rv[static_cast<size_t>(c)] = static_cast<double>(running_var.value.data[static_cast<size_t>(c)]);
            }
            return ops::batchnorm_eval(g, x, g.param(gamma), g.param(beta), rm, rv, eps);
        }
        auto res = ops::batchnorm_train(g, x, g.param(gamma), g.param(beta), eps);
        const double k = static_cast<double>(batches_seen.value.data[0]);
        for (size_t c = 0; c < res.mean.size(); ++c) {
            running_mean.value.data[c] =
                static_cast<T>((static_cast<double>(running_mean.value.data[c]) * k + res.mean[c]) / (k + 1.0));
            running_var.value.data[c] =
                static_cast<T>((static_cast<double>(running_var.value.data[c]) * k + res.var[c]) / (k + 1.0));
        }
        batches_seen.value.data[0] = static_cast<T>(k + 1.0);
        return res.y;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".gamma", &gamma, true});
        out.push_back({prefix + ".beta", &beta, true});
        out.push_back({prefix + ".running_mean", &running_mean, false});
        out.push_back({prefix + ".running_var", &running_var, false});
        out.push_back({prefix + ".batches_seen", &batches_seen, false});
    }
};

/// Squeeze-and-excitation channel gate: global average pool, bottleneck MLP
/// (C -> C/r -> C) with ReLU, sigmoid gates, per-channel rescale.
template <class T>
struct SEGate {
    Conv2dLayer<T> fc1;  // 1x1 conv acting on (N,C,1,1)
    Conv2dLayer<T> fc2;

    SEGate() = default;
    SEGate(int64_t c, int64_t reduction, Rng& rng) {
        if (reduction < 1 || c % reduction != 0)
            throw std::invalid_argument("SEGate: reduction must divide channel count");
        fc1 = Conv2dLayer<T>(c, c / reduction, 1, 0, 1, rng);
        fc2 = Conv2dLayer<T>(c / reduction, c, 1, 0, 1, rng);
    }

    typename Graph<T>::Value forward(Graph<T>& g, typename Graph<T>::Value x) {
        if (x.c() != fc1.w.value.c())
            throw std::invalid_argument("SEGate: input has " + std::to_string(x.c()) + " channels, gate expects " +
                                        std::to_string(fc1.w.value.c()));
        auto z = ops::global_avg_pool(g, x);
        auto h = ops::relu(g, fc1.forward(g, z));
        auto s = ops::sigmoid(g, fc2.forward(g, h));
        return ops::scale_channels(g, x, s);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        fc1.collect(prefix + ".fc1", out);
        fc2.collect(prefix + ".fc2", out);
    }
};

}  // namespace semidrd
