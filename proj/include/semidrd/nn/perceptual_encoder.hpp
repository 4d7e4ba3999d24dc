#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "semidrd/core/errors.hpp"
#include "semidrd/nn/layers.hpp"

namespace semidrd {

/// Topology of the frozen feature extractor: stages of (conv3x3 + ReLU)
/// repeats followed by 2x2 max pooling, with selected stages exposing their
/// pooled activations as feature taps.
struct EncoderSpec {
    struct Stage {
        int convs = 1;
        int64_t channels = 8;
        bool tap = false;
    };
    std::vector<Stage> stages;
    std::string name;
    // optional per-channel input normalization (x - mean) / std; empty = none
    std::vector<double> norm_mean;
    std::vector<double> norm_std;

    /// VGG-16 convolutional stack up to the 5th pooling stage; taps after the
    /// 2nd, 3rd and 5th pools.
    static EncoderSpec vgg16() {
        EncoderSpec s;
        s.name = "vgg16";
        s.stages = {{2, 64, false}, {2, 128, true}, {3, 256, true}, {3, 512, false}, {3, 512, true}};
        return s;
    }

    /// Two-stage test-scale encoder; both pooled stages are tapped.
    static EncoderSpec tiny() {
        EncoderSpec s;
        s.name = "tiny";
        s.stages = {{1, 8, true}, {1, 16, true}};
        return s;
    }

    static EncoderSpec by_name(const std::string& n) {
        if (n == "vgg16") return vgg16();
        if (n == "tiny") return tiny();
        throw ConfigError("unknown encoder preset: " + n);
    }

    int n_taps() const {
        int k = 0;
        for (const auto& st : stages) k += st.tap ? 1 : 0;
        return k;
    }
};

/// Immutable convolutional feature extractor. Weights come either from a
/// seeded random initialization or from a weight file; they never train.
/// Gradients still flow through it to its input, which is what the
/// contrastive losses differentiate.
template <class T>
class PerceptualEncoder {
public:
    PerceptualEncoder(EncoderSpec spec, uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
        Rng rng(Rng::mix(seed, 0x656e63ULL));
        int64_t cin = 3;
        for (const auto& st : spec_.stages)
            for (int i = 0; i < st.convs; ++i) {
                convs_.emplace_back(cin, st.channels, 3, 1, 1, rng);
                cin = st.channels;
            }
    }

    PerceptualEncoder(EncoderSpec spec, const std::string& weight_file) : spec_(std::move(spec)), seed_(0) {
        int64_t cin = 3;
        Rng rng(0);
        for (const auto& st : spec_.stages)
            for (int i = 0; i < st.convs; ++i) {
                convs_.emplace_back(cin, st.channels, 3, 1, 1, rng);
                cin = st.channels;
            }
        load_weights(weight_file);
    }

    const EncoderSpec& spec() const { return spec_; }
    uint64_t seed() const { return seed_; }
    int n_taps() const { return spec_.n_taps(); }

    /// Feature taps for one image batch; values only.
    std::vector<Tensor<T>> taps(const Tensor<T>& x) const {
        Graph<T> g;
        std::vector<Tensor<T>> out;
        for (auto v : taps_g(g, g.constant(x))) out.push_back(v.val());
        return out;
    }

    /// Graph version: taps as differentiable values (w.r.t. x).
    std::vector<typename Graph<T>::Value> taps_g(Graph<T>& g, typename Graph<T>::Value x) const {
        if (x.c() != 3) throw std::invalid_argument("encoder: expected 3-channel input");
        const int64_t min_side = int64_t(1) << spec_.stages.size();
        if (x.h() < min_side || x.w() < min_side)
            throw std::invalid_argument("encoder: input smaller than " + std::to_string(min_side) + " px");
        std::vector<typename Graph<T>::Value> taps;
        auto h = x;
        if (!spec_.norm_mean.empty()) {
            if (spec_.norm_mean.size() != 3 || spec_.norm_std.size() != 3)
                throw std::invalid_argument("encoder: normalization needs 3 means and 3 stds");
            std::vector<T> gain(3), shift(3);
            for (size_t c = 0; c < 3; ++c) {
                gain[c] = static_cast<T>(1.0 / spec_.norm_std[c]);
                shift[c] = static_cast<T>(-spec_.norm_mean[c] / spec_.norm_std[c]);
            }
            h = ops::channel_affine(g, h, std::move(gain), std::move(shift));
        }
        size_t conv_idx = 0;
        for (const auto& st : spec_.stages) {
            for (int i = 0; i < st.convs; ++i) h = ops::relu(g, convs_[conv_idx++].forward_frozen(g, h));
            h = ops::maxpool2(g, h);
            if (st.tap) taps.push_back(h);
        }
        return taps;
    }

    /// Weight file: magic "SDRDENC1", u32 layer count, then per convolution a
    /// shape header (u32 cout,cin,kh,kw), row-major float32 weights and
    /// float32 biases.
    void save_weights(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw FormatError("cannot write encoder weights: " + path);
        f.write("SDRDENC1", 8);
        write_u32(f, static_cast<uint32_t>(convs_.size()));
        for (const auto& c : convs_) {
            const Tensor<T>& w = c.w.value;
            for (int64_t d : w.dims) write_u32(f, static_cast<uint32_t>(d));
            write_floats(f, w);
            write_floats(f, c.b.value);
        }
    }

    void load_weights(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw FormatError("cannot open encoder weights: " + path);
        char magic[8];
        f.read(magic, 8);
        if (!f || std::string(magic, 8) != "SDRDENC1") throw FormatError("bad encoder weight file magic");
        const uint32_t n = read_u32(f);
        if (n != convs_.size())
            throw FormatError("encoder weight file has " + std::to_string(n) + " layers, topology expects " +
                              std::to_string(convs_.size()));
        for (auto& c : convs_) {
            uint32_t d[4];
            for (uint32_t& x : d) x = read_u32(f);
            Tensor<T>& w = c.w.value;
            if (d[0] != w.n() || d[1] != w.c() || d[2] != w.h() || d[3] != w.w())
                throw FormatError("encoder weight shape mismatch");
            read_floats(f, w);
            read_floats(f, c.b.value);
        }
        if (!f) throw FormatError("truncated encoder weight file");
    }

private:
    static void write_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
    static uint32_t read_u32(std::ifstream& f) {
        uint32_t v = 0;
        f.read(reinterpret_cast<char*>(&v), 4);
        return v;
    }
    static void write_floats(std::ofstream& f, const Tensor<T>& t) {
        for (T v : t.data) {
            const float x = static_cast<float>(v);
            f.write(reinterpret_cast<const char*>(&x), 4);
        }
    }
    static void read_floats(std::ifstream& f, Tensor<T>& t) {
        for (T& v : t.data) {
            float x = 0;
            f.read(reinterpret_cast<char*>(&x), 4);
            v = static_cast<T>(x);
        }
    }

    EncoderSpec spec_;
    uint64_t seed_;
    std::vector<Conv2dLayer<T>> convs_;
};

}  // namespace semidrd
