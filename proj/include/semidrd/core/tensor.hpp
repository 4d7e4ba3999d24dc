#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace semidrd {

/// Dense NCHW tensor. Images are (1,3,H,W), batches (N,3,H,W), feature maps
/// (N,C,H,W); scalars use shape (1,1,1,1). Data is row-major, w fastest.
template <class T>
struct Tensor {
    std::array<int64_t, 4> dims{0, 0, 0, 0};
    std::vector<T> data;

    Tensor() = default;
    Tensor(int64_t n, int64_t c, int64_t h, int64_t w, T fill = T(0))
        : dims{n, c, h, w}, data(static_cast<size_t>(n * c * h * w), fill) {}

    static Tensor scalar(T v) {
        Tensor t(1, 1, 1, 1);
        t.data[0] = v;
        return t;
    }
    static Tensor zeros_like(const Tensor& o) { return Tensor(o.dims[0], o.dims[1], o.dims[2], o.dims[3]); }

    int64_t n() const { return dims[0]; }
    int64_t c() const { return dims[1]; }
    int64_t h() const { return dims[2]; }
    int64_t w() const { return dims[3]; }
    int64_t numel() const { return dims[0] * dims[1] * dims[2] * dims[3]; }
    bool empty() const { return data.empty(); }

    T& at(int64_t n_, int64_t c_, int64_t h_, int64_t w_) {
        return data[static_cast<size_t>(((n_ * dims[1] + c_) * dims[2] + h_) * dims[3] + w_)];
    }
    const T& at(int64_t n_, int64_t c_, int64_t h_, int64_t w_) const {
        return data[static_cast<size_t>(((n_ * dims[1] + c_) * dims[2] + h_) * dims[3] + w_)];
    }

    T* plane(int64_t n_) { return data.data() + n_ * dims[1] * dims[2] * dims[3]; }
    const T* plane(int64_t n_) const { return data.data() + n_ * dims[1] * dims[2] * dims[3]; }

    bool same_shape(const Tensor& o) const { return dims == o.dims; }

    T item() const {
        if (numel() != 1) throw std::logic_error("Tensor::item on non-scalar");
        return data[0];
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(dims[0], dims[1], dims[2], dims[3]);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

template <class T>
std::string shape_str(const Tensor<T>& t) {
    return "(" + std::to_string(t.dims[0]) + "," + std::to_string(t.dims[1]) + "," +
           std::to_string(t.dims[2]) + "," + std::to_string(t.dims[3]) + ")";
}

template <class T>
bool all_finite(const Tensor<T>& t) {
    for (T v : t.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

template <class T>
Tensor<T> clamp01(Tensor<T> t) {
    for (T& v : t.data) v = std::min(T(1), std::max(T(0), v));
    return t;
}

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* who) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(who) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    Tensor<T> out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "sub");
    Tensor<T> out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

template <class T>
T max_abs(const Tensor<T>& t) {
    T m = 0;
    for (T v : t.data) m = std::max(m, std::abs(v));
    return m;
}

template <class T>
double mean_value(const Tensor<T>& t) {
    double s = 0;
    for (T v : t.data) s += static_cast<double>(v);
    return t.numel() ? s / static_cast<double>(t.numel()) : 0.0;
}

}  // namespace semidrd
