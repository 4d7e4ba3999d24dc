#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "semidrd/core/rng.hpp"
#include "semidrd/core/tensor.hpp"

namespace semidrd {

/// Controls for the synthetic rain-streak generator.
struct StreakParams {
    double angle_deg = 10.0;   // deviation from vertical, [-45, 45]
    int length = 12;           // streak length in pixels, >= 1
    double density = 0.1;      // target fraction of covered pixels, [0, 1]
    double intensity = 0.7;    // streak brightness, (0, 1]
    uint64_t seed = 0;

    void validate() const {
        if (angle_deg < -45.0 || angle_deg > 45.0) throw std::invalid_argument("streaks: angle outside [-45,45]");
        if (length < 1) throw std::invalid_argument("streaks: length must be >= 1");
        if (density < 0.0 || density > 1.0) throw std::invalid_argument("streaks: density outside [0,1]");
        if (intensity <= 0.0 || intensity > 1.0) throw std::invalid_argument("streaks: intensity outside (0,1]");
    }
};

namespace detail {

/// Bresenham-style line of `length` pixels at the given angle from vertical,
/// as a deduplicated offset list.
inline std::vector<std::pair<int, int>> line_kernel(double angle_deg, int length) {
    const double a = angle_deg * 3.14159265358979323846 / 180.0;
    const double dx = std::sin(a), dy = std::cos(a);
    std::vector<std::pair<int, int>> cells;
    for (int t = 0; t < length; ++t) {
        const int x = static_cast<int>(std::lround(t * dx));
        const int y = static_cast<int>(std::lround(t * dy));
        if (cells.empty() || cells.back() != std::make_pair(y, x)) cells.emplace_back(y, x);
    }
    return cells;
}

}  // namespace detail

/// Seed a sparse impulse field and stamp an oriented line kernel at every
/// seed (a convolution of thresholded noise with the kernel), scaled by
/// intensity. The seed count is chosen so the expected covered-pixel fraction
/// equals `density`, accounting for streak overlap; stamping wraps at the
/// borders so coverage is uniform. Pure function of (shape, params).
template <class T = float>
Tensor<T> synthesize_streaks(int64_t h, int64_t w, const StreakParams& p) {
    if (h < 16 || w < 16) throw std::invalid_argument("synthesize_streaks: shape must be at least 16x16");
    p.validate();
    Tensor<T> field(1, 3, h, w);
    if (p.density == 0.0) return field;

    const auto kernel = detail::line_kernel(p.angle_deg, p.length);
    const double cells = static_cast<double>(kernel.size());
    const double q = std::min(p.density, 0.999);
    const int64_t n_seeds = static_cast<int64_t>(std::llround(-std::log1p(-q) * static_cast<double>(h * w) / cells));

    Rng rng(p.seed);
    for (int64_t s = 0; s < n_seeds; ++s) {
        const int64_t y0 = static_cast<int64_t>(rng.below(static_cast<uint64_t>(h)));
        const int64_t x0 = static_cast<int64_t>(rng.below(static_cast<uint64_t>(w)));
        const T v = static_cast<T>(p.intensity * rng.uniform(0.75, 1.0));
        for (const auto& [dy, dx] : kernel) {
            const int64_t y = (y0 + dy) % h;
            const int64_t x = ((x0 + dx) % w + w) % w;
            for (int64_t c = 0; c < 3; ++c) field.at(0, c, y, x) += v;
        }
    }
    return field;
}

/// O = clamp(B + R, 0, 1), elementwise.
template <class T>
Tensor<T> composite(const Tensor<T>& clean, const Tensor<T>& streaks) {
    if (clean.h() != streaks.h() || clean.w() != streaks.w() || clean.c() != streaks.c() ||
        clean.n() != streaks.n())
        throw std::invalid_argument("composite: size mismatch " + shape_str(clean) + " vs " + shape_str(streaks));
    Tensor<T> out = clean;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = std::min(T(1), std::max(T(0), out.data[i] + streaks.data[i]));
    return out;
}

/// Exact sub-window copy, no resampling.
template <class T>
Tensor<T> crop_patch(const Tensor<T>& img, int64_t top, int64_t left, int64_t size) {
    if (size < 1 || top < 0 || left < 0 || top + size > img.h() || left + size > img.w())
        throw std::invalid_argument("crop_patch: window (" + std::to_string(top) + "," + std::to_string(left) +
                                    ")+" + std::to_string(size) + " outside image " + shape_str(img));
    Tensor<T> out(img.n(), img.c(), size, size);
    for (int64_t n = 0; n < img.n(); ++n)
        for (int64_t c = 0; c < img.c(); ++c)
            for (int64_t y = 0; y < size; ++y)
                for (int64_t x = 0; x < size; ++x) out.at(n, c, y, x) = img.at(n, c, top + y, left + x);
    return out;
}

/// Procedural clean test scene: a color gradient, a few soft shapes, mild
/// texture noise. Gives the metrics some structure to measure.
template <class T = float>
Tensor<T> make_clean_scene(int64_t h, int64_t w, Rng& rng) {
    Tensor<T> img(1, 3, h, w);
    double c0[3], c1[3];
    for (int i = 0; i < 3; ++i) {
        c0[i] = rng.uniform(0.1, 0.9);
        c1[i] = rng.uniform(0.1, 0.9);
    }
    const double ang = rng.uniform(0.0, 6.283185307179586);
    const double gx = std::cos(ang), gy = std::sin(ang);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const double t = 0.5 + 0.5 * (gx * (2.0 * x / w - 1.0) + gy * (2.0 * y / h - 1.0)) / 1.4142;
            for (int64_t c = 0; c < 3; ++c) img.at(0, c, y, x) = static_cast<T>(c0[c] + (c1[c] - c0[c]) * t);
        }

    const int n_shapes = 3 + static_cast<int>(rng.below(5));
    for (int s = 0; s < n_shapes; ++s) {
        const bool disk = rng.bernoulli(0.5);
        const int64_t cy = static_cast<int64_t>(rng.below(static_cast<uint64_t>(h)));
        const int64_t cx = static_cast<int64_t>(rng.below(static_cast<uint64_t>(w)));
        const int64_t r = 2 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(std::max<int64_t>(3, h / 4))));
        double col[3];
        for (int i = 0; i < 3; ++i) col[i] = rng.uniform(0.05, 0.95);
        const double alpha = rng.uniform(0.5, 1.0);
        for (int64_t y = std::max<int64_t>(0, cy - r); y < std::min(h, cy + r + 1); ++y)
            for (int64_t x = std::max<int64_t>(0, cx - r); x < std::min(w, cx + r + 1); ++x) {
                if (disk && (y - cy) * (y - cy) + (x - cx) * (x - cx) > r * r) continue;
                for (int64_t c = 0; c < 3; ++c) {
                    const double v = static_cast<double>(img.at(0, c, y, x));
                    img.at(0, c, y, x) = static_cast<T>(v * (1.0 - alpha) + col[c] * alpha);
                }
            }
    }

    for (T& v : img.data) v = static_cast<T>(std::min(1.0, std::max(0.0, static_cast<double>(v) + rng.uniform(-0.02, 0.02))));
    return img;
}

}  // namespace semidrd
