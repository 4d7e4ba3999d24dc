#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "semidrd/core/tensor.hpp"

namespace semidrd {

/// Peak signal-to-noise ratio in dB, peak 1.0, capped at 100 dB so identical
/// images report a finite number.
template <class T>
double psnr(const Tensor<T>& x, const Tensor<T>& y) {
    check_same_shape(x, y, "psnr");
    double mse = 0;
    for (size_t i = 0; i < x.data.size(); ++i) {
        const double d = static_cast<double>(x.data[i]) - static_cast<double>(y.data[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(x.numel());
    if (mse <= 0) return 100.0;
    return std::min(100.0, -10.0 * std::log10(mse));
}

namespace detail {

inline const std::vector<double>& gaussian11() {
    static const std::vector<double> w = [] {
        std::vector<double> k(11);
        double sum = 0;
        for (int i = 0; i < 11; ++i) {
            const double d = i - 5;
            k[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
            sum += k[static_cast<size_t>(i)];
        }
        for (double& v : k) v /= sum;
        return k;
    }();
    return w;
}

}  // namespace detail

/// Mean local SSIM over 11x11 Gaussian windows (sigma 1.5), C1=(0.01)^2,
/// C2=(0.03)^2 at unit dynamic range, computed per channel on full windows
/// only and averaged.
template <class T>
double ssim(const Tensor<T>& x, const Tensor<T>& y) {
    check_same_shape(x, y, "ssim");
    constexpr int W = 11;
    if (x.h() < W || x.w() < W)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window: " + shape_str(x));
    constexpr double C1 = 0.01 * 0.01;
    constexpr double C2 = 0.03 * 0.03;
    const auto& k = detail::gaussian11();
    const int64_t H = x.h(), Wd = x.w();
    double total = 0;
    int64_t count = 0;
    for (int64_t n = 0; n < x.n(); ++n)
        for (int64_t c = 0; c < x.c(); ++c)
            for (int64_t oy = 0; oy + W <= H; ++oy)
                for (int64_t ox = 0; ox + W <= Wd; ++ox) {
                    double mx = 0, my = 0;
                    for (int i = 0; i < W; ++i)
                        for (int j = 0; j < W; ++j) {
                            const double wgt = k[static_cast<size_t>(i)] * k[static_cast<size_t>(j)];
                            mx += wgt * static_cast<double>(x.at(n, c, oy + i, ox + j));
                            my += wgt * static_cast<double>(y.at(n, c, oy + i, ox + j));
                        }
                    double vx = 0, vy = 0, cov = 0;
                    for (int i = 0; i < W; ++i)
                        for (int j = 0; j < W; ++j) {
                            const double wgt = k[static_cast<size_t>(i)] * k[static_cast<size_t>(j)];
                            const double dx = static_cast<double>(x.at(n, c, oy + i, ox + j)) - mx;
                            const double dy = static_cast<double>(y.at(n, c, oy + i, ox + j)) - my;
                            vx += wgt * dx * dx;
                            vy += wgt * dy * dy;
                            cov += wgt * dx * dy;
                        }
                    const double num = (2.0 * mx * my + C1) * (2.0 * cov + C2);
                    const double den = (mx * mx + my * my + C1) * (vx + vy + C2);
                    total += num / den;
                    ++count;
                }
    return total / static_cast<double>(count);
}

struct MetricsReport {
    struct Row {
        std::string id;
        double psnr = 0;
        double ssim = 0;
    };
    std::vector<Row> rows;
    double mean_psnr = 0;
    double mean_ssim = 0;

    void finish() {
        mean_psnr = mean_ssim = 0;
        for (const auto& r : rows) {
            mean_psnr += r.psnr;
            mean_ssim += r.ssim;
        }
        if (!rows.empty()) {
            mean_psnr /= static_cast<double>(rows.size());
            mean_ssim /= static_cast<double>(rows.size());
        }
    }

    std::string to_csv() const {
        std::ostringstream os;
        os.precision(9);
        os << "id,psnr,ssim\n";
        for (const auto& r : rows) os << r.id << "," << r.psnr << "," << r.ssim << "\n";
        os << "mean," << mean_psnr << "," << mean_ssim << "\n";
        return os.str();
    }
};

}  // namespace semidrd
