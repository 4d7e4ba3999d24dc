#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "semidrd/core/errors.hpp"
#include "semidrd/core/tensor.hpp"

namespace semidrd {

/// Images cross the process boundary as 8-bit RGB PNG; in memory they are
/// (1,3,H,W) float tensors in [0,1]. Conversion is v/255 on read and
/// round(v*255) on write.

template <class T = float>
Tensor<T> image_from_bytes(const std::vector<uint8_t>& rgb, int64_t h, int64_t w) {
    Tensor<T> out(1, 3, h, w);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c)
                out.at(0, c, y, x) = static_cast<T>(rgb[static_cast<size_t>((y * w + x) * 3 + c)]) / T(255);
    return out;
}

template <class T>
std::vector<uint8_t> image_to_bytes(const Tensor<T>& img) {
    if (img.n() != 1 || img.c() != 3) throw std::invalid_argument("image_to_bytes: expected (1,3,H,W)");
    std::vector<uint8_t> rgb(static_cast<size_t>(img.h() * img.w() * 3));
    for (int64_t y = 0; y < img.h(); ++y)
        for (int64_t x = 0; x < img.w(); ++x)
            for (int64_t c = 0; c < 3; ++c) {
                double v = static_cast<double>(img.at(0, c, y, x));
                v = std::min(1.0, std::max(0.0, v));
                rgb[static_cast<size_t>((y * img.w() + x) * 3 + c)] = static_cast<uint8_t>(std::lround(v * 255.0));
            }
    return rgb;
}

template <class T = float>
Tensor<T> read_png(const std::string& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw FormatError("cannot read PNG " + path + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<uint8_t> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw FormatError("cannot decode PNG " + path + ": " + msg);
    }
    return image_from_bytes<T>(buf, image.height, image.width);
}

template <class T>
void write_png(const std::string& path, const Tensor<T>& img) {
    std::vector<uint8_t> rgb = image_to_bytes(img);
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.format = PNG_FORMAT_RGB;
    image.width = static_cast<png_uint_32>(img.w());
    image.height = static_cast<png_uint_32>(img.h());
    if (!png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr))
        throw FormatError("cannot write PNG " + path + ": " + image.message);
}

}  // namespace semidrd
