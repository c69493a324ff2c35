#pragma once

#include <filesystem>
#include <vector>

#include "ekila/common.hpp"

namespace ekila {

struct Rect {
    int x = 0, y = 0, w = 0, h = 0;

    bool operator==(const Rect&) const = default;
};

/// 8-bit interleaved RGB.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::uint8_t& at(int x, int y, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    std::uint8_t at(int x, int y, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

    bool operator==(const Image&) const = default;
};

/// Float RGB in [0, 1], stored height x width x 3 (channel fastest).
struct FloatImage {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    FloatImage() = default;
    FloatImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0f) {}

    float& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    float at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

    bool operator==(const FloatImage&) const = default;
};

FloatImage toFloat(const Image& img);
Image toBytes(const FloatImage& img);

Image crop(const Image& img, const Rect& r);
FloatImage crop(const FloatImage& img, const Rect& r);
void paste(Image& dst, const Image& src, int x, int y);

/// Bilinear resampling with half-pixel centres and edge clamping.
FloatImage resizeBilinear(const FloatImage& img, int width, int height);

double psnr(const FloatImage& a, const FloatImage& b);

Bytes encodePng(const Image& img);
Image decodePng(ByteView png);

/// Reads PNG or binary PPM (P6) by extension.
Image loadImage(const std::filesystem::path& path);
void saveImage(const std::filesystem::path& path, const Image& img);

}  // namespace ekila
