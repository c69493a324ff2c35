#include "ekila/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace ekila {

namespace {

constexpr double kPi = 3.14159265358979323846;

float sampleClamped(const FloatImage& img, float fx, float fy, int c) {
    fx = std::clamp(fx, 0.0f, static_cast<float>(img.width - 1));
    fy = std::clamp(fy, 0.0f, static_cast<float>(img.height - 1));
    int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
    int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
    float wx = fx - x0, wy = fy - y0;
    float top = img.at(x0, y0, c) * (1 - wx) + img.at(x1, y0, c) * wx;
    float bot = img.at(x0, y1, c) * (1 - wx) + img.at(x1, y1, c) * wx;
    return top * (1 - wy) + bot * wy;
}

FloatImage resizedCrop(const FloatImage& img, double areaKeep, double logAspect, double ox, double oy) {
    double aspect = std::exp(logAspect);
    double cw = std::min(1.0, std::sqrt(areaKeep * aspect)) * img.width;
    double ch = std::min(1.0, std::sqrt(areaKeep / aspect)) * img.height;
    double x0 = ox * (img.width - cw);
    double y0 = oy * (img.height - ch);
    FloatImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            float sx = static_cast<float>(x0 + (x + 0.5) * cw / img.width - 0.5);
            float sy = static_cast<float>(y0 + (y + 0.5) * ch / img.height - 0.5);
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = sampleClamped(img, sx, sy, c);
        }
    return out;
}

FloatImage rotate(const FloatImage& img, double degrees) {
    const double t = degrees * kPi / 180.0;
    const double cs = std::cos(t), sn = std::sin(t);
    const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
    FloatImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double dx = x - cx, dy = y - cy;
            auto sx = static_cast<float>(cs * dx + sn * dy + cx);
            auto sy = static_cast<float>(-sn * dx + cs * dy + cy);
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = sampleClamped(img, sx, sy, c);
        }
    return out;
}

void colorJitter(FloatImage& img, double brightness, double contrast, double saturation, double hueDeg) {
    double mean = 0.0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            mean += 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
    mean /= static_cast<double>(img.width) * img.height;
    const double h = hueDeg * kPi / 180.0;
    const double hc = std::cos(h), hs = std::sin(h);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double r = img.at(x, y, 0) * brightness, g = img.at(x, y, 1) * brightness, b = img.at(x, y, 2) * brightness;
            r = (r - mean * brightness) * contrast + mean * brightness;
            g = (g - mean * brightness) * contrast + mean * brightness;
            b = (b - mean * brightness) * contrast + mean * brightness;
            // Saturation and hue in YIQ space.
            double Y = 0.299 * r + 0.587 * g + 0.114 * b;
            double I = 0.596 * r - 0.274 * g - 0.322 * b;
            double Q = 0.211 * r - 0.523 * g + 0.312 * b;
            double I2 = (I * hc - Q * hs) * saturation;
            double Q2 = (I * hs + Q * hc) * saturation;
            img.at(x, y, 0) = static_cast<float>(Y + 0.956 * I2 + 0.621 * Q2);
            img.at(x, y, 1) = static_cast<float>(Y - 0.272 * I2 - 0.647 * Q2);
            img.at(x, y, 2) = static_cast<float>(Y - 1.106 * I2 + 1.703 * Q2);
        }
}

FloatImage gaussianBlur(const FloatImage& img, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
    std::vector<float> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
    for (auto& v : k) v = static_cast<float>(v / sum);
    FloatImage tmp(img.width, img.height), out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                float acc = 0;
                for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * img.at(std::clamp(x + i, 0, img.width - 1), y, c);
                tmp.at(x, y, c) = acc;
            }
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                float acc = 0;
                for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp.at(x, std::clamp(y + i, 0, img.height - 1), c);
                out.at(x, y, c) = acc;
            }
    return out;
}

// Standard JPEG quantisation tables (luminance, chrominance).
constexpr std::array<int, 64> kLumaQ{16, 11, 10, 16, 24, 40, 51, 61, 12, 12, 14, 19, 26, 58, 60, 55,
                                    14, 13, 16, 24, 40, 57, 69, 56, 14, 17, 22, 29, 51, 87, 80, 62,
                                    18, 22, 37, 56, 68, 109, 103, 77, 24, 35, 55, 64, 81, 104, 113, 92,
                                    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
constexpr std::array<int, 64> kChromaQ{17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
                                      24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
                                      99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
                                      99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

void jpegQuantize(FloatImage& img, double quality) {
    quality = std::clamp(quality, 1.0, 100.0);
    double scale = quality < 50 ? 5000.0 / quality : 200.0 - 2.0 * quality;
    std::array<std::array<double, 64>, 2> q{};
    for (int i = 0; i < 64; ++i) {
        q[0][i] = std::max(1.0, std::floor((kLumaQ[i] * scale + 50.0) / 100.0));
        q[1][i] = std::max(1.0, std::floor((kChromaQ[i] * scale + 50.0) / 100.0));
    }
    std::array<std::array<double, 8>, 8> basis{};
    for (int u = 0; u < 8; ++u)
        for (int x = 0; x < 8; ++x)
            basis[u][x] = (u == 0 ? std::sqrt(1.0 / 8) : std::sqrt(2.0 / 8)) * std::cos((2 * x + 1) * u * kPi / 16);

    const int W = img.width, H = img.height;
    std::vector<double> ycc(static_cast<std::size_t>(W) * H * 3);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double r = img.at(x, y, 0) * 255, g = img.at(x, y, 1) * 255, b = img.at(x, y, 2) * 255;
            std::size_t o = (static_cast<std::size_t>(y) * W + x) * 3;
            ycc[o] = 0.299 * r + 0.587 * g + 0.114 * b - 128;
            ycc[o + 1] = -0.168736 * r - 0.331264 * g + 0.5 * b;
            ycc[o + 2] = 0.5 * r - 0.418688 * g - 0.081312 * b;
        }
    for (int by = 0; by < H; by += 8)
        for (int bx = 0; bx < W; bx += 8)
            for (int c = 0; c < 3; ++c) {
                std::array<double, 64> block{}, coef{};
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x) {
                        int sx = std::min(bx + x, W - 1), sy = std::min(by + y, H - 1);
                        block[y * 8 + x] = ycc[(static_cast<std::size_t>(sy) * W + sx) * 3 + c];
                    }
                const auto& table = q[c == 0 ? 0 : 1];
                // Separable 2-D DCT: rows then columns, and the inverse in reverse.
                std::array<double, 64> tmp{};
                for (int y = 0; y < 8; ++y)
                    for (int u = 0; u < 8; ++u) {
                        double acc = 0;
                        for (int x = 0; x < 8; ++x) acc += basis[u][x] * block[y * 8 + x];
                        tmp[y * 8 + u] = acc;
                    }
                for (int v = 0; v < 8; ++v)
                    for (int u = 0; u < 8; ++u) {
                        double acc = 0;
                        for (int y = 0; y < 8; ++y) acc += basis[v][y] * tmp[y * 8 + u];
                        coef[v * 8 + u] = std::round(acc / table[v * 8 + u]) * table[v * 8 + u];
                    }
                for (int y = 0; y < 8; ++y)
                    for (int u = 0; u < 8; ++u) {
                        double acc = 0;
                        for (int v = 0; v < 8; ++v) acc += basis[v][y] * coef[v * 8 + u];
                        tmp[y * 8 + u] = acc;
                    }
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x) {
                        if (bx + x >= W || by + y >= H) continue;
                        double acc = 0;
                        for (int u = 0; u < 8; ++u) acc += basis[u][x] * tmp[y * 8 + u];
                        ycc[(static_cast<std::size_t>(by + y) * W + bx + x) * 3 + c] = acc;
                    }
            }
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            std::size_t o = (static_cast<std::size_t>(y) * W + x) * 3;
            double Y = ycc[o] + 128, cb = ycc[o + 1], cr = ycc[o + 2];
            img.at(x, y, 0) = static_cast<float>((Y + 1.402 * cr) / 255);
            img.at(x, y, 1) = static_cast<float>((Y - 0.344136 * cb - 0.714136 * cr) / 255);
            img.at(x, y, 2) = static_cast<float>((Y + 1.772 * cb) / 255);
        }
}

}  // namespace

FloatImage augmentImage(const FloatImage& img, const AugmentConfig& cfg, std::uint64_t seed) {
    const double s = std::clamp(cfg.severity, 0.0, 1.0);
    if (s == 0.0) return img;

    // All parameters are drawn up front so the stream layout never depends on the image.
    Rng rng(splitmix64(seed));
    const double areaKeep = 1.0 - rng.uniform(0.0, cfg.maxCropLoss * s);
    const double logAspect = rng.uniform(-cfg.maxAspectLog * s, cfg.maxAspectLog * s);
    const double ox = rng.uniform(), oy = rng.uniform();
    const double angle = rng.uniform(-cfg.maxRotationDeg * s, cfg.maxRotationDeg * s);
    const double brightness = 1.0 + rng.uniform(-cfg.maxBrightness * s, cfg.maxBrightness * s);
    const double contrast = 1.0 + rng.uniform(-cfg.maxContrast * s, cfg.maxContrast * s);
    const double saturation = 1.0 + rng.uniform(-cfg.maxSaturation * s, cfg.maxSaturation * s);
    const double hue = rng.uniform(-cfg.maxHueDeg * s, cfg.maxHueDeg * s);
    const double sigma = rng.uniform(0.0, cfg.maxBlurSigma * s);
    const double quality = 100.0 - rng.uniform(0.0, cfg.maxJpegLoss * s);
    const double noise = rng.uniform(0.0, cfg.maxNoiseSigma * s);

    FloatImage out = resizedCrop(img, areaKeep, logAspect, ox, oy);
    out = rotate(out, angle);
    colorJitter(out, brightness, contrast, saturation, hue);
    if (sigma >= 0.1) out = gaussianBlur(out, sigma);
    if (quality < 98.0) jpegQuantize(out, quality);
    for (auto& v : out.data) v = std::clamp(v + static_cast<float>(noise * rng.normal()), 0.0f, 1.0f);
    return out;
}

Patch augment(const Patch& patch, const AugmentConfig& config, std::uint64_t seed) {
    Patch out = patch;
    out.pixels = augmentImage(patch.pixels, config, seed);
    return out;
}

}  // namespace ekila
