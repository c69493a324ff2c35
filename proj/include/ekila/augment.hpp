#pragma once

#include "ekila/patch.hpp"

namespace ekila {

/// Every operation's magnitude scales linearly with severity in [0, 1]; severity 0
/// is the identity. Maxima below are the magnitudes at severity 1.
struct AugmentConfig {
    double severity = 0.0;
    double maxCropLoss = 0.5;        // fraction of area removed by random resized crop
    double maxAspectLog = 0.3;       // |log aspect ratio| of the crop
    double maxRotationDeg = 30.0;
    double maxBrightness = 0.4;
    double maxContrast = 0.4;
    double maxSaturation = 0.4;
    double maxHueDeg = 30.0;
    double maxBlurSigma = 1.5;
    double maxJpegLoss = 85.0;       // quality = 100 - U(0, maxJpegLoss * severity)
    double maxNoiseSigma = 0.06;

    static AugmentConfig mild() { return AugmentConfig{.severity = 0.15}; }
    static AugmentConfig strong() { return AugmentConfig{.severity = 0.6}; }
    static AugmentConfig max() { return AugmentConfig{.severity = 1.0}; }
};

/// Random resized crop, rotation, colour jitter, Gaussian blur, JPEG-style block
/// quantisation and additive Gaussian noise, in that order. Deterministic in seed.
FloatImage augmentImage(const FloatImage& img, const AugmentConfig& config, std::uint64_t seed);
Patch augment(const Patch& patch, const AugmentConfig& config, std::uint64_t seed);

}  // namespace ekila
