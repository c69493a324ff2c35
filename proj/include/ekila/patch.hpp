#pragma once

#include <string>
#include <vector>

#include "ekila/image.hpp"

namespace ekila {

inline constexpr int kPatchesPerImage = 21;
inline constexpr int kEncoderInputSize = 64;
inline constexpr int kMinImageSide = 8;

/// Slot layout:
///   0        whole image
///   1..4     H/2 x W/2 tiles, row-major
///   5..20    H/4 x W/4 tiles, row-major
/// Remainder pixels go to the last tile row/column at each scale.
Rect slotRect(int slot, int width, int height);
/// Grid factor (1, 2 or 4) of a slot.
int slotScale(int slot);

struct Patch {
    std::string imageId;
    int slot = 0;
    Rect rect;
    FloatImage pixels;  // resampled to the encoder input size
};

std::vector<Patch> patchify(const Image& img, const std::string& imageId, int inputSize = kEncoderInputSize);
Patch makePatch(const Image& img, const std::string& imageId, int slot, int inputSize = kEncoderInputSize);

struct CorpusImage {
    std::string id;
    Image image;
};
using Corpus = std::vector<CorpusImage>;

/// Every .png/.ppm file in dir, sorted by file name; the id is the file stem.
Corpus loadCorpusDir(const std::filesystem::path& dir);
void saveCorpusDir(const std::filesystem::path& dir, const Corpus& corpus);

}  // namespace ekila
