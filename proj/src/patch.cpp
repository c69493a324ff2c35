#include "ekila/patch.hpp"

#include <algorithm>

namespace ekila {

int slotScale(int slot) {
    if (slot == 0) return 1;
    if (slot >= 1 && slot <= 4) return 2;
    if (slot >= 5 && slot <= 20) return 4;
    fail(ErrorCode::InvalidArgument, "slot out of range: " + std::to_string(slot));
}

Rect slotRect(int slot, int width, int height) {
    const int n = slotScale(slot);
    if (n == 1) return Rect{0, 0, width, height};
    const int index = slot - (n == 2 ? 1 : 5);
    const int row = index / n;
    const int col = index % n;
    const int tw = width / n;
    const int th = height / n;
    Rect r;
    r.x = col * tw;
    r.y = row * th;
    r.w = col == n - 1 ? width - r.x : tw;
    r.h = row == n - 1 ? height - r.y : th;
    return r;
}

Patch makePatch(const Image& img, const std::string& imageId, int slot, int inputSize) {
    if (img.width < kMinImageSide || img.height < kMinImageSide)
        fail(ErrorCode::ImageTooSmall, "image " + imageId + " is smaller than 8x8");
    Patch p;
    p.imageId = imageId;
    p.slot = slot;
    p.rect = slotRect(slot, img.width, img.height);
    p.pixels = resizeBilinear(toFloat(crop(img, p.rect)), inputSize, inputSize);
    return p;
}

std::vector<Patch> patchify(const Image& img, const std::string& imageId, int inputSize) {
    std::vector<Patch> out;
    out.reserve(kPatchesPerImage);
    for (int slot = 0; slot < kPatchesPerImage; ++slot) out.push_back(makePatch(img, imageId, slot, inputSize));
    return out;
}

Corpus loadCorpusDir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) fail(ErrorCode::Io, "corpus directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".png" || ext == ".ppm")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    Corpus out;
    for (const auto& f : files) {
        const std::string id = f.stem().string();
        if (!out.empty() && out.back().id == id) fail(ErrorCode::InvalidArgument, "duplicate image id in corpus: " + id);
        out.push_back(CorpusImage{id, loadImage(f)});
    }
    return out;
}

void saveCorpusDir(const std::filesystem::path& dir, const Corpus& corpus) {
    for (const auto& item : corpus) saveImage(dir / (item.id + ".png"), item.image);
}

}  // namespace ekila
