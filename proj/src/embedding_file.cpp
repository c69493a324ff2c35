#include "ekila/embedding_file.hpp"

#include "ekila/binio.hpp"

namespace ekila {

void writeEmbeddingFile(const std::filesystem::path& path, const std::vector<EmbeddingRecord>& records) {
    const int dim = records.empty() ? kEmbeddingDim : static_cast<int>(records.front().values.size());
    binio::Writer w;
    w.magic("EKEMB");
    w.u32(kEmbeddingFileVersion);
    w.u32(static_cast<std::uint32_t>(dim));
    w.u64(records.size());
    for (const auto& r : records) {
        if (r.values.size() != dim) fail(ErrorCode::DimensionMismatch, "embedding rows differ in dimension");
        if (r.slot < 0 || r.slot > 255) fail(ErrorCode::InvalidArgument, "slot does not fit in a byte");
        w.str(r.imageId);
        w.u8(static_cast<std::uint8_t>(r.slot));
        w.floats(std::span<const float>(r.values.data(), r.values.size()));
    }
    binio::writeFile(path, w.bytes());
}

std::vector<EmbeddingRecord> readEmbeddingFile(const std::filesystem::path& path) {
    const Bytes data = binio::readFile(path);
    binio::Reader r(data);
    r.expectMagic("EKEMB");
    const auto version = r.u32();
    if (version != kEmbeddingFileVersion)
        fail(ErrorCode::UnsupportedVersion, "embedding file version " + std::to_string(version));
    const auto dim = static_cast<int>(r.u32());
    if (dim <= 0) fail(ErrorCode::Format, "embedding file has zero dimension");
    const auto count = r.u64();
    // Each row needs at least 5 + 4 * dim bytes; reject impossible counts before allocating.
    if (count > r.remaining() / (5 + 4 * static_cast<std::uint64_t>(dim)))
        fail(ErrorCode::Format, "embedding file is truncated");
    std::vector<EmbeddingRecord> out(count);
    for (auto& rec : out) {
        rec.imageId = r.str();
        rec.slot = r.u8();
        rec.values.resize(dim);
        for (int i = 0; i < dim; ++i) rec.values(i) = r.f32();
    }
    if (!r.atEnd()) fail(ErrorCode::Format, "trailing bytes in embedding file");
    return out;
}

std::vector<EmbeddingRecord> embedCorpus(const PatchEncoder& encoder, const Corpus& corpus) {
    std::vector<EmbeddingRecord> out;
    out.reserve(corpus.size() * kPatchesPerImage);
    for (const auto& item : corpus) {
        const std::vector<Patch> patches = patchify(item.image, item.id);
        const Eigen::MatrixXf e = encoder.embedBatch(patches);
        for (int s = 0; s < kPatchesPerImage; ++s) out.push_back(EmbeddingRecord{item.id, s, e.col(s)});
    }
    return out;
}

}  // namespace ekila
