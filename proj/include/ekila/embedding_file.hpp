#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ekila/encoder.hpp"

namespace ekila {

struct EmbeddingRecord {
    std::string imageId;
    int slot = 0;
    Embedding values;
};

/// Layout: "EKEMB" magic, u32 version, u32 dim, u64 count, then per row a
/// u32-length-prefixed UTF-8 image id, a u8 slot and dim little-endian f32 values.
inline constexpr std::uint32_t kEmbeddingFileVersion = 1;

void writeEmbeddingFile(const std::filesystem::path& path, const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> readEmbeddingFile(const std::filesystem::path& path);

/// All 21 patches of every corpus image, in corpus then slot order.
std::vector<EmbeddingRecord> embedCorpus(const PatchEncoder& encoder, const Corpus& corpus);

}  // namespace ekila
