#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ekila/embedding_file.hpp"
#include "ekila/patch.hpp"

namespace ekila {

/// Procedural images: two-colour gradient, a sinusoidal texture and 8-14 filled shapes.
/// Ids are "<prefix>0000", "<prefix>0001", ...
Corpus generateToyCorpus(int count, int size, std::uint64_t seed, const std::string& prefix = "toy-");

/// Nine renderings of one object on different backgrounds and positions.
Corpus generateConceptCorpus(int size, std::uint64_t seed, int count = 9, const std::string& prefix = "concept-");
/// A fresh rendering of the same concept, as a fine-tuned generator might produce.
Image renderConcept(int size, std::uint64_t conceptSeed, std::uint64_t variantSeed);

struct TileProvenance {
    Rect region;  // in the query
    std::string sourceId;
    int sourceSlot = 0;
};

struct CompositeTruth {
    static constexpr int kVersion = 1;

    std::string queryId;
    std::vector<std::string> sources;  // distinct, in sampling order
    std::vector<TileProvenance> tiles;
    double severity = 0;
};

struct ComposeConfig {
    int minSources = 2;
    int maxSources = 6;
    double severity = 0.0;  // per-tile augmentation; 0 leaves source pixels untouched
};

struct CompositeQuery {
    Image image;
    CompositeTruth truth;
};

/// Quadrants are filled with random quadrant tiles of the first min(n, 4) sources
/// (cycling when n < 4); sources beyond the fourth each overwrite one H/4 cell with one
/// of their own H/4 tiles. The result has the size of the first source.
CompositeQuery composeQuery(const Corpus& corpus, const ComposeConfig& config, std::uint64_t seed,
                            const std::string& queryId);

std::string compositeTruthJson(const CompositeTruth& truth);
CompositeTruth parseCompositeTruth(std::string_view json);
std::filesystem::path truthPath(const std::filesystem::path& query);

/// |top-K of ranking ∩ truth| / min(K, |truth|).
double sourceRecallAtK(const std::vector<std::string>& ranking, const std::vector<std::string>& truth, int k);

/// Unit vectors drawn around `clusters` random centres, each cluster spread along its
/// own `intrinsicDim`-dimensional subspace plus isotropic noise. Ids are "vec-<cluster>"
/// and slots are 0; records are shuffled.
std::vector<EmbeddingRecord> clusteredVectors(int count, int dim, int clusters, int intrinsicDim, double spread,
                                              double noise, std::uint64_t seed);

}  // namespace ekila
