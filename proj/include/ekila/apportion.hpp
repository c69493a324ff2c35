#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ekila/index.hpp"
#include "ekila/verifier.hpp"

namespace ekila {

struct ApportionConfig {
    double lambda = 0.7;  // verifier score threshold
    int topK = 30;        // retrieved patches per query patch
    int topM = 5;         // images sharing the royalty
    int nprobe = 0;       // 0 = index default
};

/// One retrieved corpus patch with its verifier score against query patch `slot`.
struct ScoredHit {
    RetrievalHit hit;
    double score = 0;
};

struct PatchRetrieval {
    int slot = 0;
    std::vector<ScoredHit> hits;
};

using ImageWeights = std::map<std::string, double>;

/// w_i = sum over hits of image i of max(score - lambda, 0). Images whose hits all
/// score at or below lambda are omitted.
ImageWeights computeWeights(const std::vector<ScoredHit>& hits, double lambda);
/// Per query-patch weights keyed by slot.
std::map<int, ImageWeights> computeWeights(const std::vector<PatchRetrieval>& retrievals, double lambda);

/// w_i / sum_k w_k; empty when no weight is positive.
ImageWeights creditPerPatch(const ImageWeights& weights);

struct VerifiedMatch {
    int querySlot = 0;
    std::string imageId;
    int matchSlot = 0;
    double similarity = 0;
    double score = 0;
};

struct CreditReport {
    static constexpr int kVersion = 1;

    std::string queryImageId;
    std::map<int, ImageWeights> perPatchCredits;  // only patches with a verified match
    ImageWeights imageCredits;
    ImageWeights royaltyWeights;
    std::vector<VerifiedMatch> matches;
    ApportionConfig settings;

    /// Images by descending credit, ties by id.
    std::vector<std::string> ranking() const;
    double totalCredit() const;
};

/// imageCredits = sum of per-patch credits; royaltyWeights normalise the top-M images.
CreditReport aggregateCredit(const std::map<int, ImageWeights>& perPatchCredits, int topM);

std::string creditReportJson(const CreditReport& report);
CreditReport parseCreditReport(std::string_view json);
void writeCreditReport(const std::filesystem::path& path, const CreditReport& report);
CreditReport readCreditReport(const std::filesystem::path& path);
/// Horizontal bar chart of royalty weights and raw credits.
std::string creditPlotSvg(const CreditReport& report);

/// Pooled verifier descriptors of corpus patches, computed on first use. Not thread-safe.
class CorpusPatchSource {
public:
    CorpusPatchSource(const Corpus& corpus, const PatchEncoder& encoder, const VerifierModel& verifier);
    const Eigen::MatrixXf& pooled(const std::string& imageId, int slot);
    bool contains(const std::string& imageId) const { return images_.contains(imageId); }

private:
    std::map<std::string, const Image*> images_;
    const PatchEncoder& encoder_;
    const VerifierModel& verifier_;
    std::map<std::pair<std::string, int>, Eigen::MatrixXf> cache_;
};

/// Patchify, embed, retrieve top-K per patch, verify, then apportion credit.
CreditReport attributeImage(const Image& query, const std::string& queryId, const IvfPqIndex& index,
                            const PatchEncoder& encoder, const VerifierModel& verifier, CorpusPatchSource& source,
                            const ApportionConfig& config);

}  // namespace ekila
