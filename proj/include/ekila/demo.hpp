#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ekila/settlement.hpp"
#include "ekila/toydata.hpp"

namespace ekila {

/// Generator-provenance walk over a small corpus: creators ORA-mint every image, a
/// model manifest lists them all as training ingredients, generated composites carry
/// the model as ingredient, and royalties flow from attribution to creator wallets.
struct DemoConfig {
    int creators = 10;
    int queries = 10;
    ComposeConfig compose{.minSources = 2, .maxSources = 6, .severity = 0.0};
    ledger::Amount baseRoyalty = 1000;
    ApportionConfig attribution;
    IndexParams index{.nlist = 64, .m = 16, .nprobe = 16};
    EncoderTrainConfig encoder;
    VerifierTrainConfig verifier;
    std::uint64_t seed = 7;
    /// When set, the store, assets, queries, reports and ledger files are written here.
    std::filesystem::path workdir;
};

/// Pre-trained pieces; anything left null is trained or built from the corpus.
struct DemoModels {
    const PatchEncoder* encoder = nullptr;
    const VerifierModel* verifier = nullptr;
    const IvfPqIndex* index = nullptr;
};

struct DemoQueryResult {
    std::string queryId;
    Guid manifest;
    CompositeTruth truth;
    CreditReport report;
    SettlementResult settlement;
    double recallAt5 = 0;
    std::size_t trainingManifests = 0;    // found by traversal from the generated manifest
    std::vector<std::string> mismatches;  // creator name / wallet disagreements with the registry
    bool payoutsExact = true;             // every payout equals round(base * weight)
    ledger::Amount escrowDecrease = 0;
};

struct DemoResult {
    std::vector<DemoQueryResult> queries;
    std::map<std::string, Guid> imageManifests;
    ledger::Amount totalPaid = 0;
    ledger::Amount totalEscrowDecrease = 0;
    bool conservationOk = false;
    bool replayOk = false;
    Digest256 ledgerDigest;

    bool ok() const;
};

DemoResult runMnistScaleDemo(const Corpus& corpus, const DemoConfig& config, const DemoModels& models = {},
                             std::ostream* log = nullptr);

std::string demoSummaryJson(const DemoResult& result);

}  // namespace ekila
