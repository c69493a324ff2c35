#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ekila/apportion.hpp"
#include "ekila/ora.hpp"

namespace ekila {

struct SettlementItem {
    std::string imageId;
    double royaltyWeight = 0;
    bool ok = false;
    std::optional<ErrorCode> error;
    std::string message;
    std::optional<Address> payee;
    std::optional<ledger::PayoutRecord> payout;
};

struct SettlementResult {
    std::vector<SettlementItem> items;
    ledger::Amount totalPaid = 0;

    std::size_t failures() const;
};

/// Custom assertion naming the corpus image a manifest describes, so an attribution
/// report's image ids can be mapped back to manifests found in a provenance graph.
Assertion makeAssetNameAssertion(const std::string& name);
std::optional<std::string> assetName(const Manifest& m);
/// name -> manifest GUID over every manifest carrying an asset-name assertion.
/// Two different manifests claiming one name raise InvalidArgument.
std::map<std::string, Guid> indexByAssetName(const std::vector<const Manifest*>& manifests);
std::map<std::string, Guid> indexByAssetName(const ManifestStore& store);
std::map<std::string, Guid> indexByAssetName(const ProvenanceGraph& graph);

/// For every image with a royalty weight: manifest -> wallet route -> a right held by
/// payer bound to that manifest -> ExerciseRight. Each image settles or fails on its own.
SettlementResult settleRoyalties(const CreditReport& report, const std::map<std::string, Guid>& imageManifests,
                                 const ManifestStore& store, ledger::Ledger& ledger, const Address& payer);

/// First right (lowest contract, then right id) held by holder and bound to manifest.
std::optional<std::pair<Address, std::uint64_t>> findRight(const ledger::LedgerState& state, const Address& holder,
                                                           const Guid& manifest);

}  // namespace ekila
