#include "ekila/settlement.hpp"

namespace ekila {

namespace {
constexpr const char* kAssetNameType = "ekila.asset-name";
}

Assertion makeAssetNameAssertion(const std::string& name) {
    return Assertion{AssertionKind::Custom, {{"type", std::string(kAssetNameType)}, {"name", name}}};
}

std::optional<std::string> assetName(const Manifest& m) {
    for (const auto& a : m.assertions) {
        if (a.kind != AssertionKind::Custom) continue;
        const auto t = a.payload.find("type");
        const auto n = a.payload.find("name");
        if (t == a.payload.end() || n == a.payload.end()) continue;
        const auto* type = std::get_if<std::string>(&t->second);
        const auto* name = std::get_if<std::string>(&n->second);
        if (type && name && *type == kAssetNameType) return *name;
    }
    return std::nullopt;
}

std::map<std::string, Guid> indexByAssetName(const std::vector<const Manifest*>& manifests) {
    std::map<std::string, Guid> out;
    for (const Manifest* m : manifests) {
        const auto name = assetName(*m);
        if (!name) continue;
        const auto [it, fresh] = out.emplace(*name, m->guid);
        if (!fresh && it->second != m->guid)
            fail(ErrorCode::InvalidArgument, "asset name " + *name + " is claimed by two manifests");
    }
    return out;
}

std::map<std::string, Guid> indexByAssetName(const ManifestStore& store) {
    std::vector<const Manifest*> ms;
    for (const auto& [g, m] : store.all()) ms.push_back(&m);
    return indexByAssetName(ms);
}

std::map<std::string, Guid> indexByAssetName(const ProvenanceGraph& graph) {
    std::vector<const Manifest*> ms;
    for (const auto& n : graph.nodes) ms.push_back(&n.manifest);
    return indexByAssetName(ms);
}

std::size_t SettlementResult::failures() const {
    std::size_t n = 0;
    for (const auto& i : items) n += i.ok ? 0 : 1;
    return n;
}

std::optional<std::pair<Address, std::uint64_t>> findRight(const ledger::LedgerState& state, const Address& holder,
                                                           const Guid& manifest) {
    for (const auto& [addr, rc] : state.rightsContracts)
        for (const auto& [id, right] : rc.rights)
            if (right.holder == holder && right.boundManifest == manifest) return std::make_pair(addr, id);
    return std::nullopt;
}

SettlementResult settleRoyalties(const CreditReport& report, const std::map<std::string, Guid>& imageManifests,
                                 const ManifestStore& store, ledger::Ledger& ledger, const Address& payer) {
    SettlementResult result;
    for (const auto& [imageId, weight] : report.royaltyWeights) {
        SettlementItem item;
        item.imageId = imageId;
        item.royaltyWeight = weight;
        try {
            const auto mg = imageManifests.find(imageId);
            if (mg == imageManifests.end()) fail(ErrorCode::NoPaymentRoute, "no manifest recorded for image " + imageId);
            const Manifest* m = store.find(mg->second);
            if (!m) fail(ErrorCode::NoPaymentRoute, "manifest " + mg->second.str() + " is not in the store");
            item.payee = extractWalletRoute(*m, ledger.state());
            const auto right = findRight(ledger.state(), payer, m->guid);
            if (!right) fail(ErrorCode::NoPaymentRoute, "payer holds no right bound to manifest " + m->guid.str());
            const Address creator = ledger.state().rightsContract(right->first).creator;
            if (creator != *item.payee)
                fail(ErrorCode::NoPaymentRoute,
                     "right pays " + creator.str() + " but the wallet route names " + item.payee->str());
            const auto outcome = ledger.execute(payer, ledger::ExerciseRight{right->first, right->second, weight});
            if (!outcome.applied) fail(outcome.error.value_or(ErrorCode::InvalidArgument), outcome.message);
            item.payout = outcome.payout;
            item.ok = true;
            result.totalPaid += outcome.payout->amount;
        } catch (const Error& e) {
            item.error = e.code();
            item.message = e.what();
        }
        result.items.push_back(std::move(item));
    }
    return result;
}

}  // namespace ekila
