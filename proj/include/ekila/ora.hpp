#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ekila/ledger.hpp"
#include "ekila/manifest.hpp"

namespace ekila {

/// Content reachable through NFT URIs. Content at a URI is mutable, which is
/// exactly what the attribution leg of the ORA check guards against.
class AssetStore {
public:
    AssetStore() = default;
    explicit AssetStore(std::filesystem::path dir);

    void put(const std::string& uri, Bytes content);
    std::optional<Bytes> get(const std::string& uri) const;

private:
    std::filesystem::path fileFor(const std::string& uri) const;

    std::optional<std::filesystem::path> dir_;
    std::map<std::string, Bytes> content_;
};

std::string assetUri(const Digest256& contentHash);

struct CreatorIdentity {
    std::string name;
    crypto::KeyPair key;

    Address wallet() const { return key.address(); }
};

struct OraOptions {
    std::string dltNamespace = "eip155";
    std::string chainId = "5";
    /// Also record the wallet statically in the manifest creator block.
    bool staticWallet = true;
    std::vector<Assertion> extraAssertions;
    std::vector<IngredientRef> ingredients;
};

struct OraMintResult {
    Manifest manifest;
    ledger::NftKey nft;
    std::string uri;
};

/// Six-step ORA creation: manifest with mint-address and ARA assertions, NFT mint,
/// transfer to the Rights contract, GUID binding. All-or-nothing: on any failure the
/// ledger, manifest store and asset store are left exactly as they were.
/// `minter` is the wallet sending the mint transaction; honest flows pass signer.wallet().
OraMintResult mintOraAsset(ledger::Ledger& ledger, ManifestStore& store, AssetStore& assets, ByteView asset,
                           const CreatorIdentity& signer, const Address& minter, const Address& rightsContract,
                           const Address& nftContract, GuidSource& guids, const OraOptions& options = {});

inline OraMintResult mintOraAsset(ledger::Ledger& ledger, ManifestStore& store, AssetStore& assets, ByteView asset,
                                  const CreatorIdentity& creator, const Address& rightsContract,
                                  const Address& nftContract, GuidSource& guids, const OraOptions& options = {}) {
    return mintOraAsset(ledger, store, assets, asset, creator, creator.wallet(), rightsContract, nftContract, guids,
                        options);
}

struct OraCheck {
    bool ownershipOk = false;
    bool rightsOk = false;
    bool attributionOk = false;
    bool copyMintDetected = false;
    std::vector<std::string> notes;
};

/// Throws AraResolutionFailure when the manifest carries no ARA.
OraCheck verifyOraTriangle(const Manifest& m, const ledger::LedgerState& state, const ManifestStore& store,
                           const AssetStore& assets);

/// Payable wallet for a manifest: ARA -> NFT owner -> Rights contract creator when an
/// ARA is present, otherwise the static creator wallet.
Address extractWalletRoute(const Manifest& m, const ledger::LedgerState& state);

ledger::NftKey resolveAra(const AraUri& ara, const ledger::LedgerState& state);

}  // namespace ekila
