#include "ekila/ora.hpp"

#include "ekila/binio.hpp"

namespace ekila {

AssetStore::AssetStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(*dir_);
}

std::filesystem::path AssetStore::fileFor(const std::string& uri) const {
    return *dir_ / (crypto::sha256(uri).hex() + ".bin");
}

void AssetStore::put(const std::string& uri, Bytes content) {
    if (dir_) binio::writeFile(fileFor(uri), content);
    content_[uri] = std::move(content);
}

std::optional<Bytes> AssetStore::get(const std::string& uri) const {
    if (auto it = content_.find(uri); it != content_.end()) return it->second;
    if (dir_ && std::filesystem::exists(fileFor(uri))) return binio::readFile(fileFor(uri));
    return std::nullopt;
}

std::string assetUri(const Digest256& contentHash) { return "ekila-asset://" + contentHash.hex(); }

namespace {

void require(const ledger::TxOutcome& out, std::string_view step) {
    if (!out.applied) fail(out.error.value_or(ErrorCode::InvalidArgument), std::string(step) + ": " + out.message);
}

}  // namespace

OraMintResult mintOraAsset(ledger::Ledger& ledger, ManifestStore& store, AssetStore& assets, ByteView asset,
                           const CreatorIdentity& signer, const Address& minter, const Address& rightsContract,
                           const Address& nftContract, GuidSource& guids, const OraOptions& options) {
    const ledger::Ledger before = ledger;
    try {
        const auto& state = ledger.state();
        if (state.rightsContract(rightsContract).creator != minter)
            fail(ErrorCode::Unauthorized, "minting wallet does not control the Rights contract");
        const std::uint64_t predictedId = state.nftContract(nftContract).nextId;

        // 1-2: manifest with the minting address and an ARA naming the NFT about to be minted.
        std::vector<Assertion> assertions = options.extraAssertions;
        assertions.push_back(makeMintAddressAssertion(signer.wallet()));
        assertions.push_back(makeAraAssertion(AraUri{options.dltNamespace, options.chainId, nftContract, predictedId}));
        CreatorInfo info{signer.name, options.staticWallet ? std::optional<Address>(signer.wallet()) : std::nullopt};
        Manifest m = buildManifest(asset, info, std::move(assertions), options.ingredients, signer.key, store, guids);
        const std::string uri = assetUri(m.contentHash);

        // 3: mint.
        auto minted = ledger.execute(minter, ledger::MintNft{nftContract, uri});
        require(minted, "mint NFT");
        if (*minted.id != predictedId) fail(ErrorCode::InvalidArgument, "NFT id differs from the ARA reservation");
        const ledger::NftKey key{nftContract, predictedId};
        // 4: hand ownership to the Rights contract.
        require(ledger.execute(minter, ledger::TransferNft{nftContract, rightsContract, predictedId}),
                "transfer NFT to Rights contract");
        // 5: bind the manifest GUID. Rights become issuable (6) once this is stored.
        require(ledger.execute(minter, ledger::RegisterAsset{rightsContract, key, m.guid}), "register manifest");

        store.insert(m);
        try {
            assets.put(uri, Bytes(asset.begin(), asset.end()));
        } catch (...) {
            store.erase(m.guid);
            throw;
        }
        return OraMintResult{std::move(m), key, uri};
    } catch (...) {
        ledger = before;
        throw;
    }
}

ledger::NftKey resolveAra(const AraUri& ara, const ledger::LedgerState& state) {
    ledger::NftKey key{ara.contract, ara.nftId};
    try {
        state.token(key);
    } catch (const Error& e) {
        fail(ErrorCode::AraResolutionFailure, "ARA " + formatAraUri(ara) + " does not resolve: " + e.what());
    }
    return key;
}

OraCheck verifyOraTriangle(const Manifest& m, const ledger::LedgerState& state, const ManifestStore& store,
                           const AssetStore& assets) {
    std::optional<AraUri> ara;
    try {
        ara = m.assetReference();
    } catch (const Error& e) {
        fail(ErrorCode::AraResolutionFailure, e.what());
    }
    if (!ara) fail(ErrorCode::AraResolutionFailure, "manifest " + m.guid.str() + " carries no ARA");

    OraCheck check;
    const ledger::NftToken* token = nullptr;
    const ledger::NftKey key{ara->contract, ara->nftId};
    try {
        token = &state.token(key);
    } catch (const Error& e) {
        check.notes.push_back(std::string("ownership: ") + e.what());
    }

    if (token) {
        check.ownershipOk = state.isRightsContract(token->owner);
        if (!check.ownershipOk) check.notes.push_back("ownership: NFT is not held by a Rights contract");
    }
    if (check.ownershipOk) {
        const auto& rc = state.rightsContract(token->owner);
        auto it = rc.manifestGuids.find(key);
        check.rightsOk = it != rc.manifestGuids.end() && it->second == m.guid;
        if (!check.rightsOk) check.notes.push_back("rights: Rights contract does not bind this manifest GUID");
    }

    if (token) {
        std::optional<Bytes> content = assets.get(token->uri);
        VerificationResult vr = content ? verifyManifest(m, store, ByteView(*content)) : verifyManifest(m, store);
        bool ok = vr.valid && content.has_value();
        if (!content) check.notes.push_back("attribution: no content at " + token->uri);
        for (const auto& f : vr.failures)
            check.notes.push_back("attribution: " + std::string(verificationFailureName(f.kind)) + " " + f.detail);
        std::optional<Address> declared = m.declaredMinter();
        if (!declared || *declared != token->mintedBy) {
            ok = false;
            check.notes.push_back("attribution: declared minter differs from NFT minter " + token->mintedBy.str());
        }
        if (crypto::addressOf(m.signer) != token->mintedBy) {
            ok = false;
            check.notes.push_back("attribution: manifest signer is not the NFT minter");
        }
        check.attributionOk = ok;
    }
    check.copyMintDetected = !check.attributionOk && check.ownershipOk && check.rightsOk;
    return check;
}

Address extractWalletRoute(const Manifest& m, const ledger::LedgerState& state) {
    std::optional<AraUri> ara;
    try {
        ara = m.assetReference();
    } catch (const Error& e) {
        fail(ErrorCode::AraResolutionFailure, e.what());
    }
    if (ara) {
        const ledger::NftKey key = resolveAra(*ara, state);
        const Address owner = state.ownerOf(key);
        if (state.isRightsContract(owner)) return state.rightsContract(owner).creator;
        return owner;
    }
    if (m.creator.wallet) return *m.creator.wallet;
    fail(ErrorCode::NoPaymentRoute, "manifest " + m.guid.str() + " has neither an ARA nor a creator wallet");
}

}  // namespace ekila
