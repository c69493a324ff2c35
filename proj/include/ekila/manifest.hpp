#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ekila/common.hpp"
#include "ekila/crypto.hpp"

namespace ekila {

enum class AssertionKind { CreatorInfo, AssetReference, TrainingData, GeneratedBy, Custom };
enum class IngredientRole { TrainingImage, GenModel, Archive, Other };

std::string_view assertionKindName(AssertionKind kind);
std::string_view ingredientRoleName(IngredientRole role);

using PayloadValue = std::variant<std::string, std::int64_t, double>;
using Payload = std::map<std::string, PayloadValue>;

struct Assertion {
    AssertionKind kind = AssertionKind::Custom;
    Payload payload;

    bool operator==(const Assertion&) const = default;
};

struct IngredientRef {
    Guid manifestGuid;
    IngredientRole role = IngredientRole::Other;

    bool operator==(const IngredientRef&) const = default;
};

struct CreatorInfo {
    std::string name;
    std::optional<Address> wallet;

    bool operator==(const CreatorInfo&) const = default;
};

/// `c2pa-nft://<namespace>:<chain>:<contract>/<nftId>`; namespace and chain follow CAIP-2.
struct AraUri {
    std::string dltNamespace;
    std::string chainId;
    Address contract;
    std::uint64_t nftId = 0;

    bool operator==(const AraUri&) const = default;
};

AraUri parseAraUri(std::string_view text);
/// Canonical form: contract and nftId as 0x-prefixed minimal lowercase hex.
std::string formatAraUri(const AraUri& uri);

struct Manifest {
    static constexpr int kVersion = 1;

    Guid guid;
    CreatorInfo creator;
    std::vector<Assertion> assertions;
    std::vector<IngredientRef> ingredients;
    Digest256 contentHash;
    crypto::PublicKey signer;
    crypto::Signature signature;

    bool operator==(const Manifest&) const = default;

    /// The ARA carried by the first AssetReference assertion, if any.
    std::optional<AraUri> assetReference() const;
    /// Wallet declared (before minting) as the address the asset is minted from.
    std::optional<Address> declaredMinter() const;
};

/// Assertion helpers for the payload conventions this library writes.
Assertion makeAraAssertion(const AraUri& uri);
Assertion makeMintAddressAssertion(const Address& minter);
Assertion makeGeneratedByAssertion(const Guid& model, std::string_view description);

/// Canonical JSON: sorted keys, no whitespace, lowercase hex.
std::string serializeManifest(const Manifest& m);
/// Strict parse; rejects unknown versions and any input that is not byte-identical
/// to the canonical serialization of the parsed value.
Manifest deserializeManifest(std::string_view json);
/// Bytes covered by the signature: the canonical serialization with the signature zeroed.
Bytes signingBytes(const Manifest& m);

/// GUID-keyed manifest collection, optionally mirrored to `<dir>/<guid>.json`.
/// Reads are safe from many threads; writes must be serialized by the caller.
class ManifestStore {
public:
    ManifestStore() = default;
    explicit ManifestStore(std::filesystem::path dir);

    /// Loads every `<guid>.json` under dir.
    static ManifestStore open(const std::filesystem::path& dir);

    void insert(const Manifest& m);
    void erase(const Guid& guid);
    const Manifest* find(const Guid& guid) const;
    bool contains(const Guid& guid) const { return find(guid) != nullptr; }
    std::size_t size() const { return manifests_.size(); }
    const std::map<Guid, Manifest>& all() const { return manifests_; }

private:
    std::optional<std::filesystem::path> dir_;
    std::map<Guid, Manifest> manifests_;
};

Manifest buildManifest(ByteView asset, const CreatorInfo& creator, std::vector<Assertion> assertions,
                       std::vector<IngredientRef> ingredients, const crypto::KeyPair& signingKey,
                       const ManifestStore& store, GuidSource& guids);

enum class VerificationFailureKind { BadSignature, ContentHashMismatch, DanglingIngredient, MalformedAssertion };
std::string_view verificationFailureName(VerificationFailureKind kind);

struct VerificationFailure {
    VerificationFailureKind kind;
    std::string detail;
};

struct VerificationResult {
    bool valid = true;
    std::vector<VerificationFailure> failures;

    bool has(VerificationFailureKind kind) const;
};

/// Checks signature, ingredient resolution, assertion well-formedness and, when
/// the asset bytes are supplied, the content hash.
VerificationResult verifyManifest(const Manifest& m, const ManifestStore& store,
                                  std::optional<ByteView> asset = std::nullopt);

struct ProvenanceNode {
    Manifest manifest;
    int depth = 0;
    std::optional<Guid> parent;
    std::optional<IngredientRole> role;
};

struct ProvenanceEdge {
    Guid from;
    Guid to;
    IngredientRole role;
};

struct ProvenanceGraph {
    std::vector<ProvenanceNode> nodes;  // breadth-first, children in GUID order
    std::vector<ProvenanceEdge> edges;
    std::vector<Guid> missing;          // referenced but absent from the store

    const ProvenanceNode* find(const Guid& guid) const;
};

/// Transitive closure of ingredients from root. Throws CycleDetected (with the
/// cycle path in the message) when the reachable graph is cyclic.
ProvenanceGraph traverseProvenance(const Manifest& root, const ManifestStore& store);

std::filesystem::path sidecarPath(const std::filesystem::path& asset);
void writeSidecar(const std::filesystem::path& asset, const Manifest& m);
Manifest readSidecar(const std::filesystem::path& asset);

}  // namespace ekila
