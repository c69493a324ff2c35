#include "ekila/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include <nlohmann/json.hpp>

#include "ekila/binio.hpp"

namespace ekila {

using nlohmann::json;

namespace {

constexpr std::string_view kScheme = "c2pa-nft://";
constexpr std::string_view kFormat = "ekila.manifest";

bool isCaipNamespace(std::string_view s) {
    if (s.size() < 3 || s.size() > 8) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
    });
}

bool isCaipReference(std::string_view s) {
    if (s.empty() || s.size() > 32) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
    });
}

bool isLowerHex(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
    });
}

[[noreturn]] void malformed(std::string_view text, const std::string& why) {
    fail(ErrorCode::MalformedUri, "malformed ARA URI '" + std::string(text) + "': " + why);
}

template <class Enum, std::size_t N>
Enum enumFromName(const std::array<Enum, N>& values, std::string_view (*name)(Enum), std::string_view text) {
    for (Enum v : values)
        if (name(v) == text) return v;
    fail(ErrorCode::Format, "unknown enum value '" + std::string(text) + "'");
}

json payloadToJson(const Payload& payload) {
    json out = json::object();
    for (const auto& [key, value] : payload) {
        std::visit([&](const auto& v) { out[key] = v; }, value);
    }
    return out;
}

Payload payloadFromJson(const json& j) {
    if (!j.is_object()) fail(ErrorCode::Format, "assertion payload must be an object");
    Payload out;
    for (const auto& [key, value] : j.items()) {
        if (value.is_string()) out[key] = value.get<std::string>();
        else if (value.is_number_integer()) out[key] = value.get<std::int64_t>();
        else if (value.is_number_float()) out[key] = value.get<double>();
        else fail(ErrorCode::Format, "assertion payload values must be text or numbers");
    }
    return out;
}

json toJson(const Manifest& m, bool zeroSignature) {
    json j;
    j["format"] = kFormat;
    j["version"] = Manifest::kVersion;
    j["guid"] = m.guid.str();
    json creator;
    creator["name"] = m.creator.name;
    if (m.creator.wallet) creator["wallet"] = m.creator.wallet->str();
    j["creator"] = creator;
    j["assertions"] = json::array();
    for (const auto& a : m.assertions)
        j["assertions"].push_back({{"kind", assertionKindName(a.kind)}, {"payload", payloadToJson(a.payload)}});
    j["ingredients"] = json::array();
    for (const auto& ing : m.ingredients)
        j["ingredients"].push_back({{"guid", ing.manifestGuid.str()}, {"role", ingredientRoleName(ing.role)}});
    j["contentHash"] = m.contentHash.hex();
    j["signer"] = m.signer.hex();
    j["signature"] = zeroSignature ? crypto::Signature{}.hex() : m.signature.hex();
    return j;
}

constexpr std::array<AssertionKind, 5> kAssertionKinds{AssertionKind::CreatorInfo, AssertionKind::AssetReference,
                                                      AssertionKind::TrainingData, AssertionKind::GeneratedBy,
                                                      AssertionKind::Custom};
constexpr std::array<IngredientRole, 4> kRoles{IngredientRole::TrainingImage, IngredientRole::GenModel,
                                              IngredientRole::Archive, IngredientRole::Other};

void checkPayloadFinite(const Payload& payload) {
    for (const auto& [key, value] : payload)
        if (auto* d = std::get_if<double>(&value); d && !std::isfinite(*d))
            fail(ErrorCode::InvalidArgument, "non-finite payload value for '" + key + "'");
}

}  // namespace

std::string_view assertionKindName(AssertionKind kind) {
    switch (kind) {
        case AssertionKind::CreatorInfo: return "creatorInfo";
        case AssertionKind::AssetReference: return "assetReference";
        case AssertionKind::TrainingData: return "trainingData";
        case AssertionKind::GeneratedBy: return "generatedBy";
        case AssertionKind::Custom: return "custom";
    }
    return "custom";
}

std::string_view ingredientRoleName(IngredientRole role) {
    switch (role) {
        case IngredientRole::TrainingImage: return "trainingImage";
        case IngredientRole::GenModel: return "genModel";
        case IngredientRole::Archive: return "archive";
        case IngredientRole::Other: return "other";
    }
    return "other";
}

AraUri parseAraUri(std::string_view text) {
    if (text.substr(0, kScheme.size()) != kScheme) malformed(text, "missing c2pa-nft:// scheme");
    std::string_view rest = text.substr(kScheme.size());
    auto slash = rest.find('/');
    if (slash == std::string_view::npos) malformed(text, "missing /<nftId>");
    std::string_view chainPart = rest.substr(0, slash);
    std::string_view idPart = rest.substr(slash + 1);

    auto c1 = chainPart.find(':');
    auto c2 = c1 == std::string_view::npos ? c1 : chainPart.find(':', c1 + 1);
    if (c2 == std::string_view::npos || chainPart.find(':', c2 + 1) != std::string_view::npos)
        malformed(text, "expected <namespace>:<chain>:<contract>");
    AraUri uri;
    uri.dltNamespace = std::string(chainPart.substr(0, c1));
    uri.chainId = std::string(chainPart.substr(c1 + 1, c2 - c1 - 1));
    std::string_view contract = chainPart.substr(c2 + 1);
    if (!isCaipNamespace(uri.dltNamespace)) malformed(text, "bad namespace");
    if (!isCaipReference(uri.chainId)) malformed(text, "bad chain reference");
    if (contract.size() < 3 || contract.substr(0, 2) != "0x" || !isLowerHex(contract.substr(2)) ||
        contract.size() > 42)
        malformed(text, "contract must be 0x-prefixed lowercase hex of at most 160 bits");
    uri.contract = Address::parse(contract);

    if (idPart.size() >= 3 && idPart.substr(0, 2) == "0x") {
        std::string_view digits = idPart.substr(2);
        if (!isLowerHex(digits) || digits.size() > 16) malformed(text, "nftId must be 64-bit hex");
        uri.nftId = std::stoull(std::string(digits), nullptr, 16);
    } else if (!idPart.empty() && idPart.size() <= 19 &&
               std::all_of(idPart.begin(), idPart.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        uri.nftId = std::stoull(std::string(idPart));
    } else {
        malformed(text, "nftId must be decimal or 0x hex");
    }
    return uri;
}

std::string formatAraUri(const AraUri& uri) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(uri.nftId));
    return std::string(kScheme) + uri.dltNamespace + ":" + uri.chainId + ":" + uri.contract.compact() + "/" + buf;
}

std::optional<AraUri> Manifest::assetReference() const {
    for (const auto& a : assertions) {
        if (a.kind != AssertionKind::AssetReference) continue;
        auto it = a.payload.find("uri");
        if (it == a.payload.end()) continue;
        if (auto* s = std::get_if<std::string>(&it->second)) return parseAraUri(*s);
    }
    return std::nullopt;
}

std::optional<Address> Manifest::declaredMinter() const {
    for (const auto& a : assertions) {
        if (a.kind != AssertionKind::CreatorInfo) continue;
        auto it = a.payload.find("mintAddress");
        if (it == a.payload.end()) continue;
        if (auto* s = std::get_if<std::string>(&it->second)) return Address::parse(*s);
    }
    return std::nullopt;
}

Assertion makeAraAssertion(const AraUri& uri) {
    return Assertion{AssertionKind::AssetReference, {{"uri", formatAraUri(uri)}}};
}

Assertion makeMintAddressAssertion(const Address& minter) {
    return Assertion{AssertionKind::CreatorInfo, {{"mintAddress", minter.str()}}};
}

Assertion makeGeneratedByAssertion(const Guid& model, std::string_view description) {
    return Assertion{AssertionKind::GeneratedBy, {{"model", model.str()}, {"description", std::string(description)}}};
}

std::string serializeManifest(const Manifest& m) { return toJson(m, false).dump(); }

Bytes signingBytes(const Manifest& m) {
    std::string s = toJson(m, true).dump();
    return Bytes(s.begin(), s.end());
}

Manifest deserializeManifest(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorCode::Format, std::string("manifest is not valid JSON: ") + e.what());
    }
    Manifest m;
    try {
        if (!j.is_object() || j.value("format", "") != kFormat) fail(ErrorCode::Format, "not an ekila manifest");
        if (!j.at("version").is_number_integer()) fail(ErrorCode::Format, "manifest version must be an integer");
        if (j.at("version").get<int>() != Manifest::kVersion)
            fail(ErrorCode::UnsupportedVersion, "unsupported manifest version " + j.at("version").dump());
        if (j.size() != 9) fail(ErrorCode::Format, "unexpected manifest fields");
        m.guid = Guid::parse(j.at("guid").get<std::string>());
        const json& creator = j.at("creator");
        m.creator.name = creator.at("name").get<std::string>();
        if (creator.contains("wallet")) m.creator.wallet = Address::parse(creator.at("wallet").get<std::string>());
        for (const auto& a : j.at("assertions")) {
            Assertion as;
            as.kind = enumFromName(kAssertionKinds, assertionKindName, a.at("kind").get<std::string>());
            as.payload = payloadFromJson(a.at("payload"));
            m.assertions.push_back(std::move(as));
        }
        for (const auto& ing : j.at("ingredients")) {
            IngredientRef r;
            r.manifestGuid = Guid::parse(ing.at("guid").get<std::string>());
            r.role = enumFromName(kRoles, ingredientRoleName, ing.at("role").get<std::string>());
            m.ingredients.push_back(r);
        }
        m.contentHash = Digest256::fromHexString(j.at("contentHash").get<std::string>());
        m.signer = crypto::PublicKey::fromHexString(j.at("signer").get<std::string>());
        m.signature = crypto::Signature::fromHexString(j.at("signature").get<std::string>());
    } catch (const json::exception& e) {
        fail(ErrorCode::Format, std::string("malformed manifest: ") + e.what());
    }
    if (serializeManifest(m) != text) fail(ErrorCode::Format, "manifest is not in canonical form");
    return m;
}

ManifestStore::ManifestStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(*dir_);
}

ManifestStore ManifestStore::open(const std::filesystem::path& dir) {
    ManifestStore store(dir);
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        Manifest m = deserializeManifest(binio::readText(f));
        store.manifests_.emplace(m.guid, std::move(m));
    }
    return store;
}

void ManifestStore::insert(const Manifest& m) {
    if (manifests_.contains(m.guid)) fail(ErrorCode::DuplicateGuid, "GUID already in store: " + m.guid.str());
    if (dir_) binio::writeText(*dir_ / (m.guid.str() + ".json"), serializeManifest(m));
    manifests_.emplace(m.guid, m);
}

void ManifestStore::erase(const Guid& guid) {
    if (manifests_.erase(guid) && dir_) std::filesystem::remove(*dir_ / (guid.str() + ".json"));
}

const Manifest* ManifestStore::find(const Guid& guid) const {
    auto it = manifests_.find(guid);
    return it == manifests_.end() ? nullptr : &it->second;
}

Manifest buildManifest(ByteView asset, const CreatorInfo& creator, std::vector<Assertion> assertions,
                       std::vector<IngredientRef> ingredients, const crypto::KeyPair& signingKey,
                       const ManifestStore& store, GuidSource& guids) {
    for (const auto& ing : ingredients)
        if (!store.contains(ing.manifestGuid))
            fail(ErrorCode::DanglingIngredient, "ingredient " + ing.manifestGuid.str() + " not in store");
    for (const auto& a : assertions) checkPayloadFinite(a.payload);

    Manifest m;
    m.guid = guids.next();
    if (store.contains(m.guid)) fail(ErrorCode::DuplicateGuid, "GUID collision: " + m.guid.str());
    m.creator = creator;
    m.assertions = std::move(assertions);
    m.ingredients = std::move(ingredients);
    m.contentHash = crypto::sha256(asset);
    m.signer = signingKey.publicKey();
    m.signature = signingKey.sign(signingBytes(m));
    return m;
}

std::string_view verificationFailureName(VerificationFailureKind kind) {
    switch (kind) {
        case VerificationFailureKind::BadSignature: return "BadSignature";
        case VerificationFailureKind::ContentHashMismatch: return "ContentHashMismatch";
        case VerificationFailureKind::DanglingIngredient: return "DanglingIngredient";
        case VerificationFailureKind::MalformedAssertion: return "MalformedAssertion";
    }
    return "Unknown";
}

bool VerificationResult::has(VerificationFailureKind kind) const {
    return std::any_of(failures.begin(), failures.end(), [&](const auto& f) { return f.kind == kind; });
}

VerificationResult verifyManifest(const Manifest& m, const ManifestStore& store, std::optional<ByteView> asset) {
    VerificationResult r;
    auto add = [&](VerificationFailureKind kind, std::string detail) {
        r.valid = false;
        r.failures.push_back({kind, std::move(detail)});
    };
    if (!crypto::verify(m.signer, signingBytes(m), m.signature))
        add(VerificationFailureKind::BadSignature, "signature does not verify against embedded signer key");
    if (asset && crypto::sha256(*asset) != m.contentHash)
        add(VerificationFailureKind::ContentHashMismatch, "asset digest differs from contentHash");
    for (const auto& ing : m.ingredients)
        if (!store.contains(ing.manifestGuid))
            add(VerificationFailureKind::DanglingIngredient, ing.manifestGuid.str());
    for (const auto& a : m.assertions) {
        if (a.kind != AssertionKind::AssetReference) continue;
        auto it = a.payload.find("uri");
        bool ok = a.payload.size() == 1 && it != a.payload.end() && std::holds_alternative<std::string>(it->second);
        if (ok) {
            try {
                parseAraUri(std::get<std::string>(it->second));
            } catch (const Error&) {
                ok = false;
            }
        }
        if (!ok) add(VerificationFailureKind::MalformedAssertion, "asset reference must hold exactly one ARA URI");
    }
    return r;
}

const ProvenanceNode* ProvenanceGraph::find(const Guid& guid) const {
    for (const auto& n : nodes)
        if (n.manifest.guid == guid) return &n;
    return nullptr;
}

namespace {

std::vector<IngredientRef> sortedIngredients(const Manifest& m) {
    auto ings = m.ingredients;
    std::stable_sort(ings.begin(), ings.end(),
                     [](const auto& a, const auto& b) { return a.manifestGuid < b.manifestGuid; });
    return ings;
}

void checkAcyclic(const Manifest& root, const ManifestStore& store) {
    enum class Mark { Open, Done };
    std::map<Guid, Mark> marks;
    struct Frame {
        Guid guid;
        std::vector<IngredientRef> children;
        std::size_t next = 0;
    };
    std::vector<Frame> stack;
    stack.push_back({root.guid, sortedIngredients(root)});
    marks[root.guid] = Mark::Open;
    while (!stack.empty()) {
        Frame& top = stack.back();
        if (top.next == top.children.size()) {
            marks[top.guid] = Mark::Done;
            stack.pop_back();
            continue;
        }
        const Guid child = top.children[top.next++].manifestGuid;
        auto it = marks.find(child);
        if (it != marks.end()) {
            if (it->second == Mark::Open) {
                std::string path;
                bool on = false;
                for (const auto& f : stack) {
                    if (f.guid == child) on = true;
                    if (on) path += f.guid.str() + " -> ";
                }
                fail(ErrorCode::CycleDetected, "provenance cycle: " + path + child.str());
            }
            continue;
        }
        const Manifest* m = store.find(child);
        if (!m) continue;
        marks[child] = Mark::Open;
        stack.push_back({child, sortedIngredients(*m)});
    }
}

}  // namespace

ProvenanceGraph traverseProvenance(const Manifest& root, const ManifestStore& store) {
    checkAcyclic(root, store);
    ProvenanceGraph g;
    std::set<Guid> seen{root.guid};
    std::set<Guid> missing;
    std::deque<std::size_t> queue;
    g.nodes.push_back({root, 0, std::nullopt, std::nullopt});
    queue.push_back(0);
    while (!queue.empty()) {
        std::size_t idx = queue.front();
        queue.pop_front();
        // Copy what we need: push_back below may reallocate nodes.
        const Guid parent = g.nodes[idx].manifest.guid;
        const int depth = g.nodes[idx].depth;
        for (const auto& ing : sortedIngredients(g.nodes[idx].manifest)) {
            g.edges.push_back({parent, ing.manifestGuid, ing.role});
            if (seen.contains(ing.manifestGuid)) continue;
            const Manifest* child = store.find(ing.manifestGuid);
            if (!child) {
                if (missing.insert(ing.manifestGuid).second) g.missing.push_back(ing.manifestGuid);
                continue;
            }
            seen.insert(ing.manifestGuid);
            g.nodes.push_back({*child, depth + 1, parent, ing.role});
            queue.push_back(g.nodes.size() - 1);
        }
    }
    return g;
}

std::filesystem::path sidecarPath(const std::filesystem::path& asset) {
    auto p = asset;
    p += ".manifest.json";
    return p;
}

void writeSidecar(const std::filesystem::path& asset, const Manifest& m) {
    binio::writeText(sidecarPath(asset), serializeManifest(m));
}

Manifest readSidecar(const std::filesystem::path& asset) {
    return deserializeManifest(binio::readText(sidecarPath(asset)));
}

}  // namespace ekila
