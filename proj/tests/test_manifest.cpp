#include <set>

#include "ekila/manifest.hpp"
#include "ekila/ora.hpp"
#include "ekila/binio.hpp"
#include "support.hpp"

using namespace ekila;
using ekila::testing::expectError;
using ekila::testing::TempDir;

namespace {

Bytes bytesOf(std::string_view s) { return Bytes(s.begin(), s.end()); }

crypto::KeyPair key(const std::string& label) { return crypto::KeyPair::fromLabel(label); }

/// Hand-assembled manifest, bypassing buildManifest's ingredient check.
Manifest signedRaw(Guid guid, std::vector<IngredientRef> ingredients, const crypto::KeyPair& k) {
    Manifest m;
    m.guid = guid;
    m.creator = CreatorInfo{"raw", k.address()};
    m.ingredients = std::move(ingredients);
    m.contentHash = crypto::sha256(std::string_view{});
    m.signer = k.publicKey();
    const Bytes msg = signingBytes(m);
    m.signature = k.sign(msg);
    return m;
}

AraUri randomAra(Rng& rng) {
    static const char* spaces[] = {"eip155", "cosmos", "bip122", "polkadot"};
    AraUri u;
    u.dltNamespace = spaces[rng.below(4)];
    u.chainId = std::to_string(rng.below(100000));
    for (auto& b : u.contract.raw.bytes) b = static_cast<std::uint8_t>(rng.below(256));
    // Leading zero bytes exercise the compact rendering.
    const auto zeros = rng.below(21);
    for (std::uint64_t i = 0; i < zeros; ++i) u.contract.raw.bytes[i] = 0;
    u.nftId = rng.below(4) == 0 ? rng.below(16) : rng.next();
    return u;
}

}  // namespace

TEST(AraUri, ParsesTheLiteralExample) {
    const AraUri u = parseAraUri("c2pa-nft://eip155:5:0x789/0x123");
    EXPECT_EQ(u.dltNamespace, "eip155");
    EXPECT_EQ(u.chainId, "5");
    EXPECT_EQ(u.contract, Address::parse("0x789"));
    EXPECT_EQ(u.contract.str(), "0x0000000000000000000000000000000000000789");
    EXPECT_EQ(u.nftId, 0x123u);
    EXPECT_EQ(formatAraUri(u), "c2pa-nft://eip155:5:0x789/0x123");
}

TEST(AraUri, RandomRoundTrips) {
    Rng rng(101);
    for (int i = 0; i < 1000; ++i) {
        const AraUri u = randomAra(rng);
        const std::string text = formatAraUri(u);
        const AraUri back = parseAraUri(text);
        ASSERT_EQ(back, u) << text;
        ASSERT_EQ(formatAraUri(back), text);
    }
}

TEST(AraUri, RejectsMalformedInput) {
    for (const char* bad : {"c2pa-nft://eip155:5:0x789", "c2pa-nft://eip155:5:0x789/", "http://eip155:5:0x789/0x1",
                            "c2pa-nft://eip155:0x789/0x1", "c2pa-nft://eip155:5:789/0x1", "c2pa-nft://eip155:5:0xZZ/0x1",
                            "c2pa-nft://:5:0x789/0x1", "c2pa-nft://eip155:5:0x789/0x", "",
                            "c2pa-nft://eip155:5:0x11111111111111111111111111111111111111111/0x1"})
        expectError(ErrorCode::MalformedUri, [&] { parseAraUri(bad); });
}

TEST(Manifest, EmptyPayloadHashesTheEmptyString) {
    ManifestStore store;
    GuidSource guids(1);
    const Manifest m = buildManifest({}, CreatorInfo{"a", std::nullopt}, {}, {}, key("a"), store, guids);
    EXPECT_EQ(m.contentHash.hex(), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    const auto r = verifyManifest(m, store, ByteView{});
    EXPECT_TRUE(r.valid);
    EXPECT_TRUE(r.failures.empty());
}

TEST(Manifest, SerializationRoundTripsRandomManifests) {
    Rng rng(5);
    ManifestStore store;
    GuidSource guids(2);
    std::vector<Guid> existing;
    for (int i = 0; i < 200; ++i) {
        std::vector<Assertion> assertions;
        const auto na = rng.below(4);
        for (std::uint64_t k = 0; k < na; ++k) {
            Payload p;
            p["text"] = std::string("v") + std::to_string(rng.below(1000)) + "\"\\\né";
            p["int"] = static_cast<std::int64_t>(rng.next() >> 1) * (rng.below(2) ? 1 : -1);
            p["real"] = rng.uniform(-1e6, 1e6);
            assertions.push_back(Assertion{static_cast<AssertionKind>(rng.below(5) == 1 ? 4 : rng.below(5)), p});
            if (assertions.back().kind == AssertionKind::AssetReference)
                assertions.back().payload = {{"uri", formatAraUri(randomAra(rng))}};
        }
        std::vector<IngredientRef> ingredients;
        for (std::size_t k = 0; k < existing.size() && k < rng.below(3); ++k)
            ingredients.push_back(IngredientRef{existing[rng.below(existing.size())], static_cast<IngredientRole>(rng.below(4))});
        const Bytes asset = bytesOf("asset " + std::to_string(i));
        const Manifest m = buildManifest(asset, CreatorInfo{"creator " + std::to_string(i), std::nullopt}, assertions,
                                         ingredients, key("k" + std::to_string(i % 7)), store, guids);
        store.insert(m);
        existing.push_back(m.guid);
        const std::string text = serializeManifest(m);
        const Manifest back = deserializeManifest(text);
        ASSERT_EQ(back, m);
        ASSERT_EQ(serializeManifest(back), text);
        ASSERT_TRUE(verifyManifest(back, store, ByteView(asset)).valid);
    }
}

TEST(Manifest, EverySignedByteFlipBreaksVerification) {
    ManifestStore store;
    GuidSource guids(3);
    const auto k = key("creator");
    const Manifest a = buildManifest(bytesOf("a"), CreatorInfo{"ann", k.address()}, {}, {}, k, store, guids);
    store.insert(a);
    const Manifest b = buildManifest(bytesOf("b"), CreatorInfo{"bob", std::nullopt},
                                     {Assertion{AssertionKind::Custom, {{"note", std::string("hi")}, {"n", std::int64_t{3}}}}},
                                     {IngredientRef{a.guid, IngredientRole::TrainingImage}}, k, store, guids);
    store.insert(b);
    const Manifest c = buildManifest(bytesOf("c"), CreatorInfo{"cat", std::nullopt}, {makeGeneratedByAssertion(b.guid, "gen")},
                                     {IngredientRef{b.guid, IngredientRole::GenModel}}, k, store, guids);
    store.insert(c);

    int flips = 0;
    for (const Manifest* m : {&a, &b, &c}) {
        const std::string text = serializeManifest(*m);
        for (std::size_t pos = 0; pos < text.size(); ++pos) {
            std::string mutated = text;
            mutated[pos] = static_cast<char>(mutated[pos] ^ 0x01);
            // A mutated byte either breaks parsing or leaves a manifest that fails to verify.
            bool rejected = false;
            try {
                const Manifest parsed = deserializeManifest(mutated);
                rejected = !verifyManifest(parsed, store).valid;
            } catch (const Error&) {
                rejected = true;
            }
            ASSERT_TRUE(rejected) << "flip at " << pos << " of " << text;
            ++flips;
        }
    }
    EXPECT_GT(flips, 500);
}

TEST(Manifest, ForeignSignatureIsRejected) {
    ManifestStore store;
    GuidSource guids(4);
    Manifest m = buildManifest(bytesOf("x"), CreatorInfo{"x", std::nullopt}, {}, {}, key("right"), store, guids);
    m.signature = key("wrong").sign(signingBytes(m));
    const auto r = verifyManifest(m, store);
    EXPECT_FALSE(r.valid);
    EXPECT_TRUE(r.has(VerificationFailureKind::BadSignature));
}

TEST(Manifest, ContentHashMismatchIsReported) {
    ManifestStore store;
    GuidSource guids(5);
    const Manifest m = buildManifest(bytesOf("x"), CreatorInfo{"x", std::nullopt}, {}, {}, key("k"), store, guids);
    const Bytes other = bytesOf("y");
    const auto r = verifyManifest(m, store, ByteView(other));
    EXPECT_FALSE(r.valid);
    EXPECT_TRUE(r.has(VerificationFailureKind::ContentHashMismatch));
}

TEST(Manifest, DanglingIngredient) {
    ManifestStore store;
    GuidSource guids(6);
    const Guid ghost = guids.next();
    expectError(ErrorCode::DanglingIngredient, [&] {
        buildManifest(bytesOf("x"), CreatorInfo{"x", std::nullopt}, {}, {IngredientRef{ghost, IngredientRole::Other}}, key("k"),
                      store, guids);
    });
    const Manifest raw = signedRaw(guids.next(), {IngredientRef{ghost, IngredientRole::Other}}, key("k"));
    const auto r = verifyManifest(raw, store);
    EXPECT_FALSE(r.valid);
    ASSERT_EQ(r.failures.size(), 1u);
    EXPECT_EQ(r.failures[0].kind, VerificationFailureKind::DanglingIngredient);
}

TEST(Manifest, AssetReferenceMustHoldOneUri) {
    ManifestStore store;
    GuidSource guids(7);
    const auto k = key("k");
    const Manifest m = buildManifest(bytesOf("x"), CreatorInfo{"x", std::nullopt},
                                     {Assertion{AssertionKind::AssetReference, {{"uri", std::string("not a uri")}}}}, {}, k,
                                     store, guids);
    EXPECT_TRUE(verifyManifest(m, store).has(VerificationFailureKind::MalformedAssertion));
}

TEST(Manifest, DuplicateGuidIsAStoreError) {
    ManifestStore store;
    GuidSource guids(8);
    const Manifest m = buildManifest(bytesOf("x"), CreatorInfo{"x", std::nullopt}, {}, {}, key("k"), store, guids);
    store.insert(m);
    expectError(ErrorCode::DuplicateGuid, [&] { store.insert(m); });
}

TEST(Manifest, DeserializeRefusesUnknownVersion) {
    ManifestStore store;
    GuidSource guids(9);
    const Manifest m = buildManifest(bytesOf("x"), CreatorInfo{"x", std::nullopt}, {}, {}, key("k"), store, guids);
    std::string text = serializeManifest(m);
    const auto pos = text.find("\"version\":1");
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, 11, "\"version\":2");
    expectError(ErrorCode::UnsupportedVersion, [&] { deserializeManifest(text); });
}

TEST(Provenance, GeneratedImageReachesModelAndTrainingSet) {
    ManifestStore store;
    GuidSource guids(10);
    std::vector<IngredientRef> training;
    std::set<std::string> names;
    for (int i = 0; i < 60; ++i) {
        const std::string name = "artist-" + std::to_string(i % 6);
        const Manifest m = buildManifest(bytesOf("img" + std::to_string(i)), CreatorInfo{name, key(name).address()}, {}, {},
                                         key(name), store, guids);
        store.insert(m);
        training.push_back(IngredientRef{m.guid, IngredientRole::TrainingImage});
        names.insert(name);
    }
    const Manifest model = buildManifest(bytesOf("weights"), CreatorInfo{"lab", std::nullopt}, {}, training, key("lab"), store, guids);
    store.insert(model);
    const Manifest gen = buildManifest(bytesOf("generated"), CreatorInfo{"gen", std::nullopt},
                                       {makeGeneratedByAssertion(model.guid, "toy")},
                                       {IngredientRef{model.guid, IngredientRole::GenModel}}, key("gen"), store, guids);
    store.insert(gen);

    const auto g = traverseProvenance(gen, store);
    ASSERT_EQ(g.nodes.size(), 62u);
    EXPECT_EQ(g.nodes[0].manifest.guid, gen.guid);
    EXPECT_EQ(g.nodes[1].manifest.guid, model.guid);
    EXPECT_EQ(g.nodes[1].role, IngredientRole::GenModel);
    std::set<std::string> found;
    for (std::size_t i = 2; i < g.nodes.size(); ++i) {
        EXPECT_EQ(g.nodes[i].depth, 2);
        EXPECT_EQ(g.nodes[i].role, IngredientRole::TrainingImage);
        found.insert(g.nodes[i].manifest.creator.name);
        if (i > 2) {
            EXPECT_LT(g.nodes[i - 1].manifest.guid, g.nodes[i].manifest.guid);
        }
    }
    EXPECT_EQ(found, names);
    EXPECT_TRUE(g.missing.empty());
    // Deterministic.
    const auto again = traverseProvenance(gen, store);
    ASSERT_EQ(again.nodes.size(), g.nodes.size());
    for (std::size_t i = 0; i < g.nodes.size(); ++i) EXPECT_EQ(again.nodes[i].manifest.guid, g.nodes[i].manifest.guid);
}

TEST(Provenance, LeafGraphIsJustTheRoot) {
    ManifestStore store;
    GuidSource guids(11);
    const Manifest m = buildManifest(bytesOf("x"), CreatorInfo{"x", std::nullopt}, {}, {}, key("k"), store, guids);
    const auto g = traverseProvenance(m, store);
    ASSERT_EQ(g.nodes.size(), 1u);
    EXPECT_TRUE(g.edges.empty());
}

TEST(Provenance, TwoNodeCycleIsDetected) {
    GuidSource guids(12);
    const Guid ga = guids.next(), gb = guids.next();
    ManifestStore store;
    const Manifest a = signedRaw(ga, {IngredientRef{gb, IngredientRole::Other}}, key("a"));
    const Manifest b = signedRaw(gb, {IngredientRef{ga, IngredientRole::Other}}, key("b"));
    store.insert(a);
    store.insert(b);
    try {
        traverseProvenance(a, store);
        FAIL() << "cycle not detected";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::CycleDetected);
        EXPECT_NE(std::string(e.what()).find(ga.str()), std::string::npos);
        EXPECT_NE(std::string(e.what()).find(gb.str()), std::string::npos);
    }
}

TEST(Provenance, ArchiveGroupsMembers) {
    ManifestStore store;
    GuidSource guids(13);
    std::vector<IngredientRef> members;
    for (int i = 0; i < 3; ++i) {
        const Manifest m = buildManifest(bytesOf(std::to_string(i)), CreatorInfo{"m", std::nullopt}, {}, {}, key("m"), store, guids);
        store.insert(m);
        members.push_back(IngredientRef{m.guid, IngredientRole::Other});
    }
    const Manifest archive = buildManifest(bytesOf("zip"), CreatorInfo{"z", std::nullopt}, {}, members, key("z"), store, guids);
    store.insert(archive);
    const Manifest model = buildManifest(bytesOf("model"), CreatorInfo{"l", std::nullopt}, {},
                                         {IngredientRef{archive.guid, IngredientRole::Archive}}, key("l"), store, guids);
    EXPECT_EQ(traverseProvenance(model, store).nodes.size(), 5u);
}

TEST(Provenance, MissingIngredientsAreListed) {
    GuidSource guids(14);
    ManifestStore store;
    const Guid ghost = guids.next();
    const Manifest a = signedRaw(guids.next(), {IngredientRef{ghost, IngredientRole::Other}}, key("a"));
    const auto g = traverseProvenance(a, store);
    ASSERT_EQ(g.missing.size(), 1u);
    EXPECT_EQ(g.missing[0], ghost);
}

TEST(ManifestStore, PersistsAndReloads) {
    TempDir dir;
    GuidSource guids(15);
    ManifestStore store(dir / "m");
    const Manifest m = buildManifest(bytesOf("x"), CreatorInfo{"x", std::nullopt}, {}, {}, key("k"), store, guids);
    store.insert(m);
    EXPECT_TRUE(std::filesystem::exists(dir / ("m/" + m.guid.str() + ".json")));
    const auto reopened = ManifestStore::open(dir / "m");
    ASSERT_NE(reopened.find(m.guid), nullptr);
    EXPECT_EQ(*reopened.find(m.guid), m);
}

TEST(ManifestStore, SidecarSitsNextToTheAsset) {
    TempDir dir;
    GuidSource guids(16);
    ManifestStore store;
    const auto asset = dir / "pic.png";
    binio::writeFile(asset, bytesOf("png bytes"));
    const Manifest m = buildManifest(bytesOf("png bytes"), CreatorInfo{"x", std::nullopt}, {}, {}, key("k"), store, guids);
    writeSidecar(asset, m);
    EXPECT_EQ(sidecarPath(asset), dir / "pic.png.manifest.json");
    EXPECT_EQ(readSidecar(asset), m);
}

TEST(WalletRoute, StaticWalletWithoutAra) {
    ManifestStore store;
    GuidSource guids(17);
    const Address w = key("w").address();
    const Manifest m = buildManifest(bytesOf("x"), CreatorInfo{"x", w}, {}, {}, key("w"), store, guids);
    EXPECT_EQ(extractWalletRoute(m, ledger::LedgerState{}), w);
}

TEST(WalletRoute, NeitherRouteFails) {
    ManifestStore store;
    GuidSource guids(18);
    const Manifest m = buildManifest(bytesOf("x"), CreatorInfo{"x", std::nullopt}, {}, {}, key("w"), store, guids);
    expectError(ErrorCode::NoPaymentRoute, [&] { extractWalletRoute(m, ledger::LedgerState{}); });
}

TEST(WalletRoute, UnresolvableAraFails) {
    ManifestStore store;
    GuidSource guids(19);
    const Manifest m = buildManifest(bytesOf("x"), CreatorInfo{"x", std::nullopt},
                                     {makeAraAssertion(parseAraUri("c2pa-nft://eip155:5:0x789/0x123"))}, {}, key("w"), store,
                                     guids);
    expectError(ErrorCode::AraResolutionFailure, [&] { extractWalletRoute(m, ledger::LedgerState{}); });
}
