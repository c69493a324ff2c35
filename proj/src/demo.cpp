#include "ekila/demo.hpp"

#include <cstdio>
#include <memory>
#include <ostream>

#include <nlohmann/json.hpp>

#include "ekila/binio.hpp"
#include "ekila/embedding_file.hpp"

namespace ekila {

namespace {

struct Creator {
    CreatorIdentity identity;
    Address rights;
    Address nft;
};

struct RegistryEntry {
    std::string creatorName;
    Address wallet;
};

std::string numbered(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%02d", prefix, i);
    return buf;
}

Address deploy(ledger::Ledger& ledger, const Address& sender, ledger::TxBody body) {
    const auto out = ledger.execute(sender, std::move(body));
    if (!out.applied || !out.contract) fail(out.error.value_or(ErrorCode::InvalidArgument), "deploy failed: " + out.message);
    return *out.contract;
}

void require(const ledger::TxOutcome& out, const std::string& what) {
    if (!out.applied) fail(out.error.value_or(ErrorCode::InvalidArgument), what + ": " + out.message);
}

ledger::Amount escrowHeldBy(const ledger::LedgerState& state, const Address& payer) {
    ledger::Amount total = 0;
    for (const auto& [addr, rc] : state.rightsContracts) {
        const auto it = rc.escrow.find(payer);
        if (it != rc.escrow.end()) total += it->second;
    }
    return total;
}

class Logger {
public:
    explicit Logger(std::ostream* out) : out_(out) {}
    template <class T>
    Logger& operator<<(const T& v) {
        if (out_) *out_ << v;
        return *this;
    }

private:
    std::ostream* out_;
};

}  // namespace

bool DemoResult::ok() const {
    if (!conservationOk || !replayOk || queries.empty()) return false;
    for (const auto& q : queries) {
        if (!q.mismatches.empty() || !q.payoutsExact || q.settlement.failures() != 0) return false;
        if (q.trainingManifests != imageManifests.size()) return false;
        if (q.escrowDecrease != q.settlement.totalPaid) return false;
    }
    return true;
}

DemoResult runMnistScaleDemo(const Corpus& corpus, const DemoConfig& cfg, const DemoModels& models, std::ostream* logStream) {
    if (cfg.creators < 1 || cfg.queries < 1) fail(ErrorCode::InvalidArgument, "demo needs at least one creator and query");
    Logger log(logStream);
    const auto& dir = cfg.workdir;
    const bool persist = !dir.empty();
    if (persist) std::filesystem::create_directories(dir / "queries");

    // Models: use what was handed in, train or build the rest.
    std::unique_ptr<ToyConvEncoder> ownEncoder;
    const PatchEncoder* encoder = models.encoder;
    if (!encoder) {
        log << "training encoder on " << corpus.size() << " images\n";
        ownEncoder = std::make_unique<ToyConvEncoder>(trainEncoder(corpus, cfg.encoder));
        encoder = ownEncoder.get();
    }
    std::unique_ptr<VerifierModel> ownVerifier;
    const VerifierModel* verifier = models.verifier;
    if (!verifier) {
        log << "training verifier\n";
        ownVerifier = std::make_unique<VerifierModel>(trainVerifier(corpus, *encoder, cfg.verifier));
        verifier = ownVerifier.get();
    }
    std::unique_ptr<IvfPqIndex> ownIndex;
    const IvfPqIndex* index = models.index;
    if (!index) {
        log << "building index\n";
        ownIndex = std::make_unique<IvfPqIndex>(IvfPqIndex::build(embedCorpus(*encoder, corpus), cfg.index, splitmix64(cfg.seed)));
        index = ownIndex.get();
    }

    ManifestStore store = persist ? ManifestStore(dir / "store" / "manifests") : ManifestStore();
    AssetStore assets = persist ? AssetStore(dir / "store" / "assets") : AssetStore();
    GuidSource guids(splitmix64(cfg.seed + 1));
    ledger::Ledger ledger;
    DemoResult result;

    std::vector<Creator> creators;
    for (int c = 0; c < cfg.creators; ++c) {
        const std::string name = numbered("creator-", c);
        Creator cr{CreatorIdentity{name, crypto::KeyPair::fromLabel("demo/" + name)}, {}, {}};
        cr.rights = deploy(ledger, cr.identity.wallet(), ledger::DeployRightsContract{});
        cr.nft = deploy(ledger, cr.identity.wallet(), ledger::DeployNftContract{name + " collection"});
        creators.push_back(std::move(cr));
    }

    // Every training image becomes an ORA asset of its creator.
    std::map<std::string, RegistryEntry> registry;
    std::map<std::string, ledger::NftKey> nftOf;
    std::vector<IngredientRef> trainingRefs;
    for (std::size_t k = 0; k < corpus.size(); ++k) {
        const auto& item = corpus[k];
        const Creator& cr = creators[k % creators.size()];
        OraOptions opts;
        opts.extraAssertions.push_back(makeAssetNameAssertion(item.id));
        const auto minted = mintOraAsset(ledger, store, assets, encodePng(item.image), cr.identity, cr.rights, cr.nft, guids, opts);
        result.imageManifests[item.id] = minted.manifest.guid;
        registry[item.id] = RegistryEntry{cr.identity.name, cr.identity.wallet()};
        nftOf[item.id] = minted.nft;
        trainingRefs.push_back(IngredientRef{minted.manifest.guid, IngredientRole::TrainingImage});
    }
    log << "minted " << corpus.size() << " ORA assets for " << creators.size() << " creators\n";

    const auto trainerKey = crypto::KeyPair::fromLabel("demo/model-trainer");
    const std::string modelBlob = "composite-generator index " + index->digest().hex();
    const Bytes modelBytes(modelBlob.begin(), modelBlob.end());
    const Manifest model = buildManifest(modelBytes, CreatorInfo{"model-trainer", trainerKey.address()}, {}, trainingRefs,
                                         trainerKey, store, guids);
    store.insert(model);

    // Licensee funds escrow and receives one training right per image.
    const auto payerKey = crypto::KeyPair::fromLabel("demo/licensee");
    const Address payer = payerKey.address();
    const ledger::Amount perContract =
        (cfg.baseRoyalty + static_cast<ledger::Amount>(cfg.attribution.topM)) * static_cast<ledger::Amount>(cfg.queries);
    require(ledger.execute(payer, ledger::Faucet{payer, perContract * creators.size()}), "faucet");
    for (std::size_t k = 0; k < corpus.size(); ++k) {
        const Creator& cr = creators[k % creators.size()];
        require(ledger.execute(cr.identity.wallet(), ledger::IssueRight{cr.rights, payer, ledger::RightKind::TrainModel, "",
                                                                        nftOf.at(corpus[k].id), cfg.baseRoyalty}),
                "issue right for " + corpus[k].id);
    }
    for (const auto& cr : creators) require(ledger.execute(payer, ledger::DepositEscrow{cr.rights, perContract}), "deposit");

    const auto generatorKey = crypto::KeyPair::fromLabel("demo/generator");
    CorpusPatchSource source(corpus, *encoder, *verifier);
    for (int qi = 0; qi < cfg.queries; ++qi) {
        DemoQueryResult qr;
        qr.queryId = numbered("query-", qi);
        const CompositeQuery q = composeQuery(corpus, cfg.compose, splitmix64(cfg.seed * 1000 + static_cast<std::uint64_t>(qi)), qr.queryId);
        qr.truth = q.truth;
        const Bytes png = encodePng(q.image);
        Manifest gen = buildManifest(png, CreatorInfo{"generator", generatorKey.address()},
                                     {makeGeneratedByAssertion(model.guid, "composite generator")},
                                     {IngredientRef{model.guid, IngredientRole::GenModel}}, generatorKey, store, guids);
        store.insert(gen);
        qr.manifest = gen.guid;
        if (persist) {
            const auto path = dir / "queries" / (qr.queryId + ".png");
            binio::writeFile(path, png);
            writeSidecar(path, gen);
            binio::writeText(truthPath(path), compositeTruthJson(q.truth));
            gen = readSidecar(path);
        }

        // Names and payment routes come from the generated manifest's graph alone.
        const ProvenanceGraph graph = traverseProvenance(gen, store);
        for (const auto& node : graph.nodes) {
            if (node.role != IngredientRole::TrainingImage) continue;
            ++qr.trainingManifests;
            const auto name = assetName(node.manifest);
            const auto reg = name ? registry.find(*name) : registry.end();
            if (reg == registry.end()) {
                qr.mismatches.push_back("training manifest " + node.manifest.guid.str() + " names no known image");
                continue;
            }
            if (node.manifest.creator.name != reg->second.creatorName)
                qr.mismatches.push_back(*name + ": creator " + node.manifest.creator.name + " != " + reg->second.creatorName);
            const Address route = extractWalletRoute(node.manifest, ledger.state());
            if (route != reg->second.wallet) qr.mismatches.push_back(*name + ": wallet route " + route.str());
        }
        const auto imageManifests = indexByAssetName(graph);

        qr.report = attributeImage(q.image, qr.queryId, *index, *encoder, *verifier, source, cfg.attribution);
        qr.recallAt5 = sourceRecallAtK(qr.report.ranking(), q.truth.sources, 5);

        const ledger::Amount before = escrowHeldBy(ledger.state(), payer);
        qr.settlement = settleRoyalties(qr.report, imageManifests, store, ledger, payer);
        qr.escrowDecrease = before - escrowHeldBy(ledger.state(), payer);
        for (const auto& item : qr.settlement.items) {
            if (!item.ok) continue;
            if (item.payout->amount != ledger::scaleRoyalty(cfg.baseRoyalty, item.royaltyWeight)) qr.payoutsExact = false;
            if (item.payout->creator != registry.at(item.imageId).wallet) qr.payoutsExact = false;
        }
        result.totalPaid += qr.settlement.totalPaid;
        result.totalEscrowDecrease += qr.escrowDecrease;
        log << qr.queryId << ": " << q.truth.sources.size() << " sources, R@5 " << qr.recallAt5 << ", paid "
            << qr.settlement.totalPaid << " to " << qr.settlement.items.size() << " images\n";
        if (persist) {
            writeCreditReport(dir / "queries" / (qr.queryId + ".credit.json"), qr.report);
            binio::writeText(dir / "queries" / (qr.queryId + ".credit.svg"), creditPlotSvg(qr.report));
        }
        result.queries.push_back(std::move(qr));
    }

    result.conservationOk = ledger.state().totalSupply() == ledger.state().minted;
    result.ledgerDigest = ledger.digest();
    result.replayOk = ledger::Ledger::replay(ledger.log()).digest() == result.ledgerDigest;
    if (persist) {
        ledger.save(dir / "ledger.json", dir / "ledger.jsonl");
        binio::writeText(dir / "summary.json", demoSummaryJson(result));
    }
    log << "conservation " << (result.conservationOk ? "ok" : "FAILED") << ", replay " << (result.replayOk ? "ok" : "FAILED")
        << ", total paid " << result.totalPaid << "\n";
    return result;
}

std::string demoSummaryJson(const DemoResult& r) {
    nlohmann::json j;
    j["format"] = "ekila.demo-summary";
    j["version"] = 1;
    j["ok"] = r.ok();
    j["conservationOk"] = r.conservationOk;
    j["replayOk"] = r.replayOk;
    j["ledgerDigest"] = r.ledgerDigest.hex();
    j["totalPaid"] = r.totalPaid;
    j["totalEscrowDecrease"] = r.totalEscrowDecrease;
    auto qs = nlohmann::json::array();
    for (const auto& q : r.queries) {
        nlohmann::json payouts = nlohmann::json::array();
        for (const auto& item : q.settlement.items) {
            nlohmann::json p{{"imageId", item.imageId}, {"royaltyWeight", item.royaltyWeight}, {"ok", item.ok}};
            if (item.payee) p["payee"] = item.payee->str();
            if (item.payout) p["amount"] = item.payout->amount;
            if (item.error) p["error"] = errorCodeName(*item.error);
            payouts.push_back(p);
        }
        qs.push_back({{"queryId", q.queryId},
                      {"manifest", q.manifest.str()},
                      {"sources", q.truth.sources},
                      {"ranking", q.report.ranking()},
                      {"recallAt5", q.recallAt5},
                      {"trainingManifests", q.trainingManifests},
                      {"mismatches", q.mismatches},
                      {"payoutsExact", q.payoutsExact},
                      {"escrowDecrease", q.escrowDecrease},
                      {"payouts", payouts}});
    }
    j["queries"] = qs;
    return j.dump(2) + "\n";
}

}  // namespace ekila
