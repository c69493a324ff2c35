// Command-line front end. Every subcommand reads the shared INI config (--config),
// writes its artifacts to the configured paths and prints a JSON summary on stdout.

#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ekila/binio.hpp"
#include "ekila/config.hpp"
#include "ekila/demo.hpp"
#include "ekila/embedding_file.hpp"

using namespace ekila;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Context {
    fs::path configFile;
    Config config;

    void load() {
        config = configFile.empty() ? Config{} : loadConfig(configFile);
        applyEnvironment(config);
    }
};

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

/// "0x..." is taken as an address; anything else names a key derived from that label.
Address resolveWallet(const std::string& who) {
    if (who.rfind("0x", 0) == 0) return Address::parse(who);
    return crypto::KeyPair::fromLabel(who).address();
}

ledger::Ledger openLedger(const Paths& p) {
    if (fs::exists(p.ledger)) return ledger::Ledger::load(p.ledger, p.ledgerLog());
    return ledger::Ledger{};
}

void saveLedger(const ledger::Ledger& l, const Paths& p) {
    if (p.ledger.has_parent_path()) fs::create_directories(p.ledger.parent_path());
    l.save(p.ledger, p.ledgerLog());
}

Address contractOf(const ledger::LedgerState& s, const Address& creator) {
    for (const auto& [addr, rc] : s.rightsContracts)
        if (rc.creator == creator) return addr;
    fail(ErrorCode::UnknownContract, "no Rights contract deployed by " + creator.str());
}

std::optional<Address> nftContractOf(const ledger::LedgerState& s, const Address& deployer) {
    for (const auto& [addr, c] : s.nftContracts)
        if (c.deployer == deployer) return addr;
    return std::nullopt;
}

void require(const ledger::TxOutcome& out, const std::string& what) {
    if (!out.applied) fail(out.error.value_or(ErrorCode::InvalidArgument), what + ": " + out.message);
}

ledger::NftKey nftOfAsset(const fs::path& asset) {
    const Manifest m = readSidecar(asset);
    const auto ara = m.assetReference();
    if (!ara) fail(ErrorCode::AraResolutionFailure, "manifest of " + asset.string() + " carries no asset reference");
    return ledger::NftKey{ara->contract, ara->nftId};
}

json settlementJson(const SettlementResult& r) {
    json items = json::array();
    for (const auto& i : r.items) {
        json j{{"imageId", i.imageId}, {"royaltyWeight", i.royaltyWeight}, {"ok", i.ok}};
        if (i.payee) j["payee"] = i.payee->str();
        if (i.payout) j["amount"] = i.payout->amount;
        if (i.error) {
            j["error"] = errorCodeName(*i.error);
            j["message"] = i.message;
        }
        items.push_back(j);
    }
    return {{"totalPaid", r.totalPaid}, {"failures", r.failures()}, {"items", items}};
}

std::unique_ptr<PatchEncoder> requireEncoder(const Config& c) { return loadEncoder(c.paths.encoder); }

std::string stemOf(const fs::path& p) {
    std::string s = p.filename().string();
    return s.substr(0, s.find('.'));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Provenance, attribution and royalty settlement for generated images"};
    app.require_subcommand(1);
    Context ctx;
    app.add_option("-c,--config", ctx.configFile, "INI config file; relative paths inside resolve against its directory");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Copy images (or a generated toy set) into the corpus directory");
    fs::path ingestFrom;
    int toyCount = 0, toySize = 128;
    std::uint64_t toySeed = 7;
    ingest->add_option("--from", ingestFrom, "Directory of .png/.ppm images");
    ingest->add_option("--toy", toyCount, "Generate this many procedural images instead");
    ingest->add_option("--size", toySize, "Side of generated images");
    ingest->add_option("--seed", toySeed, "Seed for generated images");

    auto* trainEnc = app.add_subcommand("train-encoder", "Train the patch fingerprint encoder");
    auto* trainVer = app.add_subcommand("train-verifier", "Train the pairwise verifier on a frozen encoder");
    auto* buildIdx = app.add_subcommand("build-index", "Embed all corpus patches and build the IVF-PQ index");

    auto* attribute = app.add_subcommand("attribute", "Attribute a query image to corpus images");
    fs::path queryPath, reportPath, plotPath;
    attribute->add_option("--query", queryPath, "Query image")->required();
    attribute->add_option("--report", reportPath, "Credit report output (stdout when absent)");
    attribute->add_option("--plot", plotPath, "SVG bar chart output");

    auto* faucet = app.add_subcommand("faucet", "Issue test currency to a wallet");
    std::string faucetTo;
    ledger::Amount faucetAmount = 0;
    faucet->add_option("--to", faucetTo, "Wallet label or 0x address")->required();
    faucet->add_option("--amount", faucetAmount, "Micro-units")->required();

    auto* mint = app.add_subcommand("mint-ora", "Sign, mint and bind an asset (ORA flow)");
    fs::path mintAsset;
    std::string mintCreator, mintName;
    mint->add_option("--asset", mintAsset, "Asset file; the manifest is written beside it")->required();
    mint->add_option("--creator", mintCreator, "Creator label (its key is derived from the label)")->required();
    mint->add_option("--name", mintName, "Asset name recorded in the manifest (default: file stem)");

    auto* issue = app.add_subcommand("issue-right", "Issue a rights token for a minted asset");
    fs::path issueAsset;
    std::string issueCreator, issueHolder, issueKind = "TrainModel", issueLabel;
    ledger::Amount issueRoyalty = 1000;
    issue->add_option("--asset", issueAsset, "Minted asset (its manifest names the NFT)")->required();
    issue->add_option("--creator", issueCreator, "Creator label")->required();
    issue->add_option("--holder", issueHolder, "Holder label or 0x address")->required();
    issue->add_option("--kind", issueKind, "TrainModel, GenerateImage, Resell or Custom");
    issue->add_option("--label", issueLabel, "Free text for Custom rights");
    issue->add_option("--base-royalty", issueRoyalty, "Micro-units paid at weight 1");

    auto* deposit = app.add_subcommand("deposit", "Pay into a creator's Rights contract escrow");
    std::string depositPayer, depositCreator;
    ledger::Amount depositAmount = 0;
    deposit->add_option("--payer", depositPayer, "Payer label")->required();
    deposit->add_option("--creator", depositCreator, "Creator label or 0x Rights contract address")->required();
    deposit->add_option("--amount", depositAmount, "Micro-units")->required();

    auto* settle = app.add_subcommand("settle", "Pay royalties for a credit report");
    fs::path settleReport;
    std::string settlePayer;
    settle->add_option("--report", settleReport, "Credit report JSON")->required();
    settle->add_option("--payer", settlePayer, "Payer label (holder of the rights)")->required();

    auto* verifyProv = app.add_subcommand("verify-provenance", "Verify an asset's manifest and print its provenance graph");
    fs::path verifyAsset;
    verifyProv->add_option("--asset", verifyAsset, "Asset with a sidecar manifest")->required();

    auto* compose = app.add_subcommand("compose-queries", "Write composite queries with ground-truth sidecars");
    fs::path composeOut;
    int composeCount = 10;
    ComposeConfig composeCfg;
    std::uint64_t composeSeed = 11;
    compose->add_option("--out", composeOut, "Output directory")->required();
    compose->add_option("--count", composeCount, "Number of queries");
    compose->add_option("--severity", composeCfg.severity, "Per-tile augmentation severity in [0, 1]");
    compose->add_option("--min-sources", composeCfg.minSources);
    compose->add_option("--max-sources", composeCfg.maxSources);
    compose->add_option("--seed", composeSeed);

    auto* demo = app.add_subcommand("demo-mnist-scale", "End-to-end provenance, attribution and settlement run");
    DemoConfig demoCfg;
    int demoCorpus = 500;
    bool demoPretrained = false;
    demo->add_option("--workdir", demoCfg.workdir, "Output directory")->required();
    demo->add_option("--toy", demoCorpus, "Procedural corpus size when the configured corpus directory is absent");
    demo->add_option("--queries", demoCfg.queries);
    demo->add_option("--creators", demoCfg.creators);
    demo->add_option("--severity", demoCfg.compose.severity);
    demo->add_flag("--pretrained", demoPretrained, "Use the configured encoder and verifier checkpoints");

    auto* conceptCmd = app.add_subcommand("concept-attribution",
                                       "Apportion a fresh concept rendering over a nine-image concept corpus");
    std::uint64_t conceptSeed = 21;
    fs::path conceptReport;
    conceptCmd->add_option("--seed", conceptSeed);
    conceptCmd->add_option("--report", conceptReport, "Credit report output (stdout when absent)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << json{{"error", "InvalidArgument"}, {"message", e.what()}}.dump() << "\n";
        return 2;
    }

    try {
        ctx.load();
        Config& cfg = ctx.config;
        const Paths& paths = cfg.paths;

        if (*ingest) {
            if (ingestFrom.empty() == (toyCount == 0)) fail(ErrorCode::InvalidArgument, "give exactly one of --from or --toy");
            const Corpus corpus = toyCount > 0 ? generateToyCorpus(toyCount, toySize, toySeed) : loadCorpusDir(ingestFrom);
            saveCorpusDir(paths.corpus, corpus);
            print({{"corpus", paths.corpus.string()}, {"images", corpus.size()}});
        } else if (*trainEnc) {
            EncoderTrainReport report;
            const auto enc = trainEncoder(loadCorpusDir(paths.corpus), cfg.encoder, &report);
            enc.save(paths.encoder);
            print({{"encoder", paths.encoder.string()},
                   {"digest", enc.parameterDigest().hex()},
                   {"finalLoss", report.stepLoss.empty() ? 0.0 : report.stepLoss.back()},
                   {"validationGap", report.validationGap()}});
        } else if (*trainVer) {
            const auto enc = ToyConvEncoder::load(paths.encoder);
            VerifierTrainReport report;
            const auto ver = trainVerifier(loadCorpusDir(paths.corpus), enc, cfg.verifier, &report);
            ver.save(paths.verifier);
            print({{"verifier", paths.verifier.string()},
                   {"digest", ver.parameterDigest().hex()},
                   {"validationAuc", report.validationAuc},
                   {"medianPositive", report.medianPositive},
                   {"medianNegative", report.medianNegative}});
        } else if (*buildIdx) {
            const auto enc = requireEncoder(cfg);
            const auto records = embedCorpus(*enc, loadCorpusDir(paths.corpus));
            writeEmbeddingFile(paths.embeddings, records);
            const auto index = IvfPqIndex::build(records, cfg.index, cfg.indexSeed);
            index.save(paths.index);
            print({{"index", paths.index.string()}, {"vectors", index.size()}, {"digest", index.digest().hex()}});
        } else if (*attribute) {
            const auto enc = requireEncoder(cfg);
            const auto ver = VerifierModel::load(paths.verifier);
            const auto index = IvfPqIndex::load(paths.index);
            const Corpus corpus = loadCorpusDir(paths.corpus);
            CorpusPatchSource source(corpus, *enc, ver);
            const auto report = attributeImage(loadImage(queryPath), stemOf(queryPath), index, *enc, ver, source, cfg.attribution);
            if (!plotPath.empty()) binio::writeText(plotPath, creditPlotSvg(report));
            if (reportPath.empty()) {
                std::cout << creditReportJson(report);
            } else {
                writeCreditReport(reportPath, report);
                print({{"report", reportPath.string()}, {"ranking", report.ranking()}, {"royaltyWeights", report.royaltyWeights}});
            }
        } else if (*faucet) {
            auto l = openLedger(paths);
            const Address to = resolveWallet(faucetTo);
            require(l.execute(to, ledger::Faucet{to, faucetAmount}), "faucet");
            saveLedger(l, paths);
            print({{"wallet", to.str()}, {"balance", l.state().balance(to)}});
        } else if (*mint) {
            auto l = openLedger(paths);
            auto store = ManifestStore::open(paths.manifests());
            AssetStore assets(paths.assets());
            const CreatorIdentity creator{mintCreator, crypto::KeyPair::fromLabel(mintCreator)};
            const Address wallet = creator.wallet();
            Address rights, nft;
            bool haveRights = false;
            for (const auto& [addr, rc] : l.state().rightsContracts)
                if (rc.creator == wallet) { rights = addr; haveRights = true; break; }
            if (!haveRights) {
                const auto out = l.execute(wallet, ledger::DeployRightsContract{});
                require(out, "deploy Rights contract");
                rights = *out.contract;
            }
            if (auto existing = nftContractOf(l.state(), wallet)) {
                nft = *existing;
            } else {
                const auto out = l.execute(wallet, ledger::DeployNftContract{mintCreator + " collection"});
                require(out, "deploy NFT contract");
                nft = *out.contract;
            }
            OraOptions opts;
            opts.extraAssertions.push_back(makeAssetNameAssertion(mintName.empty() ? stemOf(mintAsset) : mintName));
            GuidSource guids;
            const Bytes bytes = binio::readFile(mintAsset);
            const auto res = mintOraAsset(l, store, assets, bytes, creator, rights, nft, guids, opts);
            writeSidecar(mintAsset, res.manifest);
            saveLedger(l, paths);
            print({{"manifest", res.manifest.guid.str()},
                   {"nftContract", res.nft.contract.str()},
                   {"nftId", res.nft.id},
                   {"rightsContract", rights.str()},
                   {"uri", res.uri}});
        } else if (*issue) {
            auto l = openLedger(paths);
            const Address creator = resolveWallet(issueCreator);
            const auto key = nftOfAsset(issueAsset);
            const Address owner = l.state().ownerOf(key);
            const auto out = l.execute(creator, ledger::IssueRight{owner, resolveWallet(issueHolder),
                                                                   ledger::rightKindFromName(issueKind), issueLabel, key,
                                                                   issueRoyalty});
            require(out, "issue right");
            saveLedger(l, paths);
            print({{"rightsContract", owner.str()}, {"rightId", *out.id}});
        } else if (*deposit) {
            auto l = openLedger(paths);
            const Address payer = resolveWallet(depositPayer);
            const Address rights = depositCreator.rfind("0x", 0) == 0 && l.state().isRightsContract(Address::parse(depositCreator))
                                       ? Address::parse(depositCreator)
                                       : contractOf(l.state(), resolveWallet(depositCreator));
            require(l.execute(payer, ledger::DepositEscrow{rights, depositAmount}), "deposit");
            saveLedger(l, paths);
            print({{"rightsContract", rights.str()}, {"escrow", l.state().rightsContract(rights).escrow.at(payer)}});
        } else if (*settle) {
            auto l = openLedger(paths);
            const auto store = ManifestStore::open(paths.manifests());
            const auto report = readCreditReport(settleReport);
            const auto result = settleRoyalties(report, indexByAssetName(store), store, l, resolveWallet(settlePayer));
            saveLedger(l, paths);
            print(settlementJson(result));
            if (result.failures() > 0) return 3;
        } else if (*verifyProv) {
            const auto store = ManifestStore::open(paths.manifests());
            const Manifest root = readSidecar(verifyAsset);
            const Bytes asset = binio::readFile(verifyAsset);
            const auto check = verifyManifest(root, store, ByteView(asset));
            std::optional<ledger::Ledger> l;
            if (fs::exists(paths.ledger)) l = ledger::Ledger::load(paths.ledger, paths.ledgerLog());
            const auto graph = traverseProvenance(root, store);
            json nodes = json::array();
            for (const auto& n : graph.nodes) {
                json j{{"guid", n.manifest.guid.str()}, {"depth", n.depth}, {"creator", n.manifest.creator.name}};
                if (n.role) j["role"] = ingredientRoleName(*n.role);
                if (const auto name = assetName(n.manifest)) j["asset"] = *name;
                try {
                    if (l || !n.manifest.assetReference())
                        j["wallet"] = extractWalletRoute(n.manifest, l ? l->state() : ledger::LedgerState{}).str();
                } catch (const Error& e) {
                    j["walletError"] = errorCodeName(e.code());
                }
                nodes.push_back(j);
            }
            json failures = json::array();
            for (const auto& f : check.failures) failures.push_back({{"kind", verificationFailureName(f.kind)}, {"detail", f.detail}});
            json missing = json::array();
            for (const auto& g : graph.missing) missing.push_back(g.str());
            print({{"valid", check.valid}, {"failures", failures}, {"nodes", nodes}, {"missing", missing}});
            if (!check.valid) return 3;
        } else if (*compose) {
            const Corpus corpus = loadCorpusDir(paths.corpus);
            fs::create_directories(composeOut);
            json written = json::array();
            for (int i = 0; i < composeCount; ++i) {
                char id[32];
                std::snprintf(id, sizeof id, "query-%04d", i);
                const auto q = composeQuery(corpus, composeCfg, splitmix64(composeSeed + static_cast<std::uint64_t>(i)), id);
                const fs::path file = composeOut / (std::string(id) + ".png");
                saveImage(file, q.image);
                binio::writeText(truthPath(file), compositeTruthJson(q.truth));
                written.push_back({{"query", file.string()}, {"sources", q.truth.sources}});
            }
            print(written);
        } else if (*demo) {
            const Corpus corpus = fs::exists(paths.corpus) ? loadCorpusDir(paths.corpus) : generateToyCorpus(demoCorpus, 128, 7);
            demoCfg.attribution = cfg.attribution;
            demoCfg.index = cfg.index;
            demoCfg.encoder = cfg.encoder;
            demoCfg.verifier = cfg.verifier;
            std::unique_ptr<PatchEncoder> enc;
            std::optional<VerifierModel> ver;
            DemoModels models;
            if (demoPretrained) {
                enc = requireEncoder(cfg);
                ver = VerifierModel::load(paths.verifier);
                models.encoder = enc.get();
                models.verifier = &*ver;
            }
            const auto result = runMnistScaleDemo(corpus, demoCfg, models, &std::cerr);
            std::cout << demoSummaryJson(result);
            if (!result.ok()) return 3;
        } else if (*conceptCmd) {
            const auto enc = requireEncoder(cfg);
            const auto ver = VerifierModel::load(paths.verifier);
            const Corpus concepts = generateConceptCorpus(128, conceptSeed);
            IndexParams ip = cfg.index;
            ip.nlist = 1;
            const auto index = IvfPqIndex::build(embedCorpus(*enc, concepts), ip, cfg.indexSeed);
            CorpusPatchSource source(concepts, *enc, ver);
            const Image generated = renderConcept(128, conceptSeed, splitmix64(conceptSeed + 1000));
            const auto report = attributeImage(generated, "concept-render", index, *enc, ver, source, cfg.attribution);
            if (conceptReport.empty()) {
                std::cout << creditReportJson(report);
            } else {
                writeCreditReport(conceptReport, report);
                print({{"report", conceptReport.string()}, {"royaltyWeights", report.royaltyWeights}});
            }
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << json{{"error", errorCodeName(e.code())}, {"message", e.what()}}.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "Io"}, {"message", e.what()}}.dump() << "\n";
        return 1;
    }
}
