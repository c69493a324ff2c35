// Drives the ekila executable end to end on a tiny corpus.

#include <cstdlib>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "ekila/apportion.hpp"
#include "ekila/manifest.hpp"
#include "ekila/toydata.hpp"
#include "support.hpp"

using namespace ekila;
using ekila::testing::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = -1;
    std::string out, err;

    json outJson() const { return json::parse(out); }
    json errJson() const { return json::parse(err); }
};

class Cli : public ::testing::Test {
protected:
    TempDir dir;

    void SetUp() override {
        binio::writeText(dir / "ekila.ini",
                         "[encoder]\nepochs = 1\nbatch_size = 8\n"
                         "[verifier]\nsteps = 2\nbatch_size = 2\nhard_negatives = 2\nhidden1 = 16\nhidden2 = 8\nqueue_size = 64\n"
                         "[index]\nnlist = 2\nm = 8\nksub = 16\nnprobe = 2\n"
                         "[attribution]\nlambda = 0.4\ntop_k = 3\n");
    }

    CliRun run(const std::string& args) const {
        const std::string cmd = std::string("'") + EKILA_CLI + "' --config '" + (dir / "ekila.ini").string() + "' " + args +
                                " >'" + (dir / "stdout").string() + "' 2>'" + (dir / "stderr").string() + "'";
        const int status = std::system(cmd.c_str());
        CliRun r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = binio::readText(dir / "stdout");
        r.err = binio::readText(dir / "stderr");
        return r;
    }

    std::string at(const std::string& rel) const { return "'" + (dir / rel).string() + "'"; }
};

}  // namespace

TEST_F(Cli, ErrorsExitNonzeroWithMachineReadableJson) {
    const CliRun none = run("");
    EXPECT_NE(none.code, 0);
    EXPECT_EQ(none.errJson().at("error"), "InvalidArgument");

    const CliRun missing = run("attribute --query " + at("nope.png"));
    EXPECT_EQ(missing.code, 1);
    EXPECT_TRUE(missing.errJson().contains("message"));

    const CliRun both = run("ingest");
    EXPECT_EQ(both.code, 1);
    EXPECT_EQ(both.errJson().at("error"), "InvalidArgument");

    binio::writeText(dir / "ekila.ini", "[index]\nnlist = lots\n");
    const CliRun bad = run("ingest --toy 2");
    EXPECT_EQ(bad.code, 1);
    EXPECT_EQ(bad.errJson().at("error"), "ConfigError");
}

TEST_F(Cli, TrainIndexAttributeAndCompose) {
    ASSERT_EQ(run("ingest --toy 100 --size 64 --seed 3").code, 0);
    ASSERT_EQ(run("train-encoder").code, 0);
    const CliRun ver = run("train-verifier");
    ASSERT_EQ(ver.code, 0) << ver.err;
    EXPECT_TRUE(ver.outJson().contains("validationAuc"));

    const CliRun idx = run("build-index");
    ASSERT_EQ(idx.code, 0) << idx.err;
    EXPECT_EQ(idx.outJson().at("vectors"), 100 * 21);
    // Same inputs, same index.
    const CliRun again = run("build-index");
    EXPECT_EQ(again.outJson().at("digest"), idx.outJson().at("digest"));

    const CliRun comp = run("compose-queries --out " + at("queries") + " --count 2 --seed 5");
    ASSERT_EQ(comp.code, 0) << comp.err;
    ASSERT_EQ(comp.outJson().size(), 2u);
    EXPECT_TRUE(fs::exists(truthPath(dir / "queries" / "query-0000.png")));

    const CliRun attr = run("attribute --query " + at("queries/query-0000.png") + " --report " + at("r.json") + " --plot " +
                         at("r.svg"));
    ASSERT_EQ(attr.code, 0) << attr.err;
    const CreditReport report = readCreditReport(dir / "r.json");
    EXPECT_EQ(report.queryImageId, "query-0000");
    EXPECT_TRUE(fs::exists(dir / "r.svg"));
    // Reports are reproducible byte for byte.
    ASSERT_EQ(run("attribute --query " + at("queries/query-0000.png") + " --report " + at("r2.json")).code, 0);
    EXPECT_EQ(binio::readText(dir / "r.json"), binio::readText(dir / "r2.json"));
}

TEST_F(Cli, MintIssueDepositSettleAndVerify) {
    binio::writeText(dir / "sunset.png", "not really a png, any bytes will do");
    const CliRun mint = run("mint-ora --asset " + at("sunset.png") + " --creator alice");
    ASSERT_EQ(mint.code, 0) << mint.err;
    EXPECT_TRUE(fs::exists(sidecarPath(dir / "sunset.png")));

    ASSERT_EQ(run("faucet --to bob --amount 5000").code, 0);
    ASSERT_EQ(run("issue-right --asset " + at("sunset.png") + " --creator alice --holder bob --kind TrainModel --base-royalty 1000").code, 0);
    const CliRun dep = run("deposit --payer bob --creator alice --amount 800");
    ASSERT_EQ(dep.code, 0) << dep.err;
    EXPECT_EQ(dep.outJson().at("escrow"), 800);

    CreditReport report = aggregateCredit({{0, {{"sunset", 1.0}}}}, 5);
    report.queryImageId = "q";
    writeCreditReport(dir / "credit.json", report);
    // Weight 1 asks for 1000 but only 800 is in escrow.
    const CliRun shortRun = run("settle --report " + at("credit.json") + " --payer bob");
    EXPECT_EQ(shortRun.code, 3);
    EXPECT_EQ(shortRun.outJson().at("items")[0].at("error"), "InsufficientEscrow");

    ASSERT_EQ(run("deposit --payer bob --creator alice --amount 400").code, 0);
    const CliRun paid = run("settle --report " + at("credit.json") + " --payer bob");
    ASSERT_EQ(paid.code, 0) << paid.err;
    EXPECT_EQ(paid.outJson().at("totalPaid"), 1000);

    const CliRun prov = run("verify-provenance --asset " + at("sunset.png"));
    ASSERT_EQ(prov.code, 0) << prov.err;
    const json node = prov.outJson().at("nodes")[0];
    EXPECT_EQ(node.at("creator"), "alice");
    EXPECT_EQ(node.at("asset"), "sunset");
    EXPECT_EQ(node.at("wallet"), crypto::KeyPair::fromLabel("alice").address().str());

    // Tampered content fails verification with exit code 3.
    binio::writeText(dir / "sunset.png", "different bytes");
    const CliRun tampered = run("verify-provenance --asset " + at("sunset.png"));
    EXPECT_EQ(tampered.code, 3);
    EXPECT_FALSE(tampered.outJson().at("valid"));
}
