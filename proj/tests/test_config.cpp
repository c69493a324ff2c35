#include <cstdlib>

#include "ekila/config.hpp"
#include "support.hpp"

using namespace ekila;
using ekila::testing::expectError;
using ekila::testing::TempDir;

TEST(Config, DefaultsMatchTheDocumentedSettings) {
    const Config c;
    EXPECT_EQ(c.index.nlist, 64);
    EXPECT_EQ(c.index.m, 16);
    EXPECT_DOUBLE_EQ(c.attribution.lambda, 0.7);
    EXPECT_EQ(c.attribution.topK, 30);
    EXPECT_EQ(c.attribution.topM, 5);
    EXPECT_DOUBLE_EQ(c.verifier.arch.gemPower, 3.0);
    EXPECT_EQ(c.verifier.queueSize, 16384u);
    EXPECT_EQ(c.verifier.mining, NegativeMining::Fingerprint);
    // Floats are written in their shortest round-trip form.
    EXPECT_NE(configToIni(c).find("lambda = 0.7\n"), std::string::npos);
    EXPECT_EQ(c.paths.ledgerLog(), "ledger.jsonl");
    EXPECT_EQ(c.paths.manifests(), std::filesystem::path("store") / "manifests");
}

TEST(Config, IniRoundTripsEveryField) {
    Config c;
    c.paths.corpus = "/data/corpus";
    c.encoder.temperature = 0.07;
    c.encoder.epochs = 3;
    c.encoder.learningRate = 2.5e-4;
    c.verifier.arch.hidden1 = 256;
    c.verifier.hardNegatives = 7;
    c.verifier.mining = NegativeMining::PooledSummary;
    c.index.nprobe = 9;
    c.attribution.lambda = 0.55;
    c.attribution.topM = 3;
    c.indexSeed = 99;
    const std::string ini = configToIni(c);
    const Config back = parseConfig(ini, "");
    EXPECT_EQ(configToIni(back), ini);
    EXPECT_EQ(back.paths.corpus, "/data/corpus");
    EXPECT_DOUBLE_EQ(back.encoder.temperature, 0.07);
    EXPECT_DOUBLE_EQ(back.encoder.learningRate, 2.5e-4);
    EXPECT_EQ(back.verifier.arch.hidden1, 256);
    EXPECT_EQ(back.verifier.mining, NegativeMining::PooledSummary);
    EXPECT_EQ(back.index.nprobe, 9);
    EXPECT_EQ(back.indexSeed, 99u);
}

TEST(Config, PartialFilesKeepDefaults) {
    const Config c = parseConfig("[attribution]\nlambda = 0.8\n", "");
    EXPECT_DOUBLE_EQ(c.attribution.lambda, 0.8);
    EXPECT_EQ(c.attribution.topK, 30);
    EXPECT_EQ(c.index.nlist, 64);
}

TEST(Config, RejectsUnknownKeysSectionsAndBadValues) {
    expectError(ErrorCode::ConfigError, [] { parseConfig("[attribution]\nlamda = 0.8\n", ""); });
    expectError(ErrorCode::ConfigError, [] { parseConfig("[attrib]\nlambda = 0.8\n", ""); });
    expectError(ErrorCode::ConfigError, [] { parseConfig("[index]\nnlist = many\n", ""); });
    expectError(ErrorCode::ConfigError, [] { parseConfig("[index]\nnlist = 12x\n", ""); });
    expectError(ErrorCode::ConfigError, [] { parseConfig("[index\nnlist = 1\n", ""); });
    expectError(ErrorCode::ConfigError, [] { parseConfig("[verifier]\nnegative_mining = random\n", ""); });
    expectError(ErrorCode::ConfigError, [] { loadConfig("/nonexistent/ekila.ini"); });
}

TEST(Config, RelativePathsResolveAgainstTheConfigDirectory) {
    TempDir dir;
    binio::writeText(dir / "run.ini", "[paths]\ncorpus = images\nindex = /abs/index.ivf\n");
    const Config c = loadConfig(dir / "run.ini");
    EXPECT_EQ(c.paths.corpus, dir.path() / "images");
    EXPECT_EQ(c.paths.index, "/abs/index.ivf");
    EXPECT_EQ(c.paths.encoder, dir.path() / "encoder.ckpt");
    EXPECT_EQ(c.paths.ledgerLog(), dir.path() / "ledger.jsonl");
}

TEST(Config, EnvironmentOverridesPaths) {
    Config c;
    ::setenv("EKILA_INDEX", "/tmp/other.ivf", 1);
    ::setenv("EKILA_CORPUS", "", 1);  // empty values are ignored
    applyEnvironment(c);
    ::unsetenv("EKILA_INDEX");
    ::unsetenv("EKILA_CORPUS");
    EXPECT_EQ(c.paths.index, "/tmp/other.ivf");
    EXPECT_EQ(c.paths.corpus, "corpus");
}
