#include "ekila/toydata.hpp"
#include "ekila/verifier.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ekila;
using ekila::testing::expectError;
using ekila::testing::TempDir;

namespace {

Eigen::MatrixXf randomFeatureMap(Rng& rng, int depth, int side) {
    Eigen::MatrixXf m(depth, side * side);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<float>(std::max(0.0, rng.normal()));
    return m;
}

/// A scorer whose last layer is not zero, so scores vary.
VerifierModel randomScorer(std::uint64_t seed) {
    VerifierModel model(VerifierArch{}, seed);
    Rng rng(seed + 100);
    model.net().fc3.init(rng);
    return model;
}

EncoderArch tinyEncoderArch() {
    EncoderArch a;
    a.inputSize = 16;
    a.channels = {4, 5, 6, 6};
    a.embedDim = 8;
    return a;
}

VerifierTrainConfig tinyVerifierTraining() {
    VerifierTrainConfig c;
    c.arch.inputDepth = 6;
    c.arch.reducedDepth = 4;
    c.arch.hidden1 = 16;
    c.arch.hidden2 = 8;
    c.steps = 3;
    c.batchSize = 4;
    c.hardNegatives = 3;
    c.queueSize = 64;
    c.seed = 5;
    return c;
}

}  // namespace

TEST(Windows, FiftyFiveWindowsOverFiveScales) {
    for (int side : {8, 7, 16, 2}) {
        const auto w = generateWindows(side, side);
        const auto want = oracle::windows(side);
        ASSERT_EQ(w.size(), 55u);
        ASSERT_EQ(want.size(), 55u);
        for (std::size_t i = 0; i < w.size(); ++i) {
            EXPECT_EQ(w[i], (Window{want[i].y, want[i].x, want[i].side, want[i].side})) << side << " #" << i;
            EXPECT_GE(w[i].y, 0);
            EXPECT_LE(w[i].y + w[i].height, side);
            EXPECT_LE(w[i].x + w[i].width, side);
        }
    }
    const auto w8 = generateWindows(8, 8);
    EXPECT_EQ(w8[0], (Window{0, 0, 8, 8}));
    EXPECT_EQ(w8[1], (Window{0, 0, 6, 6}));     // ceil(16 / 3)
    EXPECT_EQ(w8[4], (Window{2, 2, 6, 6}));
    EXPECT_EQ(w8[54], (Window{5, 5, 3, 3}));    // ceil(16 / 6)
    expectError(ErrorCode::NonSquareMap, [] { generateWindows(8, 4); });
}

TEST(Verifier, PoolingMatchesTheReferenceOn50Maps) {
    const VerifierModel model = randomScorer(3);
    Rng rng(4);
    double worst = 0;
    for (int i = 0; i < 50; ++i) {
        const FeatureMap fm{8, 8, 64, randomFeatureMap(rng, 64, 8)};
        const Eigen::MatrixXf got = model.pool(fm);
        const Eigen::MatrixXd want = oracle::pool(model.net(), fm.data, 8);
        ASSERT_EQ(got.rows(), 55);
        ASSERT_EQ(got.cols(), 16);
        worst = std::max(worst, (got.cast<double>() - want).cwiseAbs().maxCoeff());
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(Verifier, CorrelationMatchesTheReferenceOn50Maps) {
    const VerifierModel model = randomScorer(5);
    Rng rng(6);
    double worst = 0;
    for (int i = 0; i < 50; ++i) {
        const Eigen::MatrixXf a = model.pool(FeatureMap{8, 8, 64, randomFeatureMap(rng, 64, 8)});
        const Eigen::MatrixXf b = model.pool(FeatureMap{8, 8, 64, randomFeatureMap(rng, 64, 8)});
        const Eigen::MatrixXf c = Verifier<float>::correlate(a, b);
        worst = std::max(worst, (c.cast<double>() - oracle::correlate(a.cast<double>(), b.cast<double>())).cwiseAbs().maxCoeff());
        // Row-major flattening.
        const auto flat = Verifier<float>::flatten(c);
        EXPECT_EQ(flat(3 * 55 + 7), c(3, 7));
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(Verifier, ScoreIsBitExactlySymmetric) {
    const VerifierModel model = randomScorer(7);
    Rng rng(8);
    std::set<float> distinct;
    for (int i = 0; i < 100; ++i) {
        const FeatureMap a{8, 8, 64, randomFeatureMap(rng, 64, 8)};
        const FeatureMap b{8, 8, 64, randomFeatureMap(rng, 64, 8)};
        const float ab = model.score(a, b), ba = model.score(b, a);
        ASSERT_EQ(ab, ba) << "pair " << i;
        distinct.insert(ab);
    }
    EXPECT_GT(distinct.size(), 1u);
}

TEST(Verifier, UntrainedScorerOutputsExactlyOneHalf) {
    const VerifierModel model(VerifierArch{}, 9);
    Rng rng(10);
    for (int i = 0; i < 10; ++i) {
        const FeatureMap a{8, 8, 64, randomFeatureMap(rng, 64, 8)};
        const FeatureMap b{8, 8, 64, randomFeatureMap(rng, 64, 8)};
        EXPECT_EQ(model.score(a, b), 0.5f);
    }
}

TEST(Verifier, LossMatchesScoresAndBackpropMatchesFiniteDifferences) {
    VerifierArch arch;
    arch.inputDepth = 6;
    arch.reducedDepth = 4;
    arch.hidden1 = 8;
    arch.hidden2 = 4;
    Verifier<double> net(arch);
    net.init(11);
    Rng rng(12);
    net.fc3.init(rng);
    const int side = 4;
    std::vector<nn::Mat<double>> maps;
    for (int i = 0; i < 3; ++i) maps.push_back(randomFeatureMap(rng, 6, side).cast<double>());
    std::vector<const nn::Mat<double>*> ptrs;
    for (const auto& m : maps) ptrs.push_back(&m);
    const std::vector<VerifierPair> pairs{{0, 1, 1.0}, {0, 2, 0.0}, {1, 2, 0.0}, {2, 1, 1.0}};
    const double posWeight = 2.5;

    // Weighted BCE recomputed from the scorer's own probabilities.
    double want = 0, weight = 0;
    for (const auto& p : pairs) {
        const double s = net.scorePooled(net.pool(maps[p.a], side, side), net.pool(maps[p.b], side, side));
        const double w = p.label > 0.5 ? posWeight : 1.0;
        want += w * -(p.label * std::log(s) + (1 - p.label) * std::log(1 - s));
        weight += w;
    }
    for (auto* p : net.params()) p->zeroGrad();
    EXPECT_NEAR(net.loss(ptrs, side, side, pairs, posWeight, true), want / weight, 1e-12);

    const double h = 1e-6;
    for (auto* p : net.params()) {
        for (int trial = 0; trial < 8; ++trial) {
            const auto k = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(p->value.size())));
            const double keep = p->value.data()[k];
            p->value.data()[k] = keep + h;
            const double up = net.loss(ptrs, side, side, pairs, posWeight, false);
            p->value.data()[k] = keep - h;
            const double down = net.loss(ptrs, side, side, pairs, posWeight, false);
            p->value.data()[k] = keep;
            const double fd = (up - down) / (2 * h);
            EXPECT_NEAR(p->grad.data()[k], fd, 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST(Verifier, RejectsMismatchedShapes) {
    const VerifierModel model;
    Rng rng(1);
    expectError(ErrorCode::ShapeMismatch, [&] { model.pool(FeatureMap{8, 8, 32, randomFeatureMap(rng, 32, 8)}); });
    expectError(ErrorCode::ShapeMismatch,
                [] { Verifier<float>::correlate(Eigen::MatrixXf::Ones(55, 16), Eigen::MatrixXf::Ones(55, 8)); });
}

TEST(NegativeQueue, IsFifoWithFixedCapacity) {
    NegativeQueue q(3);
    for (int i = 0; i < 5; ++i) q.push({Eigen::VectorXf::Unit(2, 0), "img" + std::to_string(i), i});
    EXPECT_EQ(q.size(), 3u);
    EXPECT_EQ(q.at(0).key, 2);
    EXPECT_EQ(q.at(2).key, 4);
    EXPECT_EQ(VerifierTrainConfig{}.queueSize, 16384u);
    expectError(ErrorCode::InvalidArgument, [] { NegativeQueue(0); });
}

TEST(NegativeQueue, HardestAreTheMostSimilarOtherImages) {
    NegativeQueue q(10);
    const auto unit = [](float a) { return Eigen::Vector2f(std::cos(a), std::sin(a)).eval(); };
    q.push({unit(0.9f), "far", 0});
    q.push({unit(0.1f), "self", 1});
    q.push({unit(0.2f), "near", 2});
    q.push({unit(0.2f), "near-too", 3});
    q.push({unit(0.5f), "mid", 4});
    const auto top = q.hardest(unit(0.0f), 3, "self");
    ASSERT_EQ(top.size(), 3u);
    EXPECT_EQ(q.at(top[0]).imageId, "near");  // older of the tie first
    EXPECT_EQ(q.at(top[1]).imageId, "near-too");
    EXPECT_EQ(q.at(top[2]).imageId, "mid");
    EXPECT_EQ(q.hardest(unit(0.0f), 10, "self").size(), 4u);
}

TEST(Metrics, AucMatchesPairwiseCount) {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> pos, neg;
        for (int i = 0; i < 40; ++i) pos.push_back(std::round(rng.uniform(0.2, 1.0) * 10) / 10);  // coarse, with ties
        for (int i = 0; i < 55; ++i) neg.push_back(std::round(rng.uniform(0.0, 0.8) * 10) / 10);
        EXPECT_NEAR(rocAuc(pos, neg), oracle::auc(pos, neg), 1e-12);
    }
    EXPECT_DOUBLE_EQ(rocAuc({1, 2}, {0}), 1.0);
    EXPECT_DOUBLE_EQ(rocAuc({0.5}, {0.5}), 0.5);
    expectError(ErrorCode::InvalidArgument, [] { rocAuc({}, {1}); });
}

TEST(Metrics, Median) {
    EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2.0);
    EXPECT_DOUBLE_EQ(median({4, 1, 2, 3}), 2.5);
    expectError(ErrorCode::InvalidArgument, [] { median({}); });
}

TEST(VerifierModel, CheckpointRoundTripsAndRefusesOtherVersions) {
    TempDir dir;
    const VerifierModel model = randomScorer(14);
    model.save(dir / "v.ckpt");
    const VerifierModel back = VerifierModel::load(dir / "v.ckpt");
    EXPECT_EQ(back.parameterDigest(), model.parameterDigest());
    EXPECT_EQ(back.net().arch(), model.net().arch());
    ekila::testing::setFileVersion(dir / "v.ckpt", 2);
    expectError(ErrorCode::UnsupportedVersion, [&] { VerifierModel::load(dir / "v.ckpt"); });
    binio::writeText(dir / "v.ckpt", "EKENC");
    expectError(ErrorCode::Format, [&] { VerifierModel::load(dir / "v.ckpt"); });
}

TEST(VerifierTraining, IsDeterministicInTheSeed) {
    const Corpus corpus = generateToyCorpus(100, 32, 6);
    const ToyConvEncoder encoder(tinyEncoderArch(), 3);
    VerifierTrainReport r1, r2;
    const auto a = trainVerifier(corpus, encoder, tinyVerifierTraining(), &r1);
    const auto b = trainVerifier(corpus, encoder, tinyVerifierTraining(), &r2);
    EXPECT_EQ(a.parameterDigest(), b.parameterDigest());
    EXPECT_EQ(r1.stepLoss, r2.stepLoss);
    EXPECT_EQ(r1.stepLoss.size(), 3u);
    EXPECT_EQ(r1.validationAuc, r2.validationAuc);
}

TEST(VerifierTraining, BothMiningSpacesTrainDeterministically) {
    const Corpus corpus = generateToyCorpus(100, 32, 6);
    const ToyConvEncoder encoder(tinyEncoderArch(), 3);
    for (NegativeMining mining : {NegativeMining::Fingerprint, NegativeMining::PooledSummary}) {
        auto cfg = tinyVerifierTraining();
        cfg.steps = 6;
        cfg.mining = mining;
        VerifierTrainReport r1, r2;
        const auto a = trainVerifier(corpus, encoder, cfg, &r1);
        const auto b = trainVerifier(corpus, encoder, cfg, &r2);
        EXPECT_EQ(a.parameterDigest(), b.parameterDigest());
        EXPECT_EQ(r1.stepLoss, r2.stepLoss);
        for (double l : r1.stepLoss) EXPECT_TRUE(std::isfinite(l));
        EXPECT_EQ(negativeMiningFromName(negativeMiningName(mining)), mining);
    }
    expectError(ErrorCode::InvalidArgument, [] { negativeMiningFromName("random"); });
}

TEST(VerifierTraining, ZeroStepsReturnsTheInitialisedModel) {
    auto cfg = tinyVerifierTraining();
    cfg.steps = 0;
    const auto model = trainVerifier(generateToyCorpus(100, 32, 6), ToyConvEncoder(tinyEncoderArch(), 3), cfg);
    EXPECT_EQ(model.parameterDigest(), VerifierModel(cfg.arch, splitmix64(cfg.seed)).parameterDigest());
}

TEST(VerifierTraining, RefusesSmallCorpora) {
    expectError(ErrorCode::CorpusTooSmall, [] {
        trainVerifier(generateToyCorpus(50, 32, 1), ToyConvEncoder(tinyEncoderArch(), 3), tinyVerifierTraining());
    });
}

TEST(VerifierEvaluation, UntrainedModelIsAtChance) {
    const Corpus corpus = generateToyCorpus(12, 32, 7);
    const ToyConvEncoder encoder(tinyEncoderArch(), 3);
    VerifierArch arch = tinyVerifierTraining().arch;
    const auto eval = evaluateVerifier(VerifierModel(arch, 1), encoder, corpus, 0.6, 3, 9);
    EXPECT_EQ(eval.positive.size(), corpus.size());
    EXPECT_EQ(eval.negative.size(), corpus.size() * 3);
    EXPECT_DOUBLE_EQ(eval.auc, 0.5);
}
