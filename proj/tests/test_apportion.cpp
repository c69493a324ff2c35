#include <numeric>

#include <nlohmann/json.hpp>

#include "ekila/apportion.hpp"
#include "ekila/embedding_file.hpp"
#include "ekila/toydata.hpp"
#include "support.hpp"

using namespace ekila;
using ekila::testing::expectError;
using ekila::testing::TempDir;

namespace {

ScoredHit scored(const std::string& id, double score, int slot = 0) {
    ScoredHit h;
    h.hit.imageId = id;
    h.hit.slot = slot;
    h.score = score;
    return h;
}

std::vector<ScoredHit> randomHits(Rng& rng, int count, int images) {
    std::vector<ScoredHit> hits;
    for (int i = 0; i < count; ++i)
        hits.push_back(scored("img" + std::to_string(rng.below(static_cast<std::uint64_t>(images))), rng.uniform(),
                              static_cast<int>(rng.below(21))));
    return hits;
}

double sum(const ImageWeights& w) {
    return std::accumulate(w.begin(), w.end(), 0.0, [](double a, const auto& kv) { return a + kv.second; });
}

}  // namespace

TEST(Weights, ThresholdedScoreMargin) {
    const auto w = computeWeights({scored("a", 0.9)}, 0.7);
    ASSERT_EQ(w.size(), 1u);
    EXPECT_NEAR(w.at("a"), 0.2, 1e-12);
}

TEST(Weights, SumOverHitsOfTheSameImage) {
    const auto w = computeWeights({scored("a", 0.9, 1), scored("b", 0.75), scored("a", 0.8, 2), scored("c", 0.7),
                                   scored("d", 0.1)},
                                  0.7);
    ASSERT_EQ(w.size(), 2u);  // c sits exactly on the threshold and d below it
    EXPECT_NEAR(w.at("a"), 0.3, 1e-12);
    EXPECT_NEAR(w.at("b"), 0.05, 1e-12);
}

TEST(Weights, NoPositiveWeightMeansNoCredit) {
    EXPECT_TRUE(computeWeights({scored("a", 0.5), scored("b", 0.7)}, 0.7).empty());
    EXPECT_TRUE(creditPerPatch({}).empty());
    EXPECT_TRUE(creditPerPatch({{"a", 0.0}}).empty());
    // Lambda = 1 admits nothing since scores never exceed 1.
    Rng rng(2);
    EXPECT_TRUE(computeWeights(randomHits(rng, 200, 10), 1.0).empty());
}

TEST(Credits, PerPatchCreditsSumToOne) {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto credits = creditPerPatch(computeWeights(randomHits(rng, 30, 8), 0.5));
        if (credits.empty()) continue;
        EXPECT_NEAR(sum(credits), 1.0, 1e-6);
        for (const auto& [id, c] : credits) EXPECT_GT(c, 0.0);
    }
}

TEST(Credits, WeightsAreMonotoneInEachScore) {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        auto hits = randomHits(rng, 20, 5);
        const auto before = computeWeights(hits, 0.6);
        const auto k = rng.below(hits.size());
        hits[k].score = std::min(1.0, hits[k].score + rng.uniform(0.0, 0.3));
        const auto after = computeWeights(hits, 0.6);
        const auto& id = hits[k].hit.imageId;
        const double wb = before.contains(id) ? before.at(id) : 0.0;
        const double wa = after.contains(id) ? after.at(id) : 0.0;
        EXPECT_GE(wa, wb);
        for (const auto& [other, w] : before)
            if (other != id) {
                EXPECT_DOUBLE_EQ(after.at(other), w);
            }
        // The raised image's share can only grow.
        const auto cb = creditPerPatch(before), ca = creditPerPatch(after);
        EXPECT_GE(ca.contains(id) ? ca.at(id) : 0.0, (cb.contains(id) ? cb.at(id) : 0.0) - 1e-12);
    }
}

TEST(Credits, AggregateRanksAndNormalisesTheTopImages) {
    std::map<int, ImageWeights> perPatch{
        {0, {{"a", 0.5}, {"b", 0.5}}},
        {3, {{"a", 1.0}}},
        {7, {{"c", 0.25}, {"d", 0.75}}},
        {9, {}},
    };
    const auto r = aggregateCredit(perPatch, 2);
    EXPECT_EQ(r.perPatchCredits.size(), 3u);
    EXPECT_DOUBLE_EQ(r.imageCredits.at("a"), 1.5);
    EXPECT_DOUBLE_EQ(r.totalCredit(), 3.0);
    EXPECT_EQ(r.ranking(), (std::vector<std::string>{"a", "d", "b", "c"}));
    ASSERT_EQ(r.royaltyWeights.size(), 2u);
    EXPECT_DOUBLE_EQ(r.royaltyWeights.at("a"), 1.5 / 2.25);
    EXPECT_DOUBLE_EQ(r.royaltyWeights.at("d"), 0.75 / 2.25);
    EXPECT_NEAR(sum(r.royaltyWeights), 1.0, 1e-12);
    expectError(ErrorCode::InvalidArgument, [&] { aggregateCredit(perPatch, 0); });
}

TEST(Credits, RankingBreaksTiesById) {
    const auto r = aggregateCredit({{0, {{"z", 0.5}, {"m", 0.5}}}}, 5);
    EXPECT_EQ(r.ranking(), (std::vector<std::string>{"m", "z"}));
}

TEST(CreditReport, JsonRoundTripsAndRefusesOtherVersions) {
    TempDir dir;
    CreditReport r = aggregateCredit({{0, {{"a", 0.4}, {"b", 0.6}}}, {5, {{"a", 1.0}}}}, 5);
    r.queryImageId = "q\"1";
    r.settings = ApportionConfig{0.65, 20, 4, 8};
    r.matches.push_back(VerifiedMatch{5, "a", 12, 0.91, 0.88});
    writeCreditReport(dir / "r.json", r);
    const CreditReport back = readCreditReport(dir / "r.json");
    EXPECT_EQ(back.queryImageId, r.queryImageId);
    EXPECT_EQ(back.perPatchCredits, r.perPatchCredits);
    EXPECT_EQ(back.imageCredits, r.imageCredits);
    EXPECT_EQ(back.royaltyWeights, r.royaltyWeights);
    EXPECT_EQ(back.settings.topK, 20);
    EXPECT_DOUBLE_EQ(back.settings.lambda, 0.65);
    ASSERT_EQ(back.matches.size(), 1u);
    EXPECT_EQ(back.matches[0].matchSlot, 12);
    EXPECT_EQ(creditReportJson(back), creditReportJson(r));

    auto j = nlohmann::json::parse(creditReportJson(r));
    j["version"] = 2;
    expectError(ErrorCode::UnsupportedVersion, [&] { parseCreditReport(j.dump()); });
    expectError(ErrorCode::Format, [] { parseCreditReport("{\"format\":\"other\",\"version\":1}"); });
    expectError(ErrorCode::Format, [] { parseCreditReport("not json"); });
}

TEST(CreditReport, PlotNamesEveryWeightedImage) {
    const CreditReport r = aggregateCredit({{0, {{"alpha", 0.4}, {"beta", 0.6}}}}, 5);
    const std::string svg = creditPlotSvg(r);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("alpha"), std::string::npos);
    EXPECT_NE(svg.find("beta"), std::string::npos);
}

namespace {

struct TinyPipeline {
    Corpus corpus = generateToyCorpus(20, 32, 31);
    ToyConvEncoder encoder{[] {
        EncoderArch a;
        a.inputSize = 16;
        a.channels = {4, 5, 6, 6};
        a.embedDim = 8;
        return a;
    }(), 2};
    VerifierModel verifier{VerifierArch{.inputDepth = 6, .reducedDepth = 4, .hidden1 = 16, .hidden2 = 8}, 3};
    IvfPqIndex index = IvfPqIndex::build(embedCorpus(encoder, corpus), IndexParams{.nlist = 4, .m = 4, .ksub = 32}, 4);
};

}  // namespace

TEST(Attribution, UntrainedScorerSpreadsCreditAndLambdaOneGivesNothing) {
    TinyPipeline p;
    CorpusPatchSource source(p.corpus, p.encoder, p.verifier);
    ApportionConfig cfg{.lambda = 0.4, .topK = 5, .topM = 3, .nprobe = 4};
    const auto report = attributeImage(p.corpus[3].image, "q", p.index, p.encoder, p.verifier, source, cfg);
    EXPECT_EQ(report.perPatchCredits.size(), 21u);  // every score is 0.5 > 0.4
    for (const auto& [slot, credits] : report.perPatchCredits) EXPECT_NEAR(sum(credits), 1.0, 1e-6);
    EXPECT_EQ(report.matches.size(), 21u * 5u);
    EXPECT_LE(report.royaltyWeights.size(), 3u);
    EXPECT_NEAR(sum(report.royaltyWeights), 1.0, 1e-9);
    EXPECT_NEAR(report.totalCredit(), 21.0, 1e-6);

    cfg.lambda = 1.0;
    const auto none = attributeImage(p.corpus[3].image, "q", p.index, p.encoder, p.verifier, source, cfg);
    EXPECT_TRUE(none.perPatchCredits.empty());
    EXPECT_TRUE(none.imageCredits.empty());
    EXPECT_TRUE(none.royaltyWeights.empty());
}
