#include "ekila/verifier.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "ekila/binio.hpp"
#include "ekila/crypto.hpp"

namespace ekila {

namespace {

constexpr std::uint32_t kVerifierCheckpointVersion = 1;

void writeParam(binio::Writer& w, const Eigen::MatrixXf& m) {
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    w.floats(std::span<const float>(m.data(), static_cast<std::size_t>(m.size())));
}

Corpus splitValidation(const Corpus& corpus, double fraction, Rng& rng, std::vector<std::size_t>& train) {
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const auto nVal = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(fraction * corpus.size())));
    Corpus val;
    for (std::size_t i = 0; i < nVal; ++i) val.push_back(corpus[order[i]]);
    train.assign(order.begin() + static_cast<std::ptrdiff_t>(nVal), order.end());
    return val;
}

}  // namespace

std::vector<Window> generateWindows(int height, int width) {
    if (height != width) fail(ErrorCode::NonSquareMap, "window generation needs a square feature map");
    if (height <= 0) fail(ErrorCode::InvalidArgument, "feature map must be non-empty");
    std::vector<Window> out;
    for (int s = 1; s <= 5; ++s) {
        const int side = std::clamp((2 * height + s) / (s + 1), 1, height);  // ceil(2h / (s + 1))
        std::vector<int> starts;
        for (int i = 0; i < s; ++i) {
            const int start = s == 1 ? (height - side) / 2
                                     : static_cast<int>(std::lround(static_cast<double>(i) * (height - side) / (s - 1)));
            starts.push_back(std::clamp(start, 0, height - side));
        }
        for (int y : starts)
            for (int x : starts) out.push_back(Window{y, x, side, side});
    }
    return out;
}

std::vector<std::size_t> NegativeQueue::hardest(const Eigen::VectorXf& summary, std::size_t k,
                                                const std::string& excludeImageId) const {
    std::vector<std::pair<float, std::size_t>> scored;
    for (std::size_t i = 0; i < entries_.size(); ++i)
        if (entries_[i].imageId != excludeImageId) scored.emplace_back(entries_[i].summary.dot(summary), i);
    const std::size_t n = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                      [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(scored[i].second);
    return out;
}

VerifierModel::VerifierModel(const VerifierArch& arch, std::uint64_t seed) : net_(arch) { net_.init(seed); }

Eigen::MatrixXf VerifierModel::pool(const FeatureMap& fm) const { return net_.pool(fm.data, fm.height, fm.width); }

Eigen::VectorXf VerifierModel::summary(const Eigen::MatrixXf& pooled) {
    Eigen::VectorXf s = pooled.colwise().mean().transpose();
    const float n = s.norm();
    if (n > 0) s /= n;
    return s;
}

Digest256 VerifierModel::parameterDigest() const {
    binio::Writer w;
    for (const auto* p : net_.params()) writeParam(w, p->value);
    return crypto::sha256(w.bytes());
}

void VerifierModel::save(const std::filesystem::path& path) const {
    const VerifierArch& a = net_.arch();
    binio::Writer w;
    w.magic("EKVER");
    w.u32(kVerifierCheckpointVersion);
    w.raw(parameterDigest().view());
    w.u32(static_cast<std::uint32_t>(a.inputDepth));
    w.u32(static_cast<std::uint32_t>(a.reducedDepth));
    w.f64(a.gemPower);
    w.f64(a.gemEps);
    w.u32(static_cast<std::uint32_t>(a.hidden1));
    w.u32(static_cast<std::uint32_t>(a.hidden2));
    for (const auto* p : net_.params()) writeParam(w, p->value);
    binio::writeFile(path, w.bytes());
}

VerifierModel VerifierModel::load(const std::filesystem::path& path) {
    const Bytes data = binio::readFile(path);
    binio::Reader r(data);
    r.expectMagic("EKVER");
    const auto version = r.u32();
    if (version != kVerifierCheckpointVersion)
        fail(ErrorCode::UnsupportedVersion, "verifier checkpoint version " + std::to_string(version));
    Digest256 stored;
    ByteView d = r.raw(32);
    std::copy(d.begin(), d.end(), stored.bytes.begin());
    VerifierArch a;
    a.inputDepth = static_cast<int>(r.u32());
    a.reducedDepth = static_cast<int>(r.u32());
    a.gemPower = r.f64();
    a.gemEps = r.f64();
    a.hidden1 = static_cast<int>(r.u32());
    a.hidden2 = static_cast<int>(r.u32());
    if (a.inputDepth <= 0 || a.inputDepth > 4096 || a.reducedDepth <= 0 || a.reducedDepth > 4096 || a.hidden1 <= 0 ||
        a.hidden1 > 65536 || a.hidden2 <= 0 || a.hidden2 > 65536 || !(a.gemPower > 0) || !(a.gemEps > 0))
        fail(ErrorCode::Format, "implausible verifier architecture in checkpoint");
    VerifierModel model(Verifier<float>{a});
    for (auto* p : model.net_.params()) {
        const auto rows = r.u32(), cols = r.u32();
        if (rows != p->value.rows() || cols != p->value.cols()) fail(ErrorCode::Format, "parameter shape mismatch in checkpoint");
        for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = r.f32();
    }
    if (!r.atEnd()) fail(ErrorCode::Format, "trailing bytes in verifier checkpoint");
    if (model.parameterDigest() != stored) fail(ErrorCode::Format, "verifier checkpoint digest mismatch");
    return model;
}

VerifierModel trainVerifier(const Corpus& corpus, const PatchEncoder& encoder, const VerifierTrainConfig& cfg,
                            VerifierTrainReport* report) {
    if (corpus.size() < 100) fail(ErrorCode::CorpusTooSmall, "verifier training needs at least 100 images");
    if (!encoder.hasFeatureMaps()) fail(ErrorCode::InvalidArgument, "verifier training needs an encoder with feature maps");
    if (cfg.batchSize < 1) fail(ErrorCode::InvalidArgument, "batch size must be positive");

    Rng rng(cfg.seed);
    std::vector<std::size_t> train;
    const Corpus validation = splitValidation(corpus, cfg.validationFraction, rng, train);

    VerifierModel model(cfg.arch, splitmix64(cfg.seed));
    Verifier<float>& net = model.net();
    auto params = net.params();
    nn::AdamConfig adam;
    adam.lr = cfg.learningRate;
    NegativeQueue queue(cfg.queueSize);

    // Clean feature maps of corpus patches, keyed by image index * 21 + slot.
    std::map<int, FeatureMap> base;
    auto baseMap = [&](std::size_t img, int slot) -> const FeatureMap& {
        const int key = static_cast<int>(img) * kPatchesPerImage + slot;
        auto it = base.find(key);
        if (it == base.end())
            it = base.emplace(key, encoder.featureMap(makePatch(corpus[img].image, corpus[img].id, slot))).first;
        return it->second;
    };

    const bool fingerprintMining = cfg.mining == NegativeMining::Fingerprint;
    std::map<int, Eigen::VectorXf> embeddings;
    auto cleanEmbedding = [&](int key) -> const Eigen::VectorXf& {
        auto it = embeddings.find(key);
        if (it == embeddings.end()) {
            const auto img = static_cast<std::size_t>(key / kPatchesPerImage);
            it = embeddings.emplace(key, encoder.embed(makePatch(corpus[img].image, corpus[img].id, key % kPatchesPerImage))).first;
        }
        return it->second;
    };

    for (int step = 1; step <= cfg.steps; ++step) {
        std::vector<const Eigen::MatrixXf*> maps;
        std::vector<FeatureMap> queries(static_cast<std::size_t>(cfg.batchSize));
        std::vector<Patch> augmented(static_cast<std::size_t>(cfg.batchSize));
        std::vector<int> queryKeys;
        std::map<int, int> mapIndex;  // base key -> position in maps
        std::vector<VerifierPair> pairs;
        int negatives = 0;

        auto baseIndex = [&](int key) {
            auto it = mapIndex.find(key);
            if (it != mapIndex.end()) return it->second;
            const FeatureMap& fm = baseMap(static_cast<std::size_t>(key / kPatchesPerImage), key % kPatchesPerImage);
            maps.push_back(&fm.data);
            return mapIndex[key] = static_cast<int>(maps.size()) - 1;
        };

        // Query maps first so their addresses are stable before pairs are formed.
        std::vector<std::size_t> imgs;
        std::vector<int> slots;
        for (int q = 0; q < cfg.batchSize; ++q) {
            imgs.push_back(train[rng.below(train.size())]);
            slots.push_back(static_cast<int>(rng.below(kPatchesPerImage)));
            const Patch clean = makePatch(corpus[imgs.back()].image, corpus[imgs.back()].id, slots.back());
            AugmentConfig aug;
            aug.severity = rng.uniform(0.0, cfg.maxSeverity);
            augmented[q] = augment(clean, aug, rng.next());
            queries[q] = encoder.featureMap(augmented[q]);
        }
        const Eigen::MatrixXf queryEmbeddings = fingerprintMining ? encoder.embedBatch(augmented) : Eigen::MatrixXf();
        for (int q = 0; q < cfg.batchSize; ++q) maps.push_back(&queries[q].data);
        for (int q = 0; q < cfg.batchSize; ++q) {
            const int key = static_cast<int>(imgs[q]) * kPatchesPerImage + slots[q];
            queryKeys.push_back(key);
            pairs.push_back(VerifierPair{q, baseIndex(key), 1.0});
            const Eigen::VectorXf s = fingerprintMining ? Eigen::VectorXf(queryEmbeddings.col(q))
                                                        : VerifierModel::summary(model.pool(queries[q]));
            for (std::size_t e : queue.hardest(s, static_cast<std::size_t>(cfg.hardNegatives), corpus[imgs[q]].id)) {
                pairs.push_back(VerifierPair{q, baseIndex(queue.at(e).key), 0.0});
                ++negatives;
            }
        }
        const FeatureMap& any = queries.front();
        const double posWeight = std::max(1.0, static_cast<double>(negatives) / cfg.batchSize);

        for (auto* p : params) p->zeroGrad();
        const double loss = net.loss(maps, any.height, any.width, pairs, posWeight, true);
        if (!std::isfinite(loss)) fail(ErrorCode::DivergedTraining, "verifier loss is not finite at step " + std::to_string(step));
        for (auto* p : params) nn::adamStep(*p, adam, step);
        if (report) report->stepLoss.push_back(loss);

        for (int q = 0; q < cfg.batchSize; ++q) {
            const int key = queryKeys[q];
            const FeatureMap& fm = baseMap(static_cast<std::size_t>(key / kPatchesPerImage), key % kPatchesPerImage);
            Eigen::VectorXf s = fingerprintMining ? cleanEmbedding(key) : VerifierModel::summary(model.pool(fm));
            queue.push(NegativeQueue::Entry{std::move(s), corpus[imgs[q]].id, key});
        }
    }

    if (report) {
        const auto eval = evaluateVerifier(model, encoder, validation, cfg.maxSeverity, cfg.hardNegatives, splitmix64(cfg.seed + 1));
        report->validationAuc = eval.auc;
        report->medianPositive = median(eval.positive);
        report->medianNegative = median(eval.negative);
    }
    return model;
}

VerifierEvaluation evaluateVerifier(const VerifierModel& model, const PatchEncoder& encoder, const Corpus& images,
                                    double maxSeverity, int hardNegatives, std::uint64_t seed) {
    if (images.size() < 2) fail(ErrorCode::CorpusTooSmall, "evaluation needs at least two images");
    Rng rng(seed);
    std::vector<Eigen::MatrixXf> clean, query;
    std::vector<Eigen::VectorXf> summaries;
    for (const auto& item : images) {
        const Patch p = makePatch(item.image, item.id, static_cast<int>(rng.below(kPatchesPerImage)));
        AugmentConfig aug;
        aug.severity = rng.uniform(0.0, maxSeverity);
        clean.push_back(model.pool(encoder.featureMap(p)));
        query.push_back(model.pool(encoder.featureMap(augment(p, aug, rng.next()))));
        summaries.push_back(VerifierModel::summary(clean.back()));
    }
    VerifierEvaluation out;
    for (std::size_t i = 0; i < images.size(); ++i) {
        out.positive.push_back(model.scorePooled(query[i], clean[i]));
        const Eigen::VectorXf qs = VerifierModel::summary(query[i]);
        std::vector<std::pair<float, std::size_t>> cands;
        for (std::size_t j = 0; j < images.size(); ++j)
            if (images[j].id != images[i].id) cands.emplace_back(summaries[j].dot(qs), j);
        const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(hardNegatives), cands.size());
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(n), cands.end(),
                          [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
        for (std::size_t k = 0; k < n; ++k) out.negative.push_back(model.scorePooled(query[i], clean[cands[k].second]));
    }
    out.auc = rocAuc(out.positive, out.negative);
    return out;
}

FingerprintAblation compareWithFingerprint(const VerifierModel& model, const PatchEncoder& encoder,
                                           const Corpus& images, double maxSeverity, int hardNegatives,
                                           std::uint64_t seed) {
    if (images.size() < 2) fail(ErrorCode::CorpusTooSmall, "evaluation needs at least two images");
    Rng rng(seed);
    std::vector<Patch> clean, query;
    for (const auto& item : images) {
        clean.push_back(makePatch(item.image, item.id, static_cast<int>(rng.below(kPatchesPerImage))));
        AugmentConfig aug;
        aug.severity = rng.uniform(0.0, maxSeverity);
        query.push_back(augment(clean.back(), aug, rng.next()));
    }
    const Eigen::MatrixXf ec = encoder.embedBatch(clean), eq = encoder.embedBatch(query);
    const auto mc = encoder.featureMapBatch(clean), mq = encoder.featureMapBatch(query);
    std::vector<Eigen::MatrixXf> pc, pq;
    for (std::size_t i = 0; i < images.size(); ++i) {
        pc.push_back(model.pool(mc[i]));
        pq.push_back(model.pool(mq[i]));
    }
    const Eigen::MatrixXf sims = eq.transpose() * ec;  // query x clean cosine

    FingerprintAblation out;
    auto add = [&](std::size_t q, std::size_t c, bool positive) {
        const double v = model.scorePooled(pq[q], pc[c]);
        const double f = sims(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(c));
        (positive ? out.verifier.positive : out.verifier.negative).push_back(v);
        (positive ? out.fingerprint.positive : out.fingerprint.negative).push_back(f);
    };
    for (std::size_t i = 0; i < images.size(); ++i) {
        add(i, i, true);
        std::vector<std::pair<float, std::size_t>> cands;
        for (std::size_t j = 0; j < images.size(); ++j)
            if (images[j].id != images[i].id)
                cands.emplace_back(sims(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), j);
        const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(hardNegatives), cands.size());
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(n), cands.end(),
                          [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
        for (std::size_t k = 0; k < n; ++k) add(i, cands[k].second, false);
    }
    out.verifier.auc = rocAuc(out.verifier.positive, out.verifier.negative);
    out.fingerprint.auc = rocAuc(out.fingerprint.positive, out.fingerprint.negative);
    return out;
}

double rocAuc(const std::vector<double>& positives, const std::vector<double>& negatives) {
    if (positives.empty() || negatives.empty()) fail(ErrorCode::InvalidArgument, "AUC needs positives and negatives");
    // Mann-Whitney U from average ranks of the pooled sample.
    std::vector<std::pair<double, int>> all;
    for (double p : positives) all.emplace_back(p, 1);
    for (double n : negatives) all.emplace_back(n, 0);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double rankSumPos = 0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].first == all[i].first) ++j;
        const double avgRank = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
        for (std::size_t k = i; k < j; ++k)
            if (all[k].second) rankSumPos += avgRank;
        i = j;
    }
    const auto np = static_cast<double>(positives.size()), nn = static_cast<double>(negatives.size());
    return (rankSumPos - np * (np + 1) / 2.0) / (np * nn);
}

double median(std::vector<double> values) {
    if (values.empty()) fail(ErrorCode::InvalidArgument, "median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}


std::string_view negativeMiningName(NegativeMining m) {
    return m == NegativeMining::Fingerprint ? "fingerprint" : "pooled-summary";
}

NegativeMining negativeMiningFromName(std::string_view name) {
    if (name == "fingerprint") return NegativeMining::Fingerprint;
    if (name == "pooled-summary") return NegativeMining::PooledSummary;
    fail(ErrorCode::InvalidArgument, "unknown negative mining space '" + std::string(name) + "'");
}

}  // namespace ekila
