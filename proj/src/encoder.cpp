#include "ekila/encoder.hpp"

#include <cmath>
#include <numeric>

#include "ekila/binio.hpp"
#include "ekila/contrastive.hpp"
#include "ekila/crypto.hpp"
#include "ekila/embedding_file.hpp"

namespace ekila {

namespace {

constexpr std::uint32_t kEncoderCheckpointVersion = 1;
constexpr int kInferenceChunk = 64;

/// Patches cut at another input size are resampled into `scratch`.
std::vector<const FloatImage*> pixelsOf(const std::vector<Patch>& patches, std::size_t begin, std::size_t end, int side,
                                        std::vector<FloatImage>& scratch) {
    std::vector<const FloatImage*> out;
    scratch.clear();
    scratch.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        const FloatImage& px = patches[i].pixels;
        if (px.width == side && px.height == side) {
            out.push_back(&px);
        } else {
            scratch.push_back(resizeBilinear(px, side, side));
            out.push_back(&scratch.back());
        }
    }
    return out;
}

void writeParam(binio::Writer& w, const Eigen::MatrixXf& m) {
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    w.floats(std::span<const float>(m.data(), static_cast<std::size_t>(m.size())));
}

}  // namespace

std::vector<FeatureMap> PatchEncoder::featureMapBatch(const std::vector<Patch>&) const {
    fail(ErrorCode::InvalidArgument, "this encoder does not expose feature maps");
}

Embedding PatchEncoder::embed(const Patch& p) const { return embedBatch({p}).col(0); }

FeatureMap PatchEncoder::featureMap(const Patch& p) const { return featureMapBatch({p}).front(); }

ToyConvEncoder::ToyConvEncoder(const EncoderArch& arch, std::uint64_t seed) : model_(arch) { model_.init(seed); }

Eigen::MatrixXf ToyConvEncoder::embedBatch(const std::vector<Patch>& patches) const {
    const int side = model_.arch().inputSize;
    Eigen::MatrixXf out(dim(), static_cast<Eigen::Index>(patches.size()));
    std::vector<FloatImage> scratch;
    for (std::size_t b = 0; b < patches.size(); b += kInferenceChunk) {
        const std::size_t e = std::min(patches.size(), b + kInferenceChunk);
        const int n = static_cast<int>(e - b);
        out.middleCols(static_cast<Eigen::Index>(b), n) =
            model_.embed(packImages<float>(pixelsOf(patches, b, e, side, scratch), side), n);
    }
    return out;
}

std::vector<FeatureMap> ToyConvEncoder::featureMapBatch(const std::vector<Patch>& patches) const {
    const EncoderArch& arch = model_.arch();
    const int side = arch.featureSide();
    std::vector<FeatureMap> out;
    out.reserve(patches.size());
    std::vector<FloatImage> scratch;
    for (std::size_t b = 0; b < patches.size(); b += kInferenceChunk) {
        const std::size_t e = std::min(patches.size(), b + kInferenceChunk);
        const int n = static_cast<int>(e - b);
        const Eigen::MatrixXf f = model_.features(packImages<float>(pixelsOf(patches, b, e, arch.inputSize, scratch), arch.inputSize), n);
        for (int i = 0; i < n; ++i)
            out.push_back(FeatureMap{side, side, arch.featureDepth(), f.middleCols(static_cast<Eigen::Index>(i) * side * side, side * side)});
    }
    return out;
}

Digest256 ToyConvEncoder::parameterDigest() const {
    binio::Writer w;
    for (const auto* p : model_.params()) writeParam(w, p->value);
    return crypto::sha256(w.bytes());
}

void ToyConvEncoder::save(const std::filesystem::path& path) const {
    const EncoderArch& a = model_.arch();
    binio::Writer w;
    w.magic("EKENC");
    w.u32(kEncoderCheckpointVersion);
    w.raw(parameterDigest().view());
    w.u32(static_cast<std::uint32_t>(a.inputSize));
    for (int c : a.channels) w.u32(static_cast<std::uint32_t>(c));
    for (int s : a.strides) w.u32(static_cast<std::uint32_t>(s));
    w.u32(static_cast<std::uint32_t>(a.headGrid));
    w.u32(static_cast<std::uint32_t>(a.embedDim));
    for (const auto* p : model_.params()) writeParam(w, p->value);
    binio::writeFile(path, w.bytes());
}

ToyConvEncoder ToyConvEncoder::load(const std::filesystem::path& path) {
    const Bytes data = binio::readFile(path);
    binio::Reader r(data);
    r.expectMagic("EKENC");
    const auto version = r.u32();
    if (version != kEncoderCheckpointVersion)
        fail(ErrorCode::UnsupportedVersion, "encoder checkpoint version " + std::to_string(version));
    Digest256 stored;
    ByteView d = r.raw(32);
    std::copy(d.begin(), d.end(), stored.bytes.begin());
    EncoderArch a;
    a.inputSize = static_cast<int>(r.u32());
    for (int& c : a.channels) c = static_cast<int>(r.u32());
    for (int& s : a.strides) s = static_cast<int>(r.u32());
    a.headGrid = static_cast<int>(r.u32());
    a.embedDim = static_cast<int>(r.u32());
    for (int c : a.channels)
        if (c <= 0 || c > 4096) fail(ErrorCode::Format, "implausible channel count in checkpoint");
    for (int s : a.strides)
        if (s <= 0 || s > 8) fail(ErrorCode::Format, "implausible stride in checkpoint");
    if (a.inputSize <= 0 || a.inputSize > 4096 || a.headGrid <= 0 || a.embedDim <= 0 || a.embedDim > 65536)
        fail(ErrorCode::Format, "implausible encoder architecture in checkpoint");
    ToyConvEncoder enc(ToyEncoder<float>{a});
    for (auto* p : enc.model_.params()) {
        const auto rows = r.u32(), cols = r.u32();
        if (rows != p->value.rows() || cols != p->value.cols()) fail(ErrorCode::Format, "parameter shape mismatch in checkpoint");
        for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = r.f32();
    }
    if (!r.atEnd()) fail(ErrorCode::Format, "trailing bytes in encoder checkpoint");
    if (enc.parameterDigest() != stored) fail(ErrorCode::Format, "encoder checkpoint digest mismatch");
    return enc;
}

EncoderValidation evaluateEncoder(const PatchEncoder& encoder, const Corpus& images, const AugmentConfig& positive,
                                  std::uint64_t seed) {
    if (images.size() < 2) fail(ErrorCode::CorpusTooSmall, "validation needs at least two images");
    Rng rng(seed);
    std::vector<Patch> clean, aug;
    for (const auto& item : images) {
        const int slot = static_cast<int>(rng.below(kPatchesPerImage));
        clean.push_back(makePatch(item.image, item.id, slot));
        aug.push_back(augment(clean.back(), positive, rng.next()));
    }
    const Eigen::MatrixXf a = encoder.embedBatch(clean);
    const Eigen::MatrixXf p = encoder.embedBatch(aug);
    const Eigen::MatrixXd cross = (a.transpose() * a).cast<double>();
    const auto n = static_cast<double>(images.size());
    EncoderValidation v;
    for (Eigen::Index i = 0; i < a.cols(); ++i) v.positiveCos += a.col(i).cast<double>().dot(p.col(i).cast<double>());
    v.positiveCos /= n;
    v.negativeCos = (cross.sum() - cross.trace()) / (n * (n - 1));
    return v;
}

ToyConvEncoder trainEncoder(const Corpus& corpus, const EncoderTrainConfig& cfg, EncoderTrainReport* report) {
    if (corpus.size() < 100) fail(ErrorCode::CorpusTooSmall, "encoder training needs at least 100 images");
    if (cfg.batchSize < 2) fail(ErrorCode::DegenerateBatch, "batch size must be at least 2");

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const auto nVal = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(cfg.validationFraction * corpus.size())));
    Corpus validation;
    for (std::size_t i = 0; i < nVal; ++i) validation.push_back(corpus[order[i]]);
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(nVal), order.end());

    ToyConvEncoder enc(cfg.arch, splitmix64(cfg.seed));
    ToyEncoder<float>& model = enc.model();
    auto params = model.params();
    nn::AdamConfig adam;
    adam.lr = cfg.learningRate;
    const int side = cfg.arch.inputSize;
    long step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(train);
        for (std::size_t start = 0; start + 2 <= train.size(); start += cfg.batchSize) {
            const std::size_t end = std::min(train.size(), start + cfg.batchSize);
            const int n = static_cast<int>(end - start);
            std::vector<FloatImage> views(2 * static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) {
                const CorpusImage& item = corpus[train[start + i]];
                const int slot = static_cast<int>(rng.below(kPatchesPerImage));
                const Patch patch = makePatch(item.image, item.id, slot, side);
                views[i] = augmentImage(patch.pixels, cfg.anchorAugment, rng.next());
                views[n + i] = augmentImage(patch.pixels, cfg.positiveAugment, rng.next());
            }
            std::vector<const FloatImage*> ptrs;
            for (const auto& v : views) ptrs.push_back(&v);

            for (auto* p : params) p->zeroGrad();
            const Eigen::MatrixXf out = model.forward(packImages<float>(ptrs, side), 2 * n);
            const auto res = contrastiveLoss<float>(out.leftCols(n), out.rightCols(n), cfg.temperature);
            const double loss = res.loss / n;
            if (!std::isfinite(loss)) fail(ErrorCode::DivergedTraining, "encoder loss is not finite at step " + std::to_string(step));
            Eigen::MatrixXf grad(out.rows(), 2 * n);
            grad << res.gradAnchor, res.gradPositive;
            model.backward(grad / static_cast<float>(n));
            ++step;
            for (auto* p : params) nn::adamStep(*p, adam, step);
            if (report) report->stepLoss.push_back(loss);
        }
    }

    if (report) {
        const auto v = evaluateEncoder(enc, validation, cfg.positiveAugment, splitmix64(cfg.seed + 1));
        report->validationPositiveCos = v.positiveCos;
        report->validationNegativeCos = v.negativeCos;
    }
    return enc;
}

PrecomputedEncoder::PrecomputedEncoder(const std::filesystem::path& embeddingFile) {
    for (auto& rec : readEmbeddingFile(embeddingFile)) {
        dim_ = static_cast<int>(rec.values.size());
        const float n = rec.values.norm();
        if (n > 0) rec.values /= n;
        table_[{rec.imageId, rec.slot}] = std::move(rec.values);
    }
}

Eigen::MatrixXf PrecomputedEncoder::embedBatch(const std::vector<Patch>& patches) const {
    Eigen::MatrixXf out(dim_, static_cast<Eigen::Index>(patches.size()));
    for (std::size_t i = 0; i < patches.size(); ++i) {
        auto it = table_.find({patches[i].imageId, patches[i].slot});
        if (it == table_.end())
            fail(ErrorCode::InvalidArgument,
                 "no precomputed embedding for " + patches[i].imageId + " slot " + std::to_string(patches[i].slot));
        out.col(static_cast<Eigen::Index>(i)) = it->second;
    }
    return out;
}

std::unique_ptr<PatchEncoder> loadEncoder(const std::filesystem::path& path) {
    const Bytes head = binio::readFile(path);
    const std::string magic(head.begin(), head.begin() + std::min<std::size_t>(5, head.size()));
    if (magic == "EKENC") return std::make_unique<ToyConvEncoder>(ToyConvEncoder::load(path));
    if (magic == "EKEMB") return std::make_unique<PrecomputedEncoder>(path);
    fail(ErrorCode::Format, "unrecognised encoder file: " + path.string());
}

}  // namespace ekila
