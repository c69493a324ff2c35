#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ekila/augment.hpp"
#include "ekila/nn.hpp"
#include "ekila/patch.hpp"

namespace ekila {

inline constexpr int kEmbeddingDim = 256;

using Embedding = Eigen::VectorXf;

/// Pre-pooling activation, depth x (height * width); column y * width + x.
struct FeatureMap {
    int height = 0;
    int width = 0;
    int depth = 0;
    Eigen::MatrixXf data;
};

struct EncoderArch {
    int inputSize = kEncoderInputSize;
    std::array<int, 4> channels{16, 32, 64, 64};
    std::array<int, 4> strides{2, 2, 2, 1};
    int headGrid = 2;  // feature map is average-pooled to headGrid x headGrid cells
    int embedDim = kEmbeddingDim;

    int featureSide() const {
        int s = inputSize;
        for (int st : strides) s = (s - 1) / st + 1;
        return s;
    }
    int featureDepth() const { return channels.back(); }
    bool operator==(const EncoderArch&) const = default;
};

/// Packs patches into a 3 x (batch * side * side) activation, shifted to [-0.5, 0.5].
template <class T>
nn::Mat<T> packImages(const std::vector<const FloatImage*>& images, int side) {
    nn::Mat<T> x(3, static_cast<Eigen::Index>(images.size()) * side * side);
    for (std::size_t b = 0; b < images.size(); ++b) {
        const FloatImage& img = *images[b];
        if (img.width != side || img.height != side) fail(ErrorCode::ShapeMismatch, "patch is not at encoder input size");
        for (int y = 0; y < side; ++y)
            for (int px = 0; px < side; ++px) {
                const Eigen::Index col = (static_cast<Eigen::Index>(b) * side + y) * side + px;
                for (int c = 0; c < 3; ++c) x(c, col) = static_cast<T>(img.at(px, y, c) - 0.5f);
            }
    }
    return x;
}

/// Four conv+relu blocks, then a pooled linear head with l2 normalisation.
template <class T>
class ToyEncoder {
public:
    explicit ToyEncoder(const EncoderArch& arch = {}) : arch_(arch) {
        int cin = 3;
        for (int i = 0; i < 4; ++i) {
            convs_[i] = nn::Conv3x3<T>(cin, arch.channels[i], arch.strides[i]);
            cin = arch.channels[i];
        }
        const int side = arch.featureSide();
        if (side % arch.headGrid != 0) fail(ErrorCode::InvalidArgument, "feature side not divisible by head grid");
        head_ = nn::Linear<T>(cin * arch.headGrid * arch.headGrid, arch.embedDim);
    }

    void init(std::uint64_t seed) {
        Rng rng(seed);
        for (auto& c : convs_) c.init(rng);
        head_.init(rng);
    }

    const EncoderArch& arch() const { return arch_; }

    /// Feature maps for a packed batch: depth x (batch * side * side).
    nn::Mat<T> features(const nn::Mat<T>& x, int batch) const {
        nn::Shape s{batch, arch_.inputSize, arch_.inputSize};
        nn::Mat<T> h = x;
        for (const auto& c : convs_) {
            h = nn::relu<T>(c.apply(h, s));
            s = c.outShape(s);
        }
        return h;
    }

    nn::Mat<T> embedFromFeatures(const nn::Mat<T>& feats, int batch) const {
        return nn::normalizeColumns<T>(head_.apply(poolHead(feats, batch)));
    }

    nn::Mat<T> embed(const nn::Mat<T>& x, int batch) const { return embedFromFeatures(features(x, batch), batch); }

    /// Training forward; caches what backward needs.
    nn::Mat<T> forward(const nn::Mat<T>& x, int batch) {
        nn::Shape s{batch, arch_.inputSize, arch_.inputSize};
        nn::Mat<T> h = x;
        for (int i = 0; i < 4; ++i) {
            acts_[i] = nn::relu<T>(convs_[i].forward(h, s));
            s = convs_[i].outShape(s);
            h = acts_[i];
        }
        batch_ = batch;
        const nn::Mat<T> z = head_.forward(poolHead(h, batch));
        out_ = nn::normalizeColumns<T>(z, &norms_);
        return out_;
    }

    void backward(const nn::Mat<T>& dOut) {
        nn::Mat<T> d = head_.backward(nn::normalizeColumnsBackward<T>(dOut, out_, norms_));
        d = poolHeadBackward(d, batch_);
        for (int i = 3; i >= 0; --i) {
            d = convs_[i].backward(nn::reluBackward<T>(d, acts_[i]));
        }
    }

    std::vector<nn::Param<T>*> params() {
        std::vector<nn::Param<T>*> out;
        for (auto& c : convs_) {
            out.push_back(&c.weight);
            out.push_back(&c.bias);
        }
        out.push_back(&head_.weight);
        out.push_back(&head_.bias);
        return out;
    }

    std::vector<const nn::Param<T>*> params() const {
        std::vector<const nn::Param<T>*> out;
        for (const auto& c : convs_) {
            out.push_back(&c.weight);
            out.push_back(&c.bias);
        }
        out.push_back(&head_.weight);
        out.push_back(&head_.bias);
        return out;
    }

private:
    nn::Mat<T> poolHead(const nn::Mat<T>& feats, int batch) const {
        const int side = arch_.featureSide(), g = arch_.headGrid, cell = side / g;
        const int depth = static_cast<int>(feats.rows());
        nn::Mat<T> pooled = nn::Mat<T>::Zero(static_cast<Eigen::Index>(depth) * g * g, batch);
        const T inv = T(1) / static_cast<T>(cell * cell);
        for (int b = 0; b < batch; ++b)
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) {
                    const Eigen::Index cellIdx = (y / cell) * g + x / cell;
                    pooled.col(b).segment(cellIdx * depth, depth) +=
                        inv * feats.col((static_cast<Eigen::Index>(b) * side + y) * side + x);
                }
        return pooled;
    }

    nn::Mat<T> poolHeadBackward(const nn::Mat<T>& dPooled, int batch) const {
        const int side = arch_.featureSide(), g = arch_.headGrid, cell = side / g;
        const int depth = arch_.featureDepth();
        nn::Mat<T> d(depth, static_cast<Eigen::Index>(batch) * side * side);
        const T inv = T(1) / static_cast<T>(cell * cell);
        for (int b = 0; b < batch; ++b)
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) {
                    const Eigen::Index cellIdx = (y / cell) * g + x / cell;
                    d.col((static_cast<Eigen::Index>(b) * side + y) * side + x) =
                        inv * dPooled.col(b).segment(cellIdx * depth, depth);
                }
        return d;
    }

    EncoderArch arch_;
    std::array<nn::Conv3x3<T>, 4> convs_;
    nn::Linear<T> head_;
    std::array<nn::Mat<T>, 4> acts_;
    nn::Mat<T> out_;
    nn::Vec<T> norms_;
    int batch_ = 0;
};

/// Anything that maps patches to fingerprints. Implementations are immutable once built.
class PatchEncoder {
public:
    virtual ~PatchEncoder() = default;
    virtual int dim() const = 0;
    /// dim x n matrix of unit embeddings.
    virtual Eigen::MatrixXf embedBatch(const std::vector<Patch>& patches) const = 0;
    virtual bool hasFeatureMaps() const { return false; }
    virtual std::vector<FeatureMap> featureMapBatch(const std::vector<Patch>& patches) const;

    Embedding embed(const Patch& p) const;
    FeatureMap featureMap(const Patch& p) const;
};

struct EncoderTrainConfig {
    EncoderArch arch;
    int epochs = 20;
    int batchSize = 32;
    double temperature = 0.1;
    double learningRate = 1e-3;
    double validationFraction = 0.1;
    AugmentConfig anchorAugment = AugmentConfig::mild();
    AugmentConfig positiveAugment = AugmentConfig::strong();
    std::uint64_t seed = 1;
};

class ToyConvEncoder : public PatchEncoder {
public:
    explicit ToyConvEncoder(const EncoderArch& arch = {}, std::uint64_t seed = 1);
    explicit ToyConvEncoder(ToyEncoder<float> model) : model_(std::move(model)) {}

    int dim() const override { return model_.arch().embedDim; }
    Eigen::MatrixXf embedBatch(const std::vector<Patch>& patches) const override;
    bool hasFeatureMaps() const override { return true; }
    std::vector<FeatureMap> featureMapBatch(const std::vector<Patch>& patches) const override;

    const ToyEncoder<float>& model() const { return model_; }
    ToyEncoder<float>& model() { return model_; }
    /// SHA-256 over the little-endian float parameters in declaration order.
    Digest256 parameterDigest() const;

    void save(const std::filesystem::path& path) const;
    static ToyConvEncoder load(const std::filesystem::path& path);

private:
    ToyEncoder<float> model_;
};

struct EncoderTrainReport {
    std::vector<double> stepLoss;  // mean per-entry loss of every step
    double validationPositiveCos = 0;
    double validationNegativeCos = 0;
    double validationGap() const { return validationPositiveCos - validationNegativeCos; }
};

struct EncoderValidation {
    double positiveCos = 0;
    double negativeCos = 0;
};

/// Mean cos(clean, positive-augmented) and mean cross-image cos of clean patches.
EncoderValidation evaluateEncoder(const PatchEncoder& encoder, const Corpus& images, const AugmentConfig& positive,
                                  std::uint64_t seed);

/// Contrastive training on one random slot per image per epoch; a held-out split of
/// the corpus measures the positive/negative cosine gap.
ToyConvEncoder trainEncoder(const Corpus& corpus, const EncoderTrainConfig& config, EncoderTrainReport* report = nullptr);

/// Encoder backed by an embedding file: lookups by (imageId, slot) only.
class PrecomputedEncoder : public PatchEncoder {
public:
    explicit PrecomputedEncoder(const std::filesystem::path& embeddingFile);
    int dim() const override { return dim_; }
    Eigen::MatrixXf embedBatch(const std::vector<Patch>& patches) const override;
    std::size_t size() const { return table_.size(); }

private:
    int dim_ = kEmbeddingDim;
    std::map<std::pair<std::string, int>, Embedding> table_;
};

std::unique_ptr<PatchEncoder> loadEncoder(const std::filesystem::path& path);

}  // namespace ekila
