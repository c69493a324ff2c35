#pragma once

#include <cmath>
#include <deque>
#include <filesystem>
#include <string>
#include <vector>

#include "ekila/encoder.hpp"

namespace ekila {

/// Rectangle in feature-map cells, 0-based.
struct Window {
    int y = 0;
    int x = 0;
    int height = 0;
    int width = 0;

    int area() const { return height * width; }
    bool operator==(const Window&) const = default;
};

/// Scales s = 1..5 with square side ceil(2 * side / (s + 1)) at s x s evenly spaced
/// positions, giving 1 + 4 + 9 + 16 + 25 = 55 windows. Order: scale, row, column.
std::vector<Window> generateWindows(int height, int width);

inline constexpr int kWindowCount = 55;

struct VerifierArch {
    int inputDepth = 64;
    int reducedDepth = 16;
    double gemPower = 3.0;
    double gemEps = 1e-6;
    int hidden1 = 512;
    int hidden2 = 128;

    int correlationSize() const { return kWindowCount * kWindowCount; }
    bool operator==(const VerifierArch&) const = default;
};

/// Index pair into a list of feature maps, with a 0/1 label.
struct VerifierPair {
    int a = 0;
    int b = 0;
    double label = 0;
};

/// Reduction + window GeM + correlation + MLP scorer. Templated so gradients can be
/// checked in double.
template <class T>
class Verifier {
public:
    explicit Verifier(const VerifierArch& arch = {}) : arch_(arch) {
        reduction = nn::Linear<T>(arch.inputDepth, arch.reducedDepth);
        fc1 = nn::Linear<T>(arch.correlationSize(), arch.hidden1);
        fc2 = nn::Linear<T>(arch.hidden1, arch.hidden2);
        fc3 = nn::Linear<T>(arch.hidden2, 1);
    }

    /// The last layer starts at zero so an untrained scorer outputs exactly 0.5.
    void init(std::uint64_t seed) {
        Rng rng(seed);
        reduction.init(rng);
        fc1.init(rng);
        fc2.init(rng);
        fc3.weight.value.setZero();
        fc3.bias.value.setZero();
    }

    const VerifierArch& arch() const { return arch_; }

    /// 55 x (D/4) matrix of unit rows.
    nn::Mat<T> pool(const nn::Mat<T>& fmap, int height, int width) const {
        nn::Mat<T> g;
        nn::Vec<T> norms;
        poolImpl(fmap, height, width, g, norms);
        return normalizeRows(g, norms);
    }

    /// C(i, j) = <a_i, b_j>, summed in a fixed order so correlate(b, a) is the exact transpose.
    static nn::Mat<T> correlate(const nn::Mat<T>& a, const nn::Mat<T>& b) {
        if (a.rows() != b.rows() || a.cols() != b.cols()) fail(ErrorCode::ShapeMismatch, "correlate: descriptor shapes differ");
        nn::Mat<T> c(a.rows(), b.rows());
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < b.rows(); ++j) {
                T acc = 0;
                for (Eigen::Index k = 0; k < a.cols(); ++k) acc += a(i, k) * b(j, k);
                c(i, j) = acc;
            }
        return c;
    }

    /// Row-major flattening: element (i, j) goes to i * cols + j.
    static nn::Vec<T> flatten(const nn::Mat<T>& c) {
        nn::Vec<T> v(c.size());
        for (Eigen::Index i = 0; i < c.rows(); ++i)
            for (Eigen::Index j = 0; j < c.cols(); ++j) v(i * c.cols() + j) = c(i, j);
        return v;
    }

    T mlp(const nn::Mat<T>& c) const {
        const nn::Vec<T> h1 = fc1.applyOne(flatten(c)).cwiseMax(T(0));
        const nn::Vec<T> h2 = fc2.applyOne(h1).cwiseMax(T(0));
        return fc3.applyOne(h2)(0);
    }

    /// sigma(MLP(C_ab) + MLP(C_ba)) from pooled descriptors.
    T scorePooled(const nn::Mat<T>& a, const nn::Mat<T>& b) const {
        const T z = mlp(correlate(a, b)) + mlp(correlate(b, a));
        return T(1) / (T(1) + std::exp(-z));
    }

    /// Weighted binary cross-entropy over pairs, normalised by the total weight;
    /// positives are weighted by positiveWeight. Accumulates parameter gradients when
    /// backward is set.
    T loss(const std::vector<const nn::Mat<T>*>& maps, int height, int width, const std::vector<VerifierPair>& pairs,
           double positiveWeight, bool backward);

    std::vector<nn::Param<T>*> params() { return {&reduction.weight, &reduction.bias, &fc1.weight, &fc1.bias,
                                                  &fc2.weight, &fc2.bias, &fc3.weight, &fc3.bias}; }
    std::vector<const nn::Param<T>*> params() const {
        return {&reduction.weight, &reduction.bias, &fc1.weight, &fc1.bias, &fc2.weight, &fc2.bias, &fc3.weight, &fc3.bias};
    }

    nn::Linear<T> reduction;
    nn::Linear<T> fc1;
    nn::Linear<T> fc2;
    nn::Linear<T> fc3;

private:
    /// Unnormalised GeM descriptors (55 x d) and their row norms.
    void poolImpl(const nn::Mat<T>& fmap, int height, int width, nn::Mat<T>& g, nn::Vec<T>& norms) const {
        if (fmap.rows() != arch_.inputDepth || fmap.cols() != static_cast<Eigen::Index>(height) * width)
            fail(ErrorCode::ShapeMismatch, "feature map does not match the verifier's input depth");
        const auto wins = generateWindows(height, width);
        const nn::Mat<T> u = clampedPower(reduction.apply(fmap));
        const T invP = static_cast<T>(1.0 / arch_.gemPower);
        g.resize(static_cast<Eigen::Index>(wins.size()), arch_.reducedDepth);
        for (std::size_t w = 0; w < wins.size(); ++w) {
            nn::Vec<T> acc = nn::Vec<T>::Zero(arch_.reducedDepth);
            const Window& win = wins[w];
            for (int y = win.y; y < win.y + win.height; ++y)
                for (int x = win.x; x < win.x + win.width; ++x) acc += u.col(static_cast<Eigen::Index>(y) * width + x);
            acc /= static_cast<T>(win.area());
            for (Eigen::Index c = 0; c < acc.size(); ++c) g(static_cast<Eigen::Index>(w), c) = std::pow(acc(c), invP);
        }
        norms = g.rowwise().norm();
    }

    /// max(x, eps)^p elementwise.
    nn::Mat<T> clampedPower(const nn::Mat<T>& r) const {
        const nn::Mat<T> c = r.cwiseMax(static_cast<T>(arch_.gemEps));
        if (arch_.gemPower == 3.0) return c.cwiseProduct(c).cwiseProduct(c);
        if (arch_.gemPower == 1.0) return c;
        return c.array().pow(static_cast<T>(arch_.gemPower)).matrix();
    }

    static nn::Mat<T> normalizeRows(const nn::Mat<T>& g, const nn::Vec<T>& norms) {
        nn::Mat<T> out = g;
        for (Eigen::Index i = 0; i < g.rows(); ++i) out.row(i) /= norms(i);
        return out;
    }

    VerifierArch arch_;
};

template <class T>
T Verifier<T>::loss(const std::vector<const nn::Mat<T>*>& maps, int height, int width,
                    const std::vector<VerifierPair>& pairs, double positiveWeight, bool backward) {
    const auto wins = generateWindows(height, width);
    const std::size_t nMaps = maps.size();
    std::vector<nn::Mat<T>> g(nMaps), fhat(nMaps);
    std::vector<nn::Vec<T>> norms(nMaps);
    for (std::size_t i = 0; i < nMaps; ++i) {
        poolImpl(*maps[i], height, width, g[i], norms[i]);
        fhat[i] = normalizeRows(g[i], norms[i]);
    }

    const auto np = static_cast<Eigen::Index>(pairs.size());
    const int cs = arch_.correlationSize();
    nn::Mat<T> x(cs, 2 * np);
    for (Eigen::Index k = 0; k < np; ++k) {
        const nn::Mat<T> c = fhat[pairs[k].a] * fhat[pairs[k].b].transpose();
        x.col(k) = flatten(c);
        x.col(np + k) = flatten(c.transpose());
    }
    const nn::Mat<T> h1 = nn::relu<T>(fc1.forward(x));
    const nn::Mat<T> h2 = nn::relu<T>(fc2.forward(h1));
    const nn::Mat<T> out = fc3.forward(h2);

    T totalWeight = 0, total = 0;
    nn::Mat<T> dz(1, np);
    for (Eigen::Index k = 0; k < np; ++k) {
        const T z = out(0, k) + out(0, np + k);
        const T y = static_cast<T>(pairs[k].label);
        const T w = y > T(0.5) ? static_cast<T>(positiveWeight) : T(1);
        // log(1 + e^z) computed without overflow.
        const T softplusPos = std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z)));
        const T softplusNeg = softplusPos - z;
        total += w * (y * softplusNeg + (1 - y) * softplusPos);
        totalWeight += w;
        const T s = T(1) / (T(1) + std::exp(-z));
        dz(0, k) = w * (y * (s - 1) + (1 - y) * s);
    }
    if (!backward) return total / totalWeight;

    dz /= totalWeight;
    nn::Mat<T> dOut(1, 2 * np);
    dOut << dz, dz;
    nn::Mat<T> d = fc3.backward(dOut);
    d = fc2.backward(nn::reluBackward<T>(d, h2));
    const nn::Mat<T> dx = fc1.backward(nn::reluBackward<T>(d, h1));

    std::vector<nn::Mat<T>> dF(nMaps, nn::Mat<T>::Zero(kWindowCount, arch_.reducedDepth));
    for (Eigen::Index k = 0; k < np; ++k) {
        nn::Mat<T> dc(kWindowCount, kWindowCount);
        for (int i = 0; i < kWindowCount; ++i)
            for (int j = 0; j < kWindowCount; ++j)
                dc(i, j) = dx(i * kWindowCount + j, k) + dx(j * kWindowCount + i, np + k);
        dF[pairs[k].a] += dc * fhat[pairs[k].b];
        dF[pairs[k].b] += dc.transpose() * fhat[pairs[k].a];
    }

    const T invP = static_cast<T>(1.0 / arch_.gemPower);
    const T eps = static_cast<T>(arch_.gemEps);
    for (std::size_t i = 0; i < nMaps; ++i) {
        // Row normalisation, then GeM, then the clamp, back to the 1x1 reduction.
        nn::Mat<T> dg(kWindowCount, arch_.reducedDepth);
        for (int w = 0; w < kWindowCount; ++w) {
            const T proj = fhat[i].row(w).dot(dF[i].row(w));
            dg.row(w) = (dF[i].row(w) - proj * fhat[i].row(w)) / norms[i](w);
        }
        const nn::Mat<T> r = reduction.apply(*maps[i]);
        nn::Mat<T> dr = nn::Mat<T>::Zero(r.rows(), r.cols());
        for (int w = 0; w < kWindowCount; ++w) {
            const Window& win = wins[w];
            const T invArea = T(1) / static_cast<T>(win.area());
            for (Eigen::Index c = 0; c < arch_.reducedDepth; ++c) {
                // d(M^(1/p))/dM = M^(1/p - 1) / p, with M = g^p.
                const T gv = g[i](w, c);
                const T dM = dg(w, c) * invP * gv / std::pow(gv, static_cast<T>(arch_.gemPower));
                for (int y = win.y; y < win.y + win.height; ++y)
                    for (int x = win.x; x < win.x + win.width; ++x) {
                        const Eigen::Index col = static_cast<Eigen::Index>(y) * width + x;
                        const T rv = r(c, col);
                        if (rv <= eps) continue;
                        dr(c, col) += dM * invArea * static_cast<T>(arch_.gemPower) * std::pow(rv, static_cast<T>(arch_.gemPower - 1));
                    }
            }
        }
        reduction.weight.grad.noalias() += dr * maps[i]->transpose();
        reduction.bias.grad.col(0) += dr.rowwise().sum();
    }
    return total / totalWeight;
}

/// FIFO ring of pooled summaries used for hard-negative mining.
class NegativeQueue {
public:
    struct Entry {
        Eigen::VectorXf summary;  // unit vector
        std::string imageId;
        int key = 0;  // caller's record id
    };

    explicit NegativeQueue(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) fail(ErrorCode::InvalidArgument, "queue capacity must be positive");
    }

    void push(Entry e) {
        if (entries_.size() == capacity_) entries_.pop_front();
        entries_.push_back(std::move(e));
    }
    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Entry& at(std::size_t i) const { return entries_.at(i); }

    /// Up to k entries most cosine-similar to summary, skipping excludeImageId; highest
    /// similarity first, older entries first on ties.
    std::vector<std::size_t> hardest(const Eigen::VectorXf& summary, std::size_t k, const std::string& excludeImageId) const;

private:
    std::size_t capacity_;
    std::deque<Entry> entries_;
};

/// Where training negatives are mined: the encoder fingerprint, which is the space
/// retrieval hands candidates to the verifier in, or the verifier's own pooled summary.
enum class NegativeMining { Fingerprint, PooledSummary };
std::string_view negativeMiningName(NegativeMining m);
NegativeMining negativeMiningFromName(std::string_view name);

struct VerifierTrainConfig {
    VerifierArch arch;
    int steps = 1500;
    int batchSize = 8;
    double learningRate = 1e-3;
    std::size_t queueSize = std::size_t{1} << 14;
    int hardNegatives = 20;
    NegativeMining mining = NegativeMining::Fingerprint;
    double maxSeverity = 0.6;  // positives use severity ~ U(0, maxSeverity)
    double validationFraction = 0.1;
    std::uint64_t seed = 2;
};

struct VerifierTrainReport {
    std::vector<double> stepLoss;
    double validationAuc = 0;
    double medianPositive = 0;
    double medianNegative = 0;
};

/// Verifier in float with checkpointing; inference is const and thread-safe.
class VerifierModel {
public:
    explicit VerifierModel(const VerifierArch& arch = {}, std::uint64_t seed = 1);
    explicit VerifierModel(Verifier<float> net) : net_(std::move(net)) {}

    Eigen::MatrixXf pool(const FeatureMap& fm) const;
    float scorePooled(const Eigen::MatrixXf& a, const Eigen::MatrixXf& b) const { return net_.scorePooled(a, b); }
    float score(const FeatureMap& a, const FeatureMap& b) const { return scorePooled(pool(a), pool(b)); }
    /// Unit mean of the window descriptors; used for hard-negative mining.
    static Eigen::VectorXf summary(const Eigen::MatrixXf& pooled);

    Verifier<float>& net() { return net_; }
    const Verifier<float>& net() const { return net_; }
    Digest256 parameterDigest() const;
    void save(const std::filesystem::path& path) const;
    static VerifierModel load(const std::filesystem::path& path);

private:
    Verifier<float> net_;
};

/// Positives pair a strongly augmented patch with its clean source; negatives are the
/// queue entries most similar to the query in the configured mining space. Positives
/// are weighted by the hard-negative count.
VerifierModel trainVerifier(const Corpus& corpus, const PatchEncoder& encoder, const VerifierTrainConfig& config,
                            VerifierTrainReport* report = nullptr);

struct VerifierEvaluation {
    std::vector<double> positive;
    std::vector<double> negative;
    double auc = 0;
};

/// Scores (strong-augmented patch, clean source) positives against hard negatives
/// mined by pooled-summary cosine among the other images' clean patches.
VerifierEvaluation evaluateVerifier(const VerifierModel& model, const PatchEncoder& encoder, const Corpus& images,
                                    double maxSeverity, int hardNegatives, std::uint64_t seed);

struct FingerprintAblation {
    VerifierEvaluation verifier;
    VerifierEvaluation fingerprint;  // raw embedding cosine on the same pairs
};

/// Scores one set of (augmented patch, clean source) positives and fingerprint-mined
/// hard negatives twice: with the verifier and with plain fingerprint cosine.
FingerprintAblation compareWithFingerprint(const VerifierModel& model, const PatchEncoder& encoder,
                                           const Corpus& images, double maxSeverity, int hardNegatives,
                                           std::uint64_t seed);

/// P(score of a random positive > score of a random negative), ties counted half.
double rocAuc(const std::vector<double>& positives, const std::vector<double>& negatives);

double median(std::vector<double> values);

}  // namespace ekila
