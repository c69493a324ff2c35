#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ekila/embedding_file.hpp"

namespace ekila {

struct IndexParams {
    int nlist = 1024;
    int m = 16;
    int nprobe = 16;
    int ksub = 256;               // capped at the number of training vectors
    int kmeansMaxIterations = 100;
    double kmeansTolerance = 1e-4;  // relative change in inertia
    int maxTrainPerCentroid = 256;  // k-means training subsample per centroid
};

struct RecordRef {
    std::string imageId;
    int slot = 0;

    bool operator==(const RecordRef&) const = default;
};

struct RetrievalHit {
    std::string imageId;
    int slot = 0;
    std::uint32_t recordId = 0;
    float approxDistance = 0;   // ADC squared distance; 0 for brute force
    float exactSimilarity = 0;  // cosine
    int rank = 0;               // 1-based
};

struct KMeansResult {
    Eigen::MatrixXf centroids;  // dim x k
    std::vector<int> assignment;
    int iterations = 0;
    double inertia = 0;
};

/// Lloyd's algorithm from a k-means++ start. Columns of data are points.
KMeansResult kmeans(const Eigen::MatrixXf& data, int k, std::uint64_t seed, int maxIterations = 100,
                    double tolerance = 1e-4);

/// Index of the nearest column of centroids (squared l2, lowest index on ties).
int nearestCentroid(const Eigen::MatrixXf& centroids, const Eigen::Ref<const Eigen::VectorXf>& x);

/// Scales to unit length; zero vectors are returned unchanged.
Embedding unitVector(const Embedding& v);

/// Inverted file over coarse k-means cells with residual product quantisation.
/// Full vectors are kept for exact cosine re-ranking of the ADC shortlist.
class IvfPqIndex {
public:
    static IvfPqIndex build(const std::vector<EmbeddingRecord>& records, const IndexParams& params, std::uint64_t seed);

    /// nprobe <= 0 uses the configured default. The 4 x topK best ADC candidates
    /// (or every scanned candidate when rerankAll) are re-ranked by exact cosine.
    std::vector<RetrievalHit> search(const Embedding& query, int topK, int nprobe = 0, bool rerankAll = false) const;
    /// nprobe = nlist with every candidate re-ranked.
    std::vector<RetrievalHit> searchExhaustive(const Embedding& query, int topK) const {
        return search(query, topK, params_.nlist, true);
    }

    std::size_t size() const { return records_.size(); }
    int dim() const { return static_cast<int>(vectors_.rows()); }
    const IndexParams& params() const { return params_; }
    const RecordRef& record(std::size_t id) const { return records_.at(id); }
    const std::vector<RecordRef>& records() const { return records_; }
    const Eigen::MatrixXf& vectors() const { return vectors_; }
    const Eigen::MatrixXf& coarseCentroids() const { return coarse_; }
    const std::vector<std::uint32_t>& postingList(int list) const { return listIds_.at(list); }
    /// Coarse cell a record was filed under.
    int listOf(std::uint32_t recordId) const;
    /// Product-quantisation code of a residual vector.
    std::vector<std::uint8_t> encodeResidual(const Eigen::VectorXf& residual) const;

    /// Writes the index file and a "<path>.vectors" sidecar of unit vectors.
    void save(const std::filesystem::path& path) const;
    static IvfPqIndex load(const std::filesystem::path& path);
    Bytes serialize() const;
    Digest256 digest() const;

private:
    IndexParams params_;
    int ksub_ = 0;
    Eigen::MatrixXf coarse_;                  // dim x nlist
    std::vector<Eigen::MatrixXf> codebooks_;  // per subspace: dsub x ksub
    std::vector<std::vector<std::uint32_t>> listIds_;
    std::vector<std::vector<std::uint8_t>> listCodes_;  // m bytes per posting
    std::vector<RecordRef> records_;
    Eigen::MatrixXf vectors_;  // dim x n, unit columns
};

inline constexpr std::uint32_t kIndexFileVersion = 1;

/// Exact cosine top-K; ties broken by (imageId, slot).
std::vector<RetrievalHit> bruteForceSearch(const std::vector<EmbeddingRecord>& records, const Embedding& query, int topK);

/// |approx top-K ∩ exact top-K| / min(K, |exact|), matching on record identity.
double recallAtK(const std::vector<RetrievalHit>& approx, const std::vector<RetrievalHit>& exact, int k);

}  // namespace ekila
