#include "ekila/index.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "ekila/binio.hpp"
#include "ekila/crypto.hpp"

namespace ekila {

namespace {

constexpr Eigen::Index kAssignChunk = 4096;

/// Nearest centroid per column using ||c||^2 - 2 c.x; lowest index wins ties.
std::vector<int> assignNearest(const Eigen::MatrixXf& centroids, const Eigen::MatrixXf& data, double* inertia = nullptr) {
    const Eigen::VectorXf cnorm = centroids.colwise().squaredNorm().transpose();
    std::vector<int> out(static_cast<std::size_t>(data.cols()));
    double total = 0.0;
    for (Eigen::Index start = 0; start < data.cols(); start += kAssignChunk) {
        const Eigen::Index len = std::min(kAssignChunk, data.cols() - start);
        const Eigen::MatrixXf g = centroids.transpose() * data.middleCols(start, len);
        for (Eigen::Index i = 0; i < len; ++i) {
            int best = 0;
            float bestD = std::numeric_limits<float>::infinity();
            for (Eigen::Index c = 0; c < g.rows(); ++c) {
                const float d = cnorm(c) - 2.0f * g(c, i);
                if (d < bestD) {
                    bestD = d;
                    best = static_cast<int>(c);
                }
            }
            out[static_cast<std::size_t>(start + i)] = best;
            total += std::max(0.0, static_cast<double>(data.col(start + i).squaredNorm()) + bestD);
        }
    }
    if (inertia) *inertia = total;
    return out;
}

bool hitOrder(const RetrievalHit& a, const RetrievalHit& b) {
    if (a.exactSimilarity != b.exactSimilarity) return a.exactSimilarity > b.exactSimilarity;
    if (a.imageId != b.imageId) return a.imageId < b.imageId;
    if (a.slot != b.slot) return a.slot < b.slot;
    return a.recordId < b.recordId;
}

std::vector<RetrievalHit> rankExact(const Eigen::MatrixXf& vectors, const std::vector<RecordRef>& records,
                                    const std::vector<std::pair<float, std::uint32_t>>& candidates,
                                    const Embedding& q, int topK) {
    std::vector<RetrievalHit> hits;
    hits.reserve(candidates.size());
    for (const auto& [dist, id] : candidates) {
        RetrievalHit h;
        h.imageId = records[id].imageId;
        h.slot = records[id].slot;
        h.recordId = id;
        h.approxDistance = dist;
        h.exactSimilarity = vectors.col(id).dot(q);
        hits.push_back(std::move(h));
    }
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(topK), hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), hitOrder);
    hits.resize(k);
    for (std::size_t i = 0; i < hits.size(); ++i) hits[i].rank = static_cast<int>(i) + 1;
    return hits;
}

Eigen::MatrixXf subsample(const Eigen::MatrixXf& data, std::size_t maxCols, Rng& rng) {
    if (static_cast<std::size_t>(data.cols()) <= maxCols) return data;
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(data.cols()));
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    idx.resize(maxCols);
    std::sort(idx.begin(), idx.end());
    Eigen::MatrixXf out(data.rows(), static_cast<Eigen::Index>(maxCols));
    for (std::size_t i = 0; i < maxCols; ++i) out.col(static_cast<Eigen::Index>(i)) = data.col(idx[i]);
    return out;
}

}  // namespace

Embedding unitVector(const Embedding& v) {
    const float n = v.norm();
    if (n == 0.0f) return v;
    return v / n;
}

int nearestCentroid(const Eigen::MatrixXf& centroids, const Eigen::Ref<const Eigen::VectorXf>& x) {
    int best = 0;
    float bestD = std::numeric_limits<float>::infinity();
    for (Eigen::Index c = 0; c < centroids.cols(); ++c) {
        const float d = (centroids.col(c) - x).squaredNorm();
        if (d < bestD) {
            bestD = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

KMeansResult kmeans(const Eigen::MatrixXf& data, int k, std::uint64_t seed, int maxIterations, double tolerance) {
    const Eigen::Index n = data.cols();
    if (k <= 0) fail(ErrorCode::InvalidArgument, "k-means needs k >= 1");
    if (n < k) fail(ErrorCode::TooFewVectors, "k-means needs at least k points");
    Rng rng(seed);

    KMeansResult r;
    r.centroids.resize(data.rows(), k);
    const auto first = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    r.centroids.col(0) = data.col(first);
    Eigen::VectorXd d2 = (data.colwise() - data.col(first)).colwise().squaredNorm().transpose().cast<double>();
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0) {
            const double target = rng.uniform() * total;
            double acc = 0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2(i);
                if (acc > target && d2(i) > 0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
        }
        r.centroids.col(c) = data.col(pick);
        d2 = d2.cwiseMin((data.colwise() - data.col(pick)).colwise().squaredNorm().transpose().cast<double>());
    }

    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < maxIterations; ++it) {
        double inertia = 0;
        r.assignment = assignNearest(r.centroids, data, &inertia);
        r.inertia = inertia;
        r.iterations = it + 1;
        if (std::isfinite(prev) && prev - inertia <= tolerance * prev) break;
        prev = inertia;

        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(data.rows(), k);
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.col(r.assignment[i]) += data.col(i).cast<double>();
            ++counts[r.assignment[i]];
        }
        // Empty cells take the points farthest from their current centroid.
        std::vector<std::pair<float, Eigen::Index>> far;
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                r.centroids.col(c) = (sums.col(c) / static_cast<double>(counts[c])).cast<float>();
                continue;
            }
            if (far.empty()) {
                for (Eigen::Index i = 0; i < n; ++i)
                    far.emplace_back((data.col(i) - r.centroids.col(r.assignment[i])).squaredNorm(), i);
                std::sort(far.begin(), far.end(), [](const auto& a, const auto& b) {
                    return a.first != b.first ? a.first > b.first : a.second < b.second;
                });
            }
            const auto pick = far.front().second;
            far.erase(far.begin());
            r.centroids.col(c) = data.col(pick);
        }
    }
    r.assignment = assignNearest(r.centroids, data, &r.inertia);
    return r;
}

IvfPqIndex IvfPqIndex::build(const std::vector<EmbeddingRecord>& records, const IndexParams& params, std::uint64_t seed) {
    if (records.empty()) fail(ErrorCode::TooFewVectors, "cannot build an index from zero vectors");
    const int dim = static_cast<int>(records.front().values.size());
    if (params.m <= 0 || dim % params.m != 0)
        fail(ErrorCode::DimensionMismatch, "dimension " + std::to_string(dim) + " is not divisible by m=" + std::to_string(params.m));
    if (params.nlist <= 0) fail(ErrorCode::InvalidArgument, "nlist must be positive");
    if (records.size() < static_cast<std::size_t>(params.nlist) * 4)
        fail(ErrorCode::TooFewVectors, "need at least 4 x nlist vectors to train the coarse quantizer");

    IvfPqIndex idx;
    idx.params_ = params;
    const auto n = static_cast<Eigen::Index>(records.size());
    idx.vectors_.resize(dim, n);
    idx.records_.reserve(records.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& rec = records[static_cast<std::size_t>(i)];
        if (rec.values.size() != dim) fail(ErrorCode::DimensionMismatch, "embedding dimensions differ");
        idx.vectors_.col(i) = unitVector(rec.values);
        idx.records_.push_back(RecordRef{rec.imageId, rec.slot});
    }

    Rng rng(seed);
    const auto coarseTrain = subsample(idx.vectors_, static_cast<std::size_t>(params.nlist) * params.maxTrainPerCentroid, rng);
    idx.coarse_ = kmeans(coarseTrain, params.nlist, splitmix64(seed ^ 0xC0A25EULL), params.kmeansMaxIterations,
                         params.kmeansTolerance)
                      .centroids;
    const std::vector<int> lists = assignNearest(idx.coarse_, idx.vectors_);

    Eigen::MatrixXf residuals(dim, n);
    for (Eigen::Index i = 0; i < n; ++i) residuals.col(i) = idx.vectors_.col(i) - idx.coarse_.col(lists[i]);
    const int dsub = dim / params.m;
    const auto pqTrain = subsample(residuals, static_cast<std::size_t>(std::min(params.ksub, 256)) * params.maxTrainPerCentroid, rng);
    idx.ksub_ = std::min<int>({params.ksub, 256, static_cast<int>(pqTrain.cols())});
    for (int s = 0; s < params.m; ++s) {
        const Eigen::MatrixXf sub = pqTrain.middleRows(static_cast<Eigen::Index>(s) * dsub, dsub);
        idx.codebooks_.push_back(
            kmeans(sub, idx.ksub_, splitmix64(seed + 1 + s), params.kmeansMaxIterations, params.kmeansTolerance).centroids);
    }

    std::vector<std::vector<int>> codes(static_cast<std::size_t>(params.m));
    for (int s = 0; s < params.m; ++s)
        codes[s] = assignNearest(idx.codebooks_[s], residuals.middleRows(static_cast<Eigen::Index>(s) * dsub, dsub));
    idx.listIds_.assign(static_cast<std::size_t>(params.nlist), {});
    idx.listCodes_.assign(static_cast<std::size_t>(params.nlist), {});
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto l = static_cast<std::size_t>(lists[i]);
        idx.listIds_[l].push_back(static_cast<std::uint32_t>(i));
        for (int s = 0; s < params.m; ++s) idx.listCodes_[l].push_back(static_cast<std::uint8_t>(codes[s][i]));
    }
    return idx;
}

std::vector<std::uint8_t> IvfPqIndex::encodeResidual(const Eigen::VectorXf& residual) const {
    const int dsub = dim() / params_.m;
    std::vector<std::uint8_t> code;
    for (int s = 0; s < params_.m; ++s)
        code.push_back(static_cast<std::uint8_t>(nearestCentroid(codebooks_[s], residual.segment(s * dsub, dsub))));
    return code;
}

int IvfPqIndex::listOf(std::uint32_t recordId) const {
    for (std::size_t l = 0; l < listIds_.size(); ++l)
        if (std::binary_search(listIds_[l].begin(), listIds_[l].end(), recordId)) return static_cast<int>(l);
    fail(ErrorCode::InvalidArgument, "record not indexed: " + std::to_string(recordId));
}

std::vector<RetrievalHit> IvfPqIndex::search(const Embedding& query, int topK, int nprobe, bool rerankAll) const {
    if (records_.empty()) fail(ErrorCode::EmptyIndex, "search on an empty index");
    if (query.size() != dim()) fail(ErrorCode::DimensionMismatch, "query dimension differs from the index");
    if (topK <= 0) fail(ErrorCode::InvalidArgument, "topK must be positive");
    const int nlist = static_cast<int>(coarse_.cols());
    if (nprobe <= 0) nprobe = params_.nprobe;
    nprobe = std::clamp(nprobe, 1, nlist);
    const Embedding q = unitVector(query);

    std::vector<std::pair<float, int>> cells;
    cells.reserve(static_cast<std::size_t>(nlist));
    for (int l = 0; l < nlist; ++l) cells.emplace_back((coarse_.col(l) - q).squaredNorm(), l);
    std::partial_sort(cells.begin(), cells.begin() + nprobe, cells.end());

    const int m = params_.m, dsub = dim() / m;
    std::vector<std::pair<float, std::uint32_t>> candidates;
    Eigen::MatrixXf table(ksub_, m);
    for (int p = 0; p < nprobe; ++p) {
        const int l = cells[p].second;
        if (listIds_[l].empty()) continue;
        const Eigen::VectorXf r = q - coarse_.col(l);
        for (int s = 0; s < m; ++s)
            table.col(s) = (codebooks_[s].colwise() - r.segment(s * dsub, dsub)).colwise().squaredNorm().transpose();
        const auto& ids = listIds_[l];
        const auto& codes = listCodes_[l];
        for (std::size_t e = 0; e < ids.size(); ++e) {
            float d = 0;
            for (int s = 0; s < m; ++s) d += table(codes[e * m + s], s);
            candidates.emplace_back(d, ids[e]);
        }
    }
    if (!rerankAll) {
        const std::size_t keep = std::min(candidates.size(), static_cast<std::size_t>(topK) * 4);
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end());
        candidates.resize(keep);
    }
    return rankExact(vectors_, records_, candidates, q, topK);
}

Bytes IvfPqIndex::serialize() const {
    binio::Writer w;
    w.magic("EKIVF");
    w.u32(kIndexFileVersion);
    w.u32(static_cast<std::uint32_t>(dim()));
    w.u32(static_cast<std::uint32_t>(coarse_.cols()));
    w.u32(static_cast<std::uint32_t>(params_.m));
    w.u32(static_cast<std::uint32_t>(ksub_));
    w.u32(static_cast<std::uint32_t>(params_.nprobe));
    w.u64(records_.size());
    w.floats(std::span<const float>(coarse_.data(), static_cast<std::size_t>(coarse_.size())));
    for (const auto& cb : codebooks_) w.floats(std::span<const float>(cb.data(), static_cast<std::size_t>(cb.size())));
    for (std::size_t l = 0; l < listIds_.size(); ++l) {
        w.u32(static_cast<std::uint32_t>(listIds_[l].size()));
        for (auto id : listIds_[l]) w.u32(id);
        w.raw(listCodes_[l]);
    }
    for (const auto& r : records_) {
        w.str(r.imageId);
        w.u8(static_cast<std::uint8_t>(r.slot));
    }
    return w.take();
}

Digest256 IvfPqIndex::digest() const { return crypto::sha256(serialize()); }

void IvfPqIndex::save(const std::filesystem::path& path) const {
    binio::writeFile(path, serialize());
    binio::Writer w;
    w.magic("EKVEC");
    w.u32(kIndexFileVersion);
    w.u32(static_cast<std::uint32_t>(dim()));
    w.u64(records_.size());
    w.floats(std::span<const float>(vectors_.data(), static_cast<std::size_t>(vectors_.size())));
    binio::writeFile(path.string() + ".vectors", w.bytes());
}

IvfPqIndex IvfPqIndex::load(const std::filesystem::path& path) {
    const Bytes data = binio::readFile(path);
    binio::Reader r(data);
    r.expectMagic("EKIVF");
    const auto version = r.u32();
    if (version != kIndexFileVersion) fail(ErrorCode::UnsupportedVersion, "index file version " + std::to_string(version));
    IvfPqIndex idx;
    const auto dim = static_cast<int>(r.u32());
    idx.params_.nlist = static_cast<int>(r.u32());
    idx.params_.m = static_cast<int>(r.u32());
    idx.ksub_ = static_cast<int>(r.u32());
    idx.params_.nprobe = static_cast<int>(r.u32());
    const auto count = r.u64();
    if (dim <= 0 || idx.params_.m <= 0 || dim % idx.params_.m != 0 || idx.params_.nlist <= 0 || idx.ksub_ <= 0 ||
        idx.ksub_ > 256)
        fail(ErrorCode::Format, "invalid index header");
    const auto need = (static_cast<std::uint64_t>(dim) * idx.params_.nlist + static_cast<std::uint64_t>(dim) * idx.ksub_) * 4;
    if (need > r.remaining() || count > r.remaining()) fail(ErrorCode::Format, "index file is truncated");
    idx.params_.ksub = idx.ksub_;
    idx.coarse_.resize(dim, idx.params_.nlist);
    for (Eigen::Index i = 0; i < idx.coarse_.size(); ++i) idx.coarse_.data()[i] = r.f32();
    const int dsub = dim / idx.params_.m;
    for (int s = 0; s < idx.params_.m; ++s) {
        Eigen::MatrixXf cb(dsub, idx.ksub_);
        for (Eigen::Index i = 0; i < cb.size(); ++i) cb.data()[i] = r.f32();
        idx.codebooks_.push_back(std::move(cb));
    }
    std::vector<int> seen(count, 0);
    idx.listIds_.resize(static_cast<std::size_t>(idx.params_.nlist));
    idx.listCodes_.resize(static_cast<std::size_t>(idx.params_.nlist));
    for (int l = 0; l < idx.params_.nlist; ++l) {
        const auto len = r.u32();
        if (len > count) fail(ErrorCode::Format, "posting list longer than the record table");
        for (std::uint32_t e = 0; e < len; ++e) {
            const auto id = r.u32();
            if (id >= count || seen[id]++) fail(ErrorCode::Format, "invalid or repeated record id in posting list");
            idx.listIds_[l].push_back(id);
        }
        ByteView codes = r.raw(static_cast<std::size_t>(len) * idx.params_.m);
        for (auto c : codes)
            if (c >= idx.ksub_) fail(ErrorCode::Format, "PQ code out of range");
        idx.listCodes_[l].assign(codes.begin(), codes.end());
    }
    for (int s : seen)
        if (s != 1) fail(ErrorCode::Format, "record missing from posting lists");
    idx.records_.resize(count);
    for (auto& rec : idx.records_) {
        rec.imageId = r.str();
        rec.slot = r.u8();
    }
    if (!r.atEnd()) fail(ErrorCode::Format, "trailing bytes in index file");

    const Bytes vec = binio::readFile(path.string() + ".vectors");
    binio::Reader vr(vec);
    vr.expectMagic("EKVEC");
    if (vr.u32() != kIndexFileVersion) fail(ErrorCode::UnsupportedVersion, "vector sidecar version");
    if (static_cast<int>(vr.u32()) != dim || vr.u64() != count) fail(ErrorCode::Format, "vector sidecar does not match the index");
    if (vr.remaining() != static_cast<std::size_t>(dim) * count * 4) fail(ErrorCode::Format, "vector sidecar size mismatch");
    idx.vectors_.resize(dim, static_cast<Eigen::Index>(count));
    for (Eigen::Index i = 0; i < idx.vectors_.size(); ++i) idx.vectors_.data()[i] = vr.f32();
    return idx;
}

std::vector<RetrievalHit> bruteForceSearch(const std::vector<EmbeddingRecord>& records, const Embedding& query, int topK) {
    if (topK <= 0) fail(ErrorCode::InvalidArgument, "topK must be positive");
    if (records.empty()) return {};
    const auto dim = records.front().values.size();
    if (query.size() != dim) fail(ErrorCode::DimensionMismatch, "query dimension differs from the corpus");
    Eigen::MatrixXf vectors(dim, static_cast<Eigen::Index>(records.size()));
    std::vector<RecordRef> refs;
    std::vector<std::pair<float, std::uint32_t>> all;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].values.size() != dim) fail(ErrorCode::DimensionMismatch, "embedding dimensions differ");
        vectors.col(static_cast<Eigen::Index>(i)) = unitVector(records[i].values);
        refs.push_back(RecordRef{records[i].imageId, records[i].slot});
        all.emplace_back(0.0f, static_cast<std::uint32_t>(i));
    }
    return rankExact(vectors, refs, all, unitVector(query), topK);
}

double recallAtK(const std::vector<RetrievalHit>& approx, const std::vector<RetrievalHit>& exact, int k) {
    const std::size_t ke = std::min<std::size_t>(static_cast<std::size_t>(k), exact.size());
    if (ke == 0) return 1.0;
    std::vector<std::uint32_t> truth;
    for (std::size_t i = 0; i < ke; ++i) truth.push_back(exact[i].recordId);
    std::size_t found = 0;
    for (std::size_t i = 0; i < std::min<std::size_t>(static_cast<std::size_t>(k), approx.size()); ++i)
        found += std::count(truth.begin(), truth.end(), approx[i].recordId);
    return static_cast<double>(found) / static_cast<double>(ke);
}

}  // namespace ekila
