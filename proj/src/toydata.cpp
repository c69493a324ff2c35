#include "ekila/toydata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "ekila/augment.hpp"

namespace ekila {

namespace {

constexpr double kPi = 3.14159265358979323846;

using Color = std::array<float, 3>;

Color randomColor(Rng& rng) {
    return {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform())};
}

void setPixel(FloatImage& img, int x, int y, const Color& c) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    for (int k = 0; k < 3; ++k) img.at(x, y, k) = c[k];
}

void drawBackground(FloatImage& img, Rng& rng) {
    const Color a = randomColor(rng), b = randomColor(rng);
    const double angle = rng.uniform(0, 2 * kPi);
    const double dx = std::cos(angle), dy = std::sin(angle);
    const double freq = rng.uniform(2.0, 9.0) * 2 * kPi / img.width;
    const double tAngle = rng.uniform(0, kPi);
    const double tx = std::cos(tAngle), ty = std::sin(tAngle);
    const double phase = rng.uniform(0, 2 * kPi);
    const double amp = rng.uniform(0.05, 0.2);
    const Color tint = randomColor(rng);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double u = ((x - img.width / 2.0) * dx + (y - img.height / 2.0) * dy) / img.width + 0.5;
            const double t = std::clamp(u, 0.0, 1.0);
            const double wave = amp * std::sin(freq * (x * tx + y * ty) + phase);
            for (int k = 0; k < 3; ++k)
                img.at(x, y, k) = static_cast<float>(std::clamp(a[k] * (1 - t) + b[k] * t + wave * (tint[k] - 0.5) * 2, 0.0, 1.0));
        }
}

void drawShape(FloatImage& img, Rng& rng, double scale) {
    const int W = img.width, H = img.height;
    const Color c = randomColor(rng);
    const int kind = static_cast<int>(rng.below(4));
    const double cx = rng.uniform(0, W), cy = rng.uniform(0, H);
    const double r = rng.uniform(0.04, 0.16) * W * scale;
    switch (kind) {
        case 0:  // disc
            for (int y = static_cast<int>(cy - r); y <= static_cast<int>(cy + r); ++y)
                for (int x = static_cast<int>(cx - r); x <= static_cast<int>(cx + r); ++x)
                    if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) setPixel(img, x, y, c);
            break;
        case 1: {  // rectangle
            const double hw = r * rng.uniform(0.5, 1.5), hh = r * rng.uniform(0.5, 1.5);
            for (int y = static_cast<int>(cy - hh); y <= static_cast<int>(cy + hh); ++y)
                for (int x = static_cast<int>(cx - hw); x <= static_cast<int>(cx + hw); ++x) setPixel(img, x, y, c);
            break;
        }
        case 2: {  // triangle
            std::array<double, 6> p{};
            for (int i = 0; i < 3; ++i) {
                const double a = rng.uniform(0, 2 * kPi);
                p[2 * i] = cx + r * 1.3 * std::cos(a);
                p[2 * i + 1] = cy + r * 1.3 * std::sin(a);
            }
            const double area = (p[2] - p[0]) * (p[5] - p[1]) - (p[4] - p[0]) * (p[3] - p[1]);
            if (std::abs(area) < 1e-9) break;
            for (int y = static_cast<int>(cy - 1.3 * r); y <= static_cast<int>(cy + 1.3 * r); ++y)
                for (int x = static_cast<int>(cx - 1.3 * r); x <= static_cast<int>(cx + 1.3 * r); ++x) {
                    const double w0 = ((p[2] - x) * (p[5] - y) - (p[4] - x) * (p[3] - y)) / area;
                    const double w1 = ((p[4] - x) * (p[1] - y) - (p[0] - x) * (p[5] - y)) / area;
                    const double w2 = 1 - w0 - w1;
                    if (w0 >= 0 && w1 >= 0 && w2 >= 0) setPixel(img, x, y, c);
                }
            break;
        }
        default: {  // ring
            const double inner = r * rng.uniform(0.4, 0.75);
            for (int y = static_cast<int>(cy - r); y <= static_cast<int>(cy + r); ++y)
                for (int x = static_cast<int>(cx - r); x <= static_cast<int>(cx + r); ++x) {
                    const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                    if (d2 <= r * r && d2 >= inner * inner) setPixel(img, x, y, c);
                }
            break;
        }
    }
}

std::string numbered(const std::string& prefix, int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d", i);
    return prefix + buf;
}

Image copyTile(const Image& src, const Rect& from, int w, int h) {
    const Image tile = crop(src, from);
    if (tile.width == w && tile.height == h) return tile;
    return toBytes(resizeBilinear(toFloat(tile), w, h));
}

}  // namespace

Corpus generateToyCorpus(int count, int size, std::uint64_t seed, const std::string& prefix) {
    if (count < 0 || size < kMinImageSide) fail(ErrorCode::InvalidArgument, "invalid toy corpus dimensions");
    Corpus out;
    for (int i = 0; i < count; ++i) {
        Rng rng(splitmix64(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(i)));
        FloatImage img(size, size);
        drawBackground(img, rng);
        const int shapes = 8 + static_cast<int>(rng.below(7));
        for (int s = 0; s < shapes; ++s) drawShape(img, rng, 1.0);
        out.push_back(CorpusImage{numbered(prefix, i), toBytes(img)});
    }
    return out;
}

Image renderConcept(int size, std::uint64_t conceptSeed, std::uint64_t variantSeed) {
    Rng bg(splitmix64(variantSeed));
    FloatImage img(size, size);
    drawBackground(img, bg);
    // The concept: a fixed arrangement of shapes drawn at a per-variant offset.
    FloatImage object(size / 2, size / 2);
    Rng obj(splitmix64(conceptSeed));
    drawBackground(object, obj);
    for (int s = 0; s < 10; ++s) drawShape(object, obj, 1.0);
    const int ox = static_cast<int>(bg.below(static_cast<std::uint64_t>(size - object.width + 1)));
    const int oy = static_cast<int>(bg.below(static_cast<std::uint64_t>(size - object.height + 1)));
    for (int y = 0; y < object.height; ++y)
        for (int x = 0; x < object.width; ++x)
            for (int k = 0; k < 3; ++k) img.at(ox + x, oy + y, k) = object.at(x, y, k);
    return toBytes(img);
}

Corpus generateConceptCorpus(int size, std::uint64_t seed, int count, const std::string& prefix) {
    Corpus out;
    for (int i = 0; i < count; ++i)
        out.push_back(CorpusImage{numbered(prefix, i), renderConcept(size, seed, splitmix64(seed + 1 + static_cast<std::uint64_t>(i)))});
    return out;
}

CompositeQuery composeQuery(const Corpus& corpus, const ComposeConfig& cfg, std::uint64_t seed, const std::string& queryId) {
    if (cfg.minSources < 1 || cfg.maxSources < cfg.minSources || cfg.maxSources > 20)
        fail(ErrorCode::InvalidArgument, "source count range must lie within 1..20");
    if (corpus.size() < static_cast<std::size_t>(cfg.maxSources))
        fail(ErrorCode::CorpusTooSmall, "corpus smaller than the maximum source count");
    Rng rng(seed);
    const int n = cfg.minSources + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.maxSources - cfg.minSources + 1)));
    std::vector<std::size_t> picks;
    while (static_cast<int>(picks.size()) < n) {
        const auto i = static_cast<std::size_t>(rng.below(corpus.size()));
        if (std::find(picks.begin(), picks.end(), i) == picks.end()) picks.push_back(i);
    }

    const Image& first = corpus[picks[0]].image;
    CompositeQuery q;
    q.image = Image(first.width, first.height);
    q.truth.queryId = queryId;
    q.truth.severity = cfg.severity;
    for (auto i : picks) q.truth.sources.push_back(corpus[i].id);

    auto place = [&](std::size_t src, int srcSlot, const Rect& dst) {
        const Image& s = corpus[src].image;
        Image tile = copyTile(s, slotRect(srcSlot, s.width, s.height), dst.w, dst.h);
        if (cfg.severity > 0) tile = toBytes(augmentImage(toFloat(tile), AugmentConfig{.severity = cfg.severity}, rng.next()));
        paste(q.image, tile, dst.x, dst.y);
        q.truth.tiles.push_back(TileProvenance{dst, corpus[src].id, srcSlot});
    };

    for (int quad = 0; quad < 4; ++quad) {
        const std::size_t src = picks[static_cast<std::size_t>(quad % std::min(n, 4))];
        place(src, 1 + static_cast<int>(rng.below(4)), slotRect(1 + quad, first.width, first.height));
    }
    std::vector<int> cells;
    for (int s = 5; s <= 20; ++s) cells.push_back(s);
    rng.shuffle(cells);
    for (int e = 4; e < n; ++e)
        place(picks[static_cast<std::size_t>(e)], 5 + static_cast<int>(rng.below(16)),
              slotRect(cells[static_cast<std::size_t>(e - 4)], first.width, first.height));
    return q;
}

std::string compositeTruthJson(const CompositeTruth& t) {
    nlohmann::json j;
    j["format"] = "ekila.composite-truth";
    j["version"] = CompositeTruth::kVersion;
    j["queryId"] = t.queryId;
    j["sources"] = t.sources;
    j["severity"] = t.severity;
    auto tiles = nlohmann::json::array();
    for (const auto& tile : t.tiles)
        tiles.push_back({{"region", {tile.region.x, tile.region.y, tile.region.w, tile.region.h}},
                         {"sourceId", tile.sourceId},
                         {"sourceSlot", tile.sourceSlot}});
    j["tiles"] = tiles;
    return j.dump(2) + "\n";
}

CompositeTruth parseCompositeTruth(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("format") != "ekila.composite-truth") fail(ErrorCode::Format, "not a composite truth file");
        if (j.at("version").get<int>() != CompositeTruth::kVersion)
            fail(ErrorCode::UnsupportedVersion, "composite truth version " + j.at("version").dump());
        CompositeTruth t;
        t.queryId = j.at("queryId").get<std::string>();
        t.sources = j.at("sources").get<std::vector<std::string>>();
        t.severity = j.at("severity").get<double>();
        for (const auto& tile : j.at("tiles")) {
            const auto r = tile.at("region").get<std::vector<int>>();
            if (r.size() != 4) fail(ErrorCode::Format, "tile region needs four integers");
            t.tiles.push_back(TileProvenance{Rect{r[0], r[1], r[2], r[3]}, tile.at("sourceId").get<std::string>(),
                                             tile.at("sourceSlot").get<int>()});
        }
        return t;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, std::string("malformed composite truth: ") + e.what());
    }
}

std::filesystem::path truthPath(const std::filesystem::path& query) {
    std::filesystem::path p = query;
    p.replace_extension(".truth.json");
    return p;
}

double sourceRecallAtK(const std::vector<std::string>& ranking, const std::vector<std::string>& truth, int k) {
    if (truth.empty()) fail(ErrorCode::InvalidArgument, "recall needs at least one true source");
    const std::size_t limit = std::min<std::size_t>(static_cast<std::size_t>(k), ranking.size());
    std::size_t hit = 0;
    for (std::size_t i = 0; i < limit; ++i) hit += std::count(truth.begin(), truth.end(), ranking[i]) > 0 ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(std::min<std::size_t>(static_cast<std::size_t>(k), truth.size()));
}

std::vector<EmbeddingRecord> clusteredVectors(int count, int dim, int clusters, int intrinsicDim, double spread,
                                              double noise, std::uint64_t seed) {
    if (count < 0 || dim < 1 || clusters < 1 || intrinsicDim < 0) fail(ErrorCode::InvalidArgument, "invalid vector set shape");
    Rng rng(seed);
    auto gaussian = [&](int rows, int cols) {
        Eigen::MatrixXf m(rows, cols);
        for (int c = 0; c < cols; ++c)
            for (int r = 0; r < rows; ++r) m(r, c) = static_cast<float>(rng.normal());
        return m;
    };
    Eigen::MatrixXf centres = gaussian(dim, clusters);
    centres.colwise().normalize();
    std::vector<Eigen::MatrixXf> bases;
    for (int c = 0; c < clusters; ++c) {
        Eigen::MatrixXf b = gaussian(dim, intrinsicDim);
        if (intrinsicDim > 0) b.colwise().normalize();
        bases.push_back(std::move(b));
    }
    std::vector<EmbeddingRecord> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const int c = static_cast<int>(rng.below(static_cast<std::uint64_t>(clusters)));
        Embedding v = centres.col(c);
        if (intrinsicDim > 0) v += bases[static_cast<std::size_t>(c)] * (gaussian(intrinsicDim, 1).col(0) * static_cast<float>(spread));
        v += gaussian(dim, 1).col(0) * static_cast<float>(noise / std::sqrt(static_cast<double>(dim)));
        v.normalize();
        out.push_back(EmbeddingRecord{numbered("vec-", c), 0, std::move(v)});
    }
    rng.shuffle(out);
    return out;
}

}  // namespace ekila
