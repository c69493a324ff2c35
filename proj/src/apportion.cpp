#include "ekila/apportion.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ekila/binio.hpp"

namespace ekila {

using nlohmann::json;

ImageWeights computeWeights(const std::vector<ScoredHit>& hits, double lambda) {
    ImageWeights w;
    for (const auto& h : hits) {
        const double excess = h.score - lambda;
        if (excess > 0) w[h.hit.imageId] += excess;
    }
    return w;
}

std::map<int, ImageWeights> computeWeights(const std::vector<PatchRetrieval>& retrievals, double lambda) {
    std::map<int, ImageWeights> out;
    for (const auto& r : retrievals) out[r.slot] = computeWeights(r.hits, lambda);
    return out;
}

ImageWeights creditPerPatch(const ImageWeights& weights) {
    double total = 0;
    for (const auto& [id, w] : weights)
        if (w > 0) total += w;
    ImageWeights out;
    if (total <= 0) return out;
    for (const auto& [id, w] : weights)
        if (w > 0) out[id] = w / total;
    return out;
}

std::vector<std::string> CreditReport::ranking() const {
    std::vector<std::pair<double, std::string>> items;
    for (const auto& [id, c] : imageCredits) items.emplace_back(c, id);
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::string> out;
    for (auto& [c, id] : items) out.push_back(id);
    return out;
}

double CreditReport::totalCredit() const {
    double t = 0;
    for (const auto& [id, c] : imageCredits) t += c;
    return t;
}

CreditReport aggregateCredit(const std::map<int, ImageWeights>& perPatchCredits, int topM) {
    if (topM <= 0) fail(ErrorCode::InvalidArgument, "topM must be positive");
    CreditReport r;
    r.settings.topM = topM;
    for (const auto& [slot, credits] : perPatchCredits) {
        if (credits.empty()) continue;
        r.perPatchCredits[slot] = credits;
        for (const auto& [id, c] : credits) r.imageCredits[id] += c;
    }
    const auto ranked = r.ranking();
    double top = 0;
    for (std::size_t i = 0; i < ranked.size() && i < static_cast<std::size_t>(topM); ++i) top += r.imageCredits[ranked[i]];
    if (top > 0)
        for (std::size_t i = 0; i < ranked.size() && i < static_cast<std::size_t>(topM); ++i)
            r.royaltyWeights[ranked[i]] = r.imageCredits[ranked[i]] / top;
    return r;
}

std::string creditReportJson(const CreditReport& r) {
    json j;
    j["format"] = "ekila.credit-report";
    j["version"] = CreditReport::kVersion;
    j["queryImageId"] = r.queryImageId;
    j["settings"] = {{"lambda", r.settings.lambda}, {"topK", r.settings.topK}, {"topM", r.settings.topM},
                     {"nprobe", r.settings.nprobe}};
    json patches = json::object();
    for (const auto& [slot, credits] : r.perPatchCredits) patches[std::to_string(slot)] = credits;
    j["perPatchCredits"] = patches;
    j["imageCredits"] = r.imageCredits;
    j["royaltyWeights"] = r.royaltyWeights;
    json matches = json::array();
    for (const auto& m : r.matches)
        matches.push_back({{"querySlot", m.querySlot}, {"imageId", m.imageId}, {"matchSlot", m.matchSlot},
                           {"similarity", m.similarity}, {"score", m.score}});
    j["verifiedMatches"] = matches;
    return j.dump(2) + "\n";
}

CreditReport parseCreditReport(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorCode::Format, std::string("credit report is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("format") != "ekila.credit-report") fail(ErrorCode::Format, "not a credit report");
        const int version = j.at("version").get<int>();
        if (version != CreditReport::kVersion)
            fail(ErrorCode::UnsupportedVersion, "credit report version " + std::to_string(version));
        CreditReport r;
        r.queryImageId = j.at("queryImageId").get<std::string>();
        const auto& s = j.at("settings");
        r.settings.lambda = s.at("lambda").get<double>();
        r.settings.topK = s.at("topK").get<int>();
        r.settings.topM = s.at("topM").get<int>();
        r.settings.nprobe = s.at("nprobe").get<int>();
        for (const auto& [slot, credits] : j.at("perPatchCredits").items())
            r.perPatchCredits[std::stoi(slot)] = credits.get<ImageWeights>();
        r.imageCredits = j.at("imageCredits").get<ImageWeights>();
        r.royaltyWeights = j.at("royaltyWeights").get<ImageWeights>();
        for (const auto& m : j.at("verifiedMatches"))
            r.matches.push_back(VerifiedMatch{m.at("querySlot").get<int>(), m.at("imageId").get<std::string>(),
                                              m.at("matchSlot").get<int>(), m.at("similarity").get<double>(),
                                              m.at("score").get<double>()});
        return r;
    } catch (const json::exception& e) {
        fail(ErrorCode::Format, std::string("malformed credit report: ") + e.what());
    }
}

void writeCreditReport(const std::filesystem::path& path, const CreditReport& report) {
    binio::writeText(path, creditReportJson(report));
}

CreditReport readCreditReport(const std::filesystem::path& path) { return parseCreditReport(binio::readText(path)); }

namespace {

std::string xmlEscape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string creditPlotSvg(const CreditReport& r) {
    const auto ranked = r.ranking();
    const int rowH = 22, labelW = 160, barW = 360, top = 40;
    const int height = top + rowH * static_cast<int>(std::max<std::size_t>(1, ranked.size())) + 20;
    double maxCredit = 0;
    for (const auto& [id, c] : r.imageCredits) maxCredit = std::max(maxCredit, c);
    std::ostringstream s;
    s << std::fixed << std::setprecision(3);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << labelW + barW + 120 << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s << "<text x=\"10\" y=\"20\" font-size=\"14\">Credit for " << xmlEscape(r.queryImageId) << "</text>\n";
    int row = 0;
    for (const auto& id : ranked) {
        const double c = r.imageCredits.at(id);
        const auto it = r.royaltyWeights.find(id);
        const double w = it == r.royaltyWeights.end() ? 0.0 : it->second;
        const int y = top + row * rowH;
        const double len = maxCredit > 0 ? barW * c / maxCredit : 0;
        s << "<text x=\"10\" y=\"" << y + 14 << "\">" << xmlEscape(id) << "</text>\n";
        s << "<rect x=\"" << labelW << "\" y=\"" << y + 3 << "\" width=\"" << len << "\" height=\"" << rowH - 6
          << "\" fill=\"" << (w > 0 ? "#3b6ea5" : "#b0b0b0") << "\"/>\n";
        s << "<text x=\"" << labelW + len + 6 << "\" y=\"" << y + 14 << "\">" << c;
        if (w > 0) s << " (" << w * 100 << "%)";
        s << "</text>\n";
        ++row;
    }
    if (ranked.empty()) s << "<text x=\"10\" y=\"" << top + 14 << "\">no verified matches</text>\n";
    s << "</svg>\n";
    return s.str();
}

CorpusPatchSource::CorpusPatchSource(const Corpus& corpus, const PatchEncoder& encoder, const VerifierModel& verifier)
    : encoder_(encoder), verifier_(verifier) {
    for (const auto& item : corpus) images_[item.id] = &item.image;
}

const Eigen::MatrixXf& CorpusPatchSource::pooled(const std::string& imageId, int slot) {
    const auto key = std::make_pair(imageId, slot);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    auto img = images_.find(imageId);
    if (img == images_.end()) fail(ErrorCode::InvalidArgument, "retrieved image not in corpus: " + imageId);
    const FeatureMap fm = encoder_.featureMap(makePatch(*img->second, imageId, slot));
    return cache_.emplace(key, verifier_.pool(fm)).first->second;
}

CreditReport attributeImage(const Image& query, const std::string& queryId, const IvfPqIndex& index,
                            const PatchEncoder& encoder, const VerifierModel& verifier, CorpusPatchSource& source,
                            const ApportionConfig& config) {
    const std::vector<Patch> patches = patchify(query, queryId);
    const Eigen::MatrixXf emb = encoder.embedBatch(patches);
    const std::vector<FeatureMap> maps = encoder.featureMapBatch(patches);

    std::vector<PatchRetrieval> retrievals;
    std::vector<VerifiedMatch> matches;
    for (std::size_t j = 0; j < patches.size(); ++j) {
        PatchRetrieval pr;
        pr.slot = patches[j].slot;
        const Eigen::MatrixXf q = verifier.pool(maps[j]);
        for (auto& hit : index.search(emb.col(static_cast<Eigen::Index>(j)), config.topK, config.nprobe)) {
            ScoredHit sh;
            sh.score = verifier.scorePooled(q, source.pooled(hit.imageId, hit.slot));
            sh.hit = std::move(hit);
            if (sh.score > config.lambda)
                matches.push_back(VerifiedMatch{pr.slot, sh.hit.imageId, sh.hit.slot, sh.hit.exactSimilarity, sh.score});
            pr.hits.push_back(std::move(sh));
        }
        retrievals.push_back(std::move(pr));
    }

    std::map<int, ImageWeights> credits;
    for (const auto& [slot, w] : computeWeights(retrievals, config.lambda)) credits[slot] = creditPerPatch(w);
    CreditReport report = aggregateCredit(credits, config.topM);
    report.queryImageId = queryId;
    report.settings = config;
    report.matches = std::move(matches);
    return report;
}

}  // namespace ekila
