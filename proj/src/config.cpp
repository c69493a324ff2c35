#include "ekila/config.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ekila/binio.hpp"

namespace ekila {

namespace pt = boost::property_tree;

std::filesystem::path Paths::ledgerLog() const {
    std::filesystem::path p = ledger;
    p.replace_extension(".jsonl");
    return p;
}

namespace {

template <class T>
T parseValue(const std::string& key, const std::string& text) {
    std::istringstream in(text);
    T v{};
    in >> v;
    if (in.fail() || !(in >> std::ws).eof()) fail(ErrorCode::ConfigError, "invalid value for " + key + ": '" + text + "'");
    return v;
}

/// One table drives parsing and serialisation so the two cannot drift apart.
struct Field {
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
};

template <class T>
Field number(T& target, const std::string& key) {
    return Field{[&target, key](const std::string& s) { target = parseValue<T>(key, s); },
                 [&target] {
                     if constexpr (std::is_floating_point_v<T>) {
                         // Shortest text that reads back to the same value.
                         char buf[64];
                         const auto r = std::to_chars(buf, buf + sizeof buf, target);
                         return std::string(buf, r.ptr);
                     } else {
                         return std::to_string(target);
                     }
                 }};
}

Field mining(NegativeMining& target) {
    return Field{[&target](const std::string& s) {
                     try {
                         target = negativeMiningFromName(s);
                     } catch (const Error&) {
                         fail(ErrorCode::ConfigError, "invalid value for verifier.negative_mining: '" + s + "'");
                     }
                 },
                 [&target] { return std::string(negativeMiningName(target)); }};
}

Field path(std::filesystem::path& target) {
    return Field{[&target](const std::string& s) { target = s; }, [&target] { return target.string(); }};
}

std::map<std::string, std::map<std::string, Field>> fields(Config& c) {
    return {
        {"paths",
         {{"corpus", path(c.paths.corpus)},
          {"store", path(c.paths.store)},
          {"embeddings", path(c.paths.embeddings)},
          {"index", path(c.paths.index)},
          {"encoder", path(c.paths.encoder)},
          {"verifier", path(c.paths.verifier)},
          {"ledger", path(c.paths.ledger)}}},
        {"encoder",
         {{"temperature", number(c.encoder.temperature, "encoder.temperature")},
          {"epochs", number(c.encoder.epochs, "encoder.epochs")},
          {"batch_size", number(c.encoder.batchSize, "encoder.batch_size")},
          {"learning_rate", number(c.encoder.learningRate, "encoder.learning_rate")},
          {"anchor_severity", number(c.encoder.anchorAugment.severity, "encoder.anchor_severity")},
          {"positive_severity", number(c.encoder.positiveAugment.severity, "encoder.positive_severity")}}},
        {"verifier",
         {{"gem_power", number(c.verifier.arch.gemPower, "verifier.gem_power")},
          {"hidden1", number(c.verifier.arch.hidden1, "verifier.hidden1")},
          {"hidden2", number(c.verifier.arch.hidden2, "verifier.hidden2")},
          {"steps", number(c.verifier.steps, "verifier.steps")},
          {"batch_size", number(c.verifier.batchSize, "verifier.batch_size")},
          {"learning_rate", number(c.verifier.learningRate, "verifier.learning_rate")},
          {"queue_size", number(c.verifier.queueSize, "verifier.queue_size")},
          {"hard_negatives", number(c.verifier.hardNegatives, "verifier.hard_negatives")},
          {"negative_mining", mining(c.verifier.mining)},
          {"max_severity", number(c.verifier.maxSeverity, "verifier.max_severity")}}},
        {"index",
         {{"nlist", number(c.index.nlist, "index.nlist")},
          {"m", number(c.index.m, "index.m")},
          {"nprobe", number(c.index.nprobe, "index.nprobe")},
          {"ksub", number(c.index.ksub, "index.ksub")}}},
        {"attribution",
         {{"lambda", number(c.attribution.lambda, "attribution.lambda")},
          {"top_k", number(c.attribution.topK, "attribution.top_k")},
          {"top_m", number(c.attribution.topM, "attribution.top_m")},
          {"nprobe", number(c.attribution.nprobe, "attribution.nprobe")}}},
        {"seeds",
         {{"encoder", number(c.encoder.seed, "seeds.encoder")},
          {"verifier", number(c.verifier.seed, "seeds.verifier")},
          {"index", number(c.indexSeed, "seeds.index")},
          {"guid", number(c.guidSeed, "seeds.guid")}}},
    };
}

void validate(const Config& c) {
    auto check = [](bool ok, const char* what) {
        if (!ok) fail(ErrorCode::ConfigError, what);
    };
    check(c.encoder.temperature > 0, "encoder.temperature must be positive");
    check(c.encoder.epochs >= 0, "encoder.epochs must be non-negative");
    check(c.encoder.batchSize >= 2, "encoder.batch_size must be at least 2");
    check(c.verifier.arch.gemPower > 0, "verifier.gem_power must be positive");
    check(c.verifier.steps >= 0, "verifier.steps must be non-negative");
    check(c.verifier.queueSize > 0, "verifier.queue_size must be positive");
    check(c.verifier.hardNegatives >= 0, "verifier.hard_negatives must be non-negative");
    check(c.index.nlist > 0 && c.index.m > 0 && c.index.nprobe > 0, "index parameters must be positive");
    check(c.attribution.lambda >= 0 && c.attribution.lambda <= 1, "attribution.lambda must lie in [0, 1]");
    check(c.attribution.topK > 0 && c.attribution.topM > 0, "attribution.top_k and top_m must be positive");
}

}  // namespace

Config parseConfig(const std::string& ini, const std::filesystem::path& baseDir) {
    pt::ptree tree;
    try {
        std::istringstream in(ini);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        fail(ErrorCode::ConfigError, std::string("config parse error: ") + e.what());
    }
    Config c;
    auto table = fields(c);
    for (const auto& [section, body] : tree) {
        auto sec = table.find(section);
        if (sec == table.end()) fail(ErrorCode::ConfigError, "unknown config section [" + section + "]");
        if (body.empty() && !body.data().empty())
            fail(ErrorCode::ConfigError, "key outside a section: " + section);
        for (const auto& [key, value] : body) {
            auto f = sec->second.find(key);
            if (f == sec->second.end()) fail(ErrorCode::ConfigError, "unknown config key " + section + "." + key);
            f->second.set(value.data());
        }
    }
    validate(c);
    resolvePaths(c, baseDir);
    return c;
}

Config loadConfig(const std::filesystem::path& file) {
    if (!std::filesystem::exists(file)) fail(ErrorCode::ConfigError, "config file not found: " + file.string());
    return parseConfig(binio::readText(file), file.parent_path());
}

std::string configToIni(const Config& config) {
    Config copy = config;
    std::ostringstream out;
    bool first = true;
    for (const auto& [section, body] : fields(copy)) {
        if (!first) out << "\n";
        first = false;
        out << "[" << section << "]\n";
        for (const auto& [key, f] : body) out << key << " = " << f.get() << "\n";
    }
    return out.str();
}

void resolvePaths(Config& c, const std::filesystem::path& base) {
    if (base.empty()) return;
    for (auto* p : {&c.paths.corpus, &c.paths.store, &c.paths.embeddings, &c.paths.index, &c.paths.encoder,
                    &c.paths.verifier, &c.paths.ledger})
        if (p->is_relative()) *p = base / *p;
}

void applyEnvironment(Config& c) {
    const std::pair<const char*, std::filesystem::path*> vars[] = {
        {"EKILA_CORPUS", &c.paths.corpus},   {"EKILA_STORE", &c.paths.store},       {"EKILA_EMBEDDINGS", &c.paths.embeddings},
        {"EKILA_INDEX", &c.paths.index},     {"EKILA_ENCODER", &c.paths.encoder},   {"EKILA_VERIFIER", &c.paths.verifier},
        {"EKILA_LEDGER", &c.paths.ledger}};
    for (const auto& [name, target] : vars)
        if (const char* v = std::getenv(name); v && *v) *target = v;
}

}  // namespace ekila
