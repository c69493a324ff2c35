#pragma once

#include <filesystem>
#include <string>

#include "ekila/apportion.hpp"

namespace ekila {

struct Paths {
    std::filesystem::path corpus = "corpus";
    std::filesystem::path store = "store";  // manifests/ and assets/ live under here
    std::filesystem::path embeddings = "embeddings.bin";
    std::filesystem::path index = "index.ivf";
    std::filesystem::path encoder = "encoder.ckpt";
    std::filesystem::path verifier = "verifier.ckpt";
    std::filesystem::path ledger = "ledger.json";  // snapshot; the log sits beside it as .jsonl

    std::filesystem::path ledgerLog() const;
    std::filesystem::path manifests() const { return store / "manifests"; }
    std::filesystem::path assets() const { return store / "assets"; }
};

/// Everything a run depends on. Serialises to INI with sections [paths], [encoder],
/// [verifier], [index], [attribution] and [seeds].
struct Config {
    Paths paths;
    EncoderTrainConfig encoder;
    VerifierTrainConfig verifier;
    IndexParams index{.nlist = 64, .m = 16, .nprobe = 16};
    ApportionConfig attribution;
    std::uint64_t indexSeed = 3;
    std::uint64_t guidSeed = 4;
};

/// Relative paths are resolved against the config file's directory. Unknown sections
/// or keys and unparsable values raise ConfigError.
Config loadConfig(const std::filesystem::path& file);
Config parseConfig(const std::string& ini, const std::filesystem::path& baseDir);
std::string configToIni(const Config& config);
/// Path-only overrides: EKILA_CORPUS, EKILA_STORE, EKILA_EMBEDDINGS, EKILA_INDEX,
/// EKILA_ENCODER, EKILA_VERIFIER, EKILA_LEDGER.
void applyEnvironment(Config& config);
/// Prefixes every relative path with base.
void resolvePaths(Config& config, const std::filesystem::path& base);

}  // namespace ekila
