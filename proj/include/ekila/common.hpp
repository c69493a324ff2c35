#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ekila {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Every failure surfaced by the library carries one of these codes. The CLI
/// reports the code name in its machine-readable error JSON.
enum class ErrorCode {
    InvalidArgument,
    Io,
    Format,
    UnsupportedVersion,
    ConfigError,
    // manifest
    DanglingIngredient,
    SigningFailure,
    DuplicateGuid,
    CycleDetected,
    MalformedUri,
    NoPaymentRoute,
    AraResolutionFailure,
    // ledger
    BadNonce,
    InsufficientFunds,
    InsufficientEscrow,
    Unauthorized,
    UnknownToken,
    UnknownContract,
    // fingerprint / index / verifier
    ImageTooSmall,
    DegenerateBatch,
    CorpusTooSmall,
    DivergedTraining,
    TooFewVectors,
    DimensionMismatch,
    EmptyIndex,
    NonSquareMap,
    ShapeMismatch,
};

std::string_view errorCodeName(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

std::string toHex(ByteView bytes);
/// Strict lowercase hex decode; throws Format on odd length or bad digits.
Bytes fromHex(std::string_view hex);

template <std::size_t N>
struct FixedBytes {
    std::array<std::uint8_t, N> bytes{};

    static constexpr std::size_t size() { return N; }
    ByteView view() const { return bytes; }
    std::string hex() const { return toHex(bytes); }
    bool isZero() const {
        for (auto b : bytes)
            if (b != 0) return false;
        return true;
    }

    static FixedBytes fromHexString(std::string_view hex) {
        Bytes raw = fromHex(hex);
        if (raw.size() != N)
            fail(ErrorCode::Format, "expected " + std::to_string(N) + " bytes of hex, got " +
                                        std::to_string(raw.size()));
        FixedBytes out;
        std::copy(raw.begin(), raw.end(), out.bytes.begin());
        return out;
    }

    auto operator<=>(const FixedBytes&) const = default;
};

using Digest256 = FixedBytes<32>;

/// 160-bit account or contract address, rendered as 0x + 40 lowercase hex digits.
struct Address {
    FixedBytes<20> raw;

    std::string str() const { return "0x" + raw.hex(); }
    /// Minimal rendering without leading zeros ("0x789"); used inside ARA URIs.
    std::string compact() const;
    /// Accepts 0x followed by 1..40 lowercase hex digits; shorter values are left-padded.
    static Address parse(std::string_view text);

    auto operator<=>(const Address&) const = default;
};

/// 128-bit manifest identifier (version-4 layout), rendered 8-4-4-4-12.
struct Guid {
    FixedBytes<16> raw;

    std::string str() const;
    static Guid parse(std::string_view text);

    auto operator<=>(const Guid&) const = default;
};

/// Deterministic random source. Distribution code is written out here rather than
/// taken from <random> so the streams are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    double normal();

    template <class T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
    }

private:
    std::mt19937_64 engine_;
    bool hasSpare_ = false;
    double spare_ = 0.0;
};

/// Generates version-4 GUIDs from a seeded stream, or from the OS when unseeded.
class GuidSource {
public:
    GuidSource();
    explicit GuidSource(std::uint64_t seed);
    Guid next();

private:
    Rng rng_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace ekila
