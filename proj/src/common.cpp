#include "ekila/common.hpp"

#include <cmath>

namespace ekila {

std::string_view errorCodeName(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::Io: return "Io";
        case ErrorCode::Format: return "Format";
        case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::DanglingIngredient: return "DanglingIngredient";
        case ErrorCode::SigningFailure: return "SigningFailure";
        case ErrorCode::DuplicateGuid: return "DuplicateGuid";
        case ErrorCode::CycleDetected: return "CycleDetected";
        case ErrorCode::MalformedUri: return "MalformedUri";
        case ErrorCode::NoPaymentRoute: return "NoPaymentRoute";
        case ErrorCode::AraResolutionFailure: return "AraResolutionFailure";
        case ErrorCode::BadNonce: return "BadNonce";
        case ErrorCode::InsufficientFunds: return "InsufficientFunds";
        case ErrorCode::InsufficientEscrow: return "InsufficientEscrow";
        case ErrorCode::Unauthorized: return "Unauthorized";
        case ErrorCode::UnknownToken: return "UnknownToken";
        case ErrorCode::UnknownContract: return "UnknownContract";
        case ErrorCode::ImageTooSmall: return "ImageTooSmall";
        case ErrorCode::DegenerateBatch: return "DegenerateBatch";
        case ErrorCode::CorpusTooSmall: return "CorpusTooSmall";
        case ErrorCode::DivergedTraining: return "DivergedTraining";
        case ErrorCode::TooFewVectors: return "TooFewVectors";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::EmptyIndex: return "EmptyIndex";
        case ErrorCode::NonSquareMap: return "NonSquareMap";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    }
    return "Unknown";
}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

namespace {

int hexValue(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
}

}  // namespace

std::string toHex(ByteView bytes) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

Bytes fromHex(std::string_view hex) {
    if (hex.size() % 2 != 0) fail(ErrorCode::Format, "odd-length hex string");
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = hexValue(hex[2 * i]);
        int lo = hexValue(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) fail(ErrorCode::Format, "invalid hex digit in '" + std::string(hex) + "'");
        out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
    }
    return out;
}

std::string Address::compact() const {
    std::string full = raw.hex();
    auto first = full.find_first_not_of('0');
    if (first == std::string::npos) return "0x0";
    return "0x" + full.substr(first);
}

Address Address::parse(std::string_view text) {
    if (text.size() < 3 || text.substr(0, 2) != "0x")
        fail(ErrorCode::Format, "address must start with 0x: '" + std::string(text) + "'");
    std::string_view digits = text.substr(2);
    if (digits.size() > 40) fail(ErrorCode::Format, "address wider than 160 bits");
    std::string padded(40 - digits.size(), '0');
    padded.append(digits);
    Address a;
    a.raw = FixedBytes<20>::fromHexString(padded);
    return a;
}

std::string Guid::str() const {
    std::string h = raw.hex();
    return h.substr(0, 8) + "-" + h.substr(8, 4) + "-" + h.substr(12, 4) + "-" + h.substr(16, 4) +
           "-" + h.substr(20);
}

Guid Guid::parse(std::string_view text) {
    if (text.size() != 36 || text[8] != '-' || text[13] != '-' || text[18] != '-' || text[23] != '-')
        fail(ErrorCode::Format, "malformed GUID '" + std::string(text) + "'");
    std::string h;
    for (char c : text)
        if (c != '-') h.push_back(c);
    Guid g;
    g.raw = FixedBytes<16>::fromHexString(h);
    return g;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) fail(ErrorCode::InvalidArgument, "Rng::below(0)");
    // Rejection sampling keeps the result unbiased.
    std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    if (hasSpare_) {
        hasSpare_ = false;
        return spare_;
    }
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    hasSpare_ = true;
    return r * std::cos(theta);
}

GuidSource::GuidSource() : rng_(std::random_device{}() ^ (std::uint64_t{std::random_device{}()} << 32)) {}

GuidSource::GuidSource(std::uint64_t seed) : rng_(seed) {}

Guid GuidSource::next() {
    Guid g;
    for (int i = 0; i < 2; ++i) {
        std::uint64_t word = rng_.next();
        for (int b = 0; b < 8; ++b) g.raw.bytes[i * 8 + b] = static_cast<std::uint8_t>(word >> (8 * b));
    }
    g.raw.bytes[6] = static_cast<std::uint8_t>((g.raw.bytes[6] & 0x0f) | 0x40);
    g.raw.bytes[8] = static_cast<std::uint8_t>((g.raw.bytes[8] & 0x3f) | 0x80);
    return g;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace ekila
