#pragma once

#include "ekila/common.hpp"

namespace ekila::crypto {

using PublicKey = FixedBytes<32>;
using Signature = FixedBytes<64>;
using Seed = FixedBytes<32>;

Digest256 sha256(ByteView data);
Digest256 sha256(std::string_view text);

/// Ed25519 key pair derived deterministically from a 32-byte seed.
class KeyPair {
public:
    static KeyPair fromSeed(const Seed& seed);
    /// Convenience for tests and demos: seed = SHA-256(label).
    static KeyPair fromLabel(std::string_view label);

    const PublicKey& publicKey() const { return publicKey_; }
    Signature sign(ByteView message) const;
    /// Wallet address owned by this key: the first 20 bytes of SHA-256(public key).
    Address address() const;

private:
    PublicKey publicKey_;
    FixedBytes<64> secretKey_;
};

bool verify(const PublicKey& key, ByteView message, const Signature& signature);
Address addressOf(const PublicKey& key);

}  // namespace ekila::crypto
