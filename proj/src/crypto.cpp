#include "ekila/crypto.hpp"

#include <sodium.h>

namespace ekila::crypto {

namespace {

void ensureInit() {
    static const bool ok = sodium_init() >= 0;
    if (!ok) fail(ErrorCode::SigningFailure, "libsodium initialisation failed");
}

}  // namespace

Digest256 sha256(ByteView data) {
    ensureInit();
    Digest256 out;
    crypto_hash_sha256(out.bytes.data(), data.data(), data.size());
    return out;
}

Digest256 sha256(std::string_view text) {
    return sha256(ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

KeyPair KeyPair::fromSeed(const Seed& seed) {
    ensureInit();
    KeyPair kp;
    if (crypto_sign_seed_keypair(kp.publicKey_.bytes.data(), kp.secretKey_.bytes.data(), seed.bytes.data()) != 0)
        fail(ErrorCode::SigningFailure, "key derivation failed");
    return kp;
}

KeyPair KeyPair::fromLabel(std::string_view label) {
    Seed seed;
    seed.bytes = sha256(label).bytes;
    return fromSeed(seed);
}

Signature KeyPair::sign(ByteView message) const {
    ensureInit();
    Signature sig;
    if (crypto_sign_detached(sig.bytes.data(), nullptr, message.data(), message.size(), secretKey_.bytes.data()) != 0)
        fail(ErrorCode::SigningFailure, "signing failed");
    return sig;
}

Address KeyPair::address() const { return addressOf(publicKey_); }

bool verify(const PublicKey& key, ByteView message, const Signature& signature) {
    ensureInit();
    return crypto_sign_verify_detached(signature.bytes.data(), message.data(), message.size(), key.bytes.data()) == 0;
}

Address addressOf(const PublicKey& key) {
    Digest256 d = sha256(key.view());
    Address a;
    std::copy_n(d.bytes.begin(), 20, a.raw.bytes.begin());
    return a;
}

}  // namespace ekila::crypto
