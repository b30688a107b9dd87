#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>

#include "partstore/bytes.hpp"

namespace partstore {

struct Salt {
    std::array<uint8_t, 16> bytes{};
};

struct SymmetricKey {
    std::array<uint8_t, 32> bytes{};

    bool operator==(const SymmetricKey&) const = default;
    Bytes to_bytes() const { return Bytes(bytes.begin(), bytes.end()); }
};

struct Ciphertext {
    Bytes nonce; // 12 bytes
    Bytes body;  // same length as the plaintext
    Bytes tag;   // 16 bytes

    bool operator==(const Ciphertext&) const = default;

    // nonce ‖ body ‖ tag; the fixed field sizes make this self-delimiting.
    Bytes serialize() const;
    static Ciphertext deserialize(const Bytes& raw);
};

struct EncKeyPair {
    Bytes public_key;
    Bytes private_key;

    bool operator==(const EncKeyPair&) const = default;
};

struct SigKeyPair {
    Bytes public_key;
    Bytes private_key;

    bool operator==(const SigKeyPair&) const = default;
};

enum class KeyPurpose { Storage, Auth };

// Pluggable primitive suite. The production backend uses standard
// algorithms (PBKDF2-HMAC-SHA256, AES-256-GCM, RSA-2048 hybrid envelopes,
// ECDSA-P256). The test backend is deterministic and fast so Monte-Carlo
// sweeps are not crypto-bound; it honors the same functional contracts but
// provides no real security. Both backends pass the same contract suite.
class CryptoBackend {
public:
    virtual ~CryptoBackend() = default;

    virtual std::string name() const = 0;

    // Purpose tags intent only; key separation comes from distinct salts,
    // which keeps the derivation compatible with standard PBKDF2 vectors.
    virtual SymmetricKey derive_key(const Bytes& password, const Salt& salt,
                                    KeyPurpose purpose) = 0;
    virtual uint32_t kdf_iterations() const = 0;

    virtual Bytes random_bytes(size_t n) = 0;
    SymmetricKey random_key();
    Salt random_salt();

    virtual Ciphertext sym_encrypt(const SymmetricKey& key, const Bytes& plaintext) = 0;
    // Throws AuthenticationFailure on wrong key or any tampered byte.
    virtual Bytes sym_decrypt(const SymmetricKey& key, const Ciphertext& ct) = 0;

    virtual EncKeyPair gen_enc_keypair() = 0;
    virtual Bytes asym_encrypt(const Bytes& public_key, const Bytes& plaintext) = 0;
    // Throws DecryptionFailure on a mismatched key or malformed blob.
    virtual Bytes asym_decrypt(const Bytes& private_key, const Bytes& blob) = 0;

    virtual SigKeyPair gen_sig_keypair() = 0;
    virtual Bytes sign(const Bytes& private_key, const Bytes& message) = 0;
    virtual bool verify(const Bytes& public_key, const Bytes& message,
                        const Bytes& signature) = 0;

    virtual std::array<uint8_t, 32> digest32(const Bytes& data) = 0;
};

// Production backend; draws randomness from the OS.
std::unique_ptr<CryptoBackend> make_openssl_backend(uint32_t kdf_iterations = 100000);

// Deterministic test backend; all randomness flows from the seed.
std::unique_ptr<CryptoBackend> make_test_backend(uint64_t seed,
                                                 uint32_t kdf_iterations = 1000);

std::unique_ptr<CryptoBackend> make_backend(const std::string& name, uint64_t seed);

} // namespace partstore
