#include <openssl/evp.h>

#include <cstring>

#include "partstore/crypto.hpp"
#include "partstore/errors.hpp"
#include "partstore/rng.hpp"

namespace partstore {

namespace {

inline uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline uint64_t load64_le(const uint8_t* p, size_t avail) {
    uint64_t v = 0;
    for (size_t i = 0; i < 8 && i < avail; ++i)
        v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

inline void store64_le(uint8_t* p, uint64_t v) {
    for (size_t i = 0; i < 8; ++i) p[i] = static_cast<uint8_t>(v >> (8 * i));
}

// Deterministic primitive suite for tests and simulations. Everything is
// built from 64-bit mixing (the splitmix64 finalizer): a keyed keystream
// for "encryption", a keyed fold for tags and digests, and digest-derived
// public keys. One-way enough that private material never appears verbatim
// inside ciphertexts, tags, or public keys, which is what the
// server-blindness checks inspect; it is not cryptography.
class TestBackend final : public CryptoBackend {
public:
    TestBackend(uint64_t seed, uint32_t iterations)
        : rng_(seed), iterations_(iterations) {}

    std::string name() const override { return "test"; }
    uint32_t kdf_iterations() const override { return iterations_; }

    SymmetricKey derive_key(const Bytes& password, const Salt& salt,
                            KeyPurpose) override {
        if (password.empty())
            throw Error(ErrorCode::InvalidInput, "empty password");
        // Real PBKDF2 (just fewer rounds than production) so the frozen
        // reference vectors apply to both backends.
        SymmetricKey out;
        if (PKCS5_PBKDF2_HMAC(reinterpret_cast<const char*>(password.data()),
                              static_cast<int>(password.size()), salt.bytes.data(),
                              static_cast<int>(salt.bytes.size()),
                              static_cast<int>(iterations_), EVP_sha256(),
                              static_cast<int>(out.bytes.size()), out.bytes.data()) != 1)
            throw Error(ErrorCode::InvalidInput, "PBKDF2 failed");
        return out;
    }

    Bytes random_bytes(size_t n) override {
        Bytes out(n);
        size_t i = 0;
        for (; i + 8 <= n; i += 8) store64_le(out.data() + i, rng_.next());
        if (i < n) {
            uint64_t v = rng_.next();
            for (; i < n; ++i, v >>= 8) out[i] = static_cast<uint8_t>(v);
        }
        return out;
    }

    Ciphertext sym_encrypt(const SymmetricKey& key, const Bytes& plaintext) override {
        Ciphertext ct;
        ct.nonce.resize(12);
        uint64_t n = nonce_counter_++;
        store64_le(ct.nonce.data(), n);
        ct.nonce[8] = 0x74; // backend marker bytes, keeps nonces well-formed
        ct.nonce[9] = 0x73;
        ct.nonce[10] = ct.nonce[11] = 0;

        ct.body = plaintext;
        apply_keystream(key, ct.nonce, ct.body);
        ct.tag = compute_tag(key, ct.nonce, ct.body);
        return ct;
    }

    Bytes sym_decrypt(const SymmetricKey& key, const Ciphertext& ct) override {
        if (ct.nonce.size() != 12 || ct.tag.size() != 16)
            throw Error(ErrorCode::AuthenticationFailure, "malformed ciphertext");
        if (compute_tag(key, ct.nonce, ct.body) != ct.tag)
            throw Error(ErrorCode::AuthenticationFailure, "tag mismatch");
        Bytes plain = ct.body;
        apply_keystream(key, ct.nonce, plain);
        return plain;
    }

    EncKeyPair gen_enc_keypair() override {
        Bytes sk = random_bytes(32);
        return EncKeyPair{derived_public(kEncTag, sk), sk};
    }

    Bytes asym_encrypt(const Bytes& public_key, const Bytes& plaintext) override {
        if (public_key.size() != 32)
            throw Error(ErrorCode::InvalidInput, "bad public key size");
        Bytes eph = random_bytes(16);
        SymmetricKey envelope_key = envelope_secret(public_key, eph);
        Bytes out = eph;
        append(out, sym_encrypt(envelope_key, plaintext).serialize());
        return out;
    }

    Bytes asym_decrypt(const Bytes& private_key, const Bytes& blob) override {
        if (private_key.size() != 32)
            throw Error(ErrorCode::DecryptionFailure, "bad private key size");
        if (blob.size() < 16 + 12 + 16)
            throw Error(ErrorCode::DecryptionFailure, "blob too short");
        Bytes pk = derived_public(kEncTag, private_key);
        Bytes eph(blob.begin(), blob.begin() + 16);
        SymmetricKey envelope_key = envelope_secret(pk, eph);
        try {
            Bytes tail(blob.begin() + 16, blob.end());
            return sym_decrypt(envelope_key, Ciphertext::deserialize(tail));
        } catch (const Error&) {
            throw Error(ErrorCode::DecryptionFailure, "envelope payload rejected");
        }
    }

    SigKeyPair gen_sig_keypair() override {
        Bytes sk = random_bytes(32);
        return SigKeyPair{derived_public(kSigTag, sk), sk};
    }

    Bytes sign(const Bytes& private_key, const Bytes& message) override {
        if (private_key.size() != 32)
            throw Error(ErrorCode::InvalidInput, "bad signing key size");
        // MAC keyed by the verification key: verify() can recompute it, a
        // signer with the wrong private key cannot.
        return keyed_mac(derived_public(kSigTag, private_key), message);
    }

    bool verify(const Bytes& public_key, const Bytes& message,
                const Bytes& signature) override {
        if (public_key.size() != 32 || signature.size() != 32) return false;
        return keyed_mac(public_key, message) == signature;
    }

    std::array<uint8_t, 32> digest32(const Bytes& data) override {
        uint64_t lanes[4];
        fold(data.data(), data.size(), 0x64696765ULL /* "dige" */, lanes);
        std::array<uint8_t, 32> out{};
        for (int i = 0; i < 4; ++i) store64_le(out.data() + 8 * i, lanes[i]);
        return out;
    }

private:
    static constexpr uint64_t kEncTag = 0x656E632D706BULL; // "enc-pk"
    static constexpr uint64_t kSigTag = 0x7369672D766BULL; // "sig-vk"

    static void fold(const uint8_t* data, size_t len, uint64_t domain,
                     uint64_t out_lanes[4]) {
        uint64_t lanes[4] = {mix64(domain ^ 0x9E3779B97F4A7C15ULL ^ len),
                             mix64(domain ^ 0xBF58476D1CE4E5B9ULL),
                             mix64(domain ^ 0x94D049BB133111EBULL),
                             mix64(domain ^ 0xD6E8FEB86659FD93ULL)};
        size_t off = 0, block = 0;
        while (off < len) {
            uint64_t w = load64_le(data + off, len - off);
            lanes[block & 3] = mix64(lanes[block & 3] ^ w ^ (block * 0x2545F4914F6CDD1DULL));
            off += 8;
            ++block;
        }
        for (int round = 0; round < 2; ++round)
            for (int i = 0; i < 4; ++i)
                lanes[i] = mix64(lanes[i] ^ lanes[(i + 3) & 3]);
        for (int i = 0; i < 4; ++i) out_lanes[i] = lanes[i];
    }

    Bytes derived_public(uint64_t tag, const Bytes& sk) {
        uint64_t lanes[4];
        fold(sk.data(), sk.size(), tag, lanes);
        Bytes out(32);
        for (int i = 0; i < 4; ++i) store64_le(out.data() + 8 * i, lanes[i]);
        return out;
    }

    SymmetricKey envelope_secret(const Bytes& pk, const Bytes& eph) {
        Bytes material = pk;
        append(material, eph);
        SymmetricKey k;
        auto d = digest32(material);
        std::copy(d.begin(), d.end(), k.bytes.begin());
        return k;
    }

    static void apply_keystream(const SymmetricKey& key, const Bytes& nonce, Bytes& buf) {
        uint64_t k0 = load64_le(key.bytes.data(), 32);
        uint64_t k1 = load64_le(key.bytes.data() + 8, 24);
        uint64_t k2 = load64_le(key.bytes.data() + 16, 16);
        uint64_t k3 = load64_le(key.bytes.data() + 24, 8);
        uint64_t n0 = load64_le(nonce.data(), nonce.size());
        uint64_t state = mix64(k0 ^ n0) ^ mix64(k1 + 0x9E3779B97F4A7C15ULL) ^
                         mix64(k2 ^ 0xD6E8FEB86659FD93ULL) ^ mix64(k3 + n0);
        size_t i = 0;
        for (; i + 8 <= buf.size(); i += 8) {
            uint64_t ks = splitmix64_next(state);
            uint64_t w = load64_le(buf.data() + i, 8) ^ ks;
            store64_le(buf.data() + i, w);
        }
        if (i < buf.size()) {
            uint64_t ks = splitmix64_next(state);
            for (; i < buf.size(); ++i, ks >>= 8)
                buf[i] ^= static_cast<uint8_t>(ks);
        }
    }

    static Bytes compute_tag(const SymmetricKey& key, const Bytes& nonce,
                             const Bytes& body) {
        Bytes material;
        material.reserve(32 + nonce.size() + body.size());
        material.insert(material.end(), key.bytes.begin(), key.bytes.end());
        material.insert(material.end(), nonce.begin(), nonce.end());
        material.insert(material.end(), body.begin(), body.end());
        uint64_t lanes[4];
        fold(material.data(), material.size(), 0x746167ULL /* "tag" */, lanes);
        Bytes tag(16);
        store64_le(tag.data(), lanes[0]);
        store64_le(tag.data() + 8, lanes[1] ^ lanes[2]);
        return tag;
    }

    Bytes keyed_mac(const Bytes& key, const Bytes& message) {
        Bytes material = key;
        append(material, message);
        auto d = digest32(material);
        return Bytes(d.begin(), d.end());
    }

    Xoshiro256pp rng_;
    uint32_t iterations_;
    uint64_t nonce_counter_ = 0;
};

} // namespace

std::unique_ptr<CryptoBackend> make_test_backend(uint64_t seed, uint32_t kdf_iterations) {
    return std::make_unique<TestBackend>(seed, kdf_iterations);
}

} // namespace partstore
