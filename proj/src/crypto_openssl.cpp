#include <openssl/ec.h>
#include <openssl/evp.h>
#include <openssl/rand.h>
#include <openssl/rsa.h>
#include <openssl/sha.h>
#include <openssl/x509.h>

#include <cstring>

#include "partstore/crypto.hpp"
#include "partstore/errors.hpp"

namespace partstore {

Bytes Ciphertext::serialize() const {
    Bytes out;
    out.reserve(nonce.size() + body.size() + tag.size());
    append(out, nonce);
    append(out, body);
    append(out, tag);
    return out;
}

Ciphertext Ciphertext::deserialize(const Bytes& raw) {
    if (raw.size() < 12 + 16)
        throw Error(ErrorCode::InvalidInput, "ciphertext too short");
    Ciphertext ct;
    ct.nonce.assign(raw.begin(), raw.begin() + 12);
    ct.body.assign(raw.begin() + 12, raw.end() - 16);
    ct.tag.assign(raw.end() - 16, raw.end());
    return ct;
}

SymmetricKey CryptoBackend::random_key() {
    SymmetricKey k;
    Bytes b = random_bytes(32);
    std::copy(b.begin(), b.end(), k.bytes.begin());
    return k;
}

Salt CryptoBackend::random_salt() {
    Salt s;
    Bytes b = random_bytes(16);
    std::copy(b.begin(), b.end(), s.bytes.begin());
    return s;
}

namespace {

struct EvpPkeyDeleter {
    void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
using PkeyPtr = std::unique_ptr<EVP_PKEY, EvpPkeyDeleter>;

struct EvpCtxDeleter {
    void operator()(EVP_PKEY_CTX* p) const { EVP_PKEY_CTX_free(p); }
};
using PkeyCtxPtr = std::unique_ptr<EVP_PKEY_CTX, EvpCtxDeleter>;

Bytes pkey_to_der(EVP_PKEY* key, bool is_private) {
    unsigned char* buf = nullptr;
    int len = is_private ? i2d_PrivateKey(key, &buf) : i2d_PUBKEY(key, &buf);
    if (len <= 0)
        throw Error(ErrorCode::InvalidInput, "key serialization failed");
    Bytes out(buf, buf + len);
    OPENSSL_free(buf);
    return out;
}

PkeyPtr pkey_from_der(const Bytes& der, bool is_private, int type_hint) {
    const unsigned char* p = der.data();
    EVP_PKEY* key = is_private
                        ? d2i_PrivateKey(type_hint, nullptr, &p, static_cast<long>(der.size()))
                        : d2i_PUBKEY(nullptr, &p, static_cast<long>(der.size()));
    if (!key)
        throw Error(ErrorCode::DecryptionFailure, "key parse failed");
    return PkeyPtr(key);
}

class OpenSslBackend final : public CryptoBackend {
public:
    explicit OpenSslBackend(uint32_t iterations) : iterations_(iterations) {}

    std::string name() const override { return "production"; }
    uint32_t kdf_iterations() const override { return iterations_; }

    SymmetricKey derive_key(const Bytes& password, const Salt& salt,
                            KeyPurpose) override {
        if (password.empty())
            throw Error(ErrorCode::InvalidInput, "empty password");
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
        if (n > 0 && RAND_bytes(out.data(), static_cast<int>(n)) != 1)
            throw Error(ErrorCode::InvalidInput, "RAND_bytes failed");
        return out;
    }

    Ciphertext sym_encrypt(const SymmetricKey& key, const Bytes& plaintext) override {
        Ciphertext ct;
        ct.nonce = random_bytes(12);
        ct.body.resize(plaintext.size());
        ct.tag.resize(16);

        EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
        int len = 0;
        bool ok = EVP_EncryptInit_ex(ctx, EVP_aes_256_gcm(), nullptr, key.bytes.data(),
                                     ct.nonce.data()) == 1 &&
                  (plaintext.empty() ||
                   EVP_EncryptUpdate(ctx, ct.body.data(), &len, plaintext.data(),
                                     static_cast<int>(plaintext.size())) == 1) &&
                  EVP_EncryptFinal_ex(ctx, ct.body.data() + len, &len) == 1 &&
                  EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_GET_TAG, 16, ct.tag.data()) == 1;
        EVP_CIPHER_CTX_free(ctx);
        if (!ok)
            throw Error(ErrorCode::InvalidInput, "AES-GCM encrypt failed");
        return ct;
    }

    Bytes sym_decrypt(const SymmetricKey& key, const Ciphertext& ct) override {
        if (ct.nonce.size() != 12 || ct.tag.size() != 16)
            throw Error(ErrorCode::AuthenticationFailure, "malformed ciphertext");
        Bytes plain(ct.body.size());
        EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
        int len = 0;
        Bytes tag = ct.tag;
        bool ok = EVP_DecryptInit_ex(ctx, EVP_aes_256_gcm(), nullptr, key.bytes.data(),
                                     ct.nonce.data()) == 1 &&
                  (ct.body.empty() ||
                   EVP_DecryptUpdate(ctx, plain.data(), &len, ct.body.data(),
                                     static_cast<int>(ct.body.size())) == 1) &&
                  EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_SET_TAG, 16, tag.data()) == 1 &&
                  EVP_DecryptFinal_ex(ctx, plain.data() + len, &len) == 1;
        EVP_CIPHER_CTX_free(ctx);
        if (!ok)
            throw Error(ErrorCode::AuthenticationFailure, "AES-GCM tag mismatch");
        return plain;
    }

    EncKeyPair gen_enc_keypair() override {
        PkeyCtxPtr ctx(EVP_PKEY_CTX_new_id(EVP_PKEY_RSA, nullptr));
        EVP_PKEY* raw = nullptr;
        if (!ctx || EVP_PKEY_keygen_init(ctx.get()) != 1 ||
            EVP_PKEY_CTX_set_rsa_keygen_bits(ctx.get(), 2048) != 1 ||
            EVP_PKEY_keygen(ctx.get(), &raw) != 1)
            throw Error(ErrorCode::InvalidInput, "RSA keygen failed");
        PkeyPtr key(raw);
        return EncKeyPair{pkey_to_der(key.get(), false), pkey_to_der(key.get(), true)};
    }

    // Hybrid envelope: RSA-OAEP wraps a fresh AES-256-GCM key, which seals
    // the payload. Keeps the asymmetric path free of RSA's plaintext size
    // limit (shares plus framing exceed it).
    Bytes asym_encrypt(const Bytes& public_key, const Bytes& plaintext) override {
        PkeyPtr key = pkey_from_der(public_key, false, EVP_PKEY_RSA);
        SymmetricKey data_key = random_key();

        PkeyCtxPtr ctx(EVP_PKEY_CTX_new(key.get(), nullptr));
        size_t wrapped_len = 0;
        if (!ctx || EVP_PKEY_encrypt_init(ctx.get()) != 1 ||
            EVP_PKEY_CTX_set_rsa_padding(ctx.get(), RSA_PKCS1_OAEP_PADDING) != 1 ||
            EVP_PKEY_encrypt(ctx.get(), nullptr, &wrapped_len, data_key.bytes.data(),
                             data_key.bytes.size()) != 1)
            throw Error(ErrorCode::InvalidInput, "RSA-OAEP size query failed");
        Bytes wrapped(wrapped_len);
        if (EVP_PKEY_encrypt(ctx.get(), wrapped.data(), &wrapped_len,
                             data_key.bytes.data(), data_key.bytes.size()) != 1)
            throw Error(ErrorCode::InvalidInput, "RSA-OAEP encrypt failed");
        wrapped.resize(wrapped_len);

        Ciphertext sealed = sym_encrypt(data_key, plaintext);
        Bytes out;
        append_u32_be(out, static_cast<uint32_t>(wrapped.size()));
        append(out, wrapped);
        append(out, sealed.serialize());
        return out;
    }

    Bytes asym_decrypt(const Bytes& private_key, const Bytes& blob) override {
        if (blob.size() < 4)
            throw Error(ErrorCode::DecryptionFailure, "blob too short");
        uint32_t wrapped_len = read_u32_be(blob.data());
        if (blob.size() < 4 + wrapped_len)
            throw Error(ErrorCode::DecryptionFailure, "blob truncated");

        PkeyPtr key = pkey_from_der(private_key, true, EVP_PKEY_RSA);
        PkeyCtxPtr ctx(EVP_PKEY_CTX_new(key.get(), nullptr));
        size_t key_len = 0;
        Bytes wrapped(blob.begin() + 4, blob.begin() + 4 + wrapped_len);
        if (!ctx || EVP_PKEY_decrypt_init(ctx.get()) != 1 ||
            EVP_PKEY_CTX_set_rsa_padding(ctx.get(), RSA_PKCS1_OAEP_PADDING) != 1 ||
            EVP_PKEY_decrypt(ctx.get(), nullptr, &key_len, wrapped.data(),
                             wrapped.size()) != 1)
            throw Error(ErrorCode::DecryptionFailure, "RSA-OAEP size query failed");
        Bytes data_key_bytes(key_len);
        if (EVP_PKEY_decrypt(ctx.get(), data_key_bytes.data(), &key_len, wrapped.data(),
                             wrapped.size()) != 1 ||
            key_len != 32)
            throw Error(ErrorCode::DecryptionFailure, "RSA-OAEP decrypt failed");

        SymmetricKey data_key;
        std::copy(data_key_bytes.begin(), data_key_bytes.begin() + 32,
                  data_key.bytes.begin());
        try {
            Bytes tail(blob.begin() + 4 + wrapped_len, blob.end());
            return sym_decrypt(data_key, Ciphertext::deserialize(tail));
        } catch (const Error&) {
            throw Error(ErrorCode::DecryptionFailure, "envelope payload rejected");
        }
    }

    SigKeyPair gen_sig_keypair() override {
        PkeyCtxPtr ctx(EVP_PKEY_CTX_new_id(EVP_PKEY_EC, nullptr));
        EVP_PKEY* raw = nullptr;
        if (!ctx || EVP_PKEY_keygen_init(ctx.get()) != 1 ||
            EVP_PKEY_CTX_set_ec_paramgen_curve_nid(ctx.get(), NID_X9_62_prime256v1) != 1 ||
            EVP_PKEY_keygen(ctx.get(), &raw) != 1)
            throw Error(ErrorCode::InvalidInput, "ECDSA keygen failed");
        PkeyPtr key(raw);
        return SigKeyPair{pkey_to_der(key.get(), false), pkey_to_der(key.get(), true)};
    }

    Bytes sign(const Bytes& private_key, const Bytes& message) override {
        PkeyPtr key = pkey_from_der(private_key, true, EVP_PKEY_EC);
        EVP_MD_CTX* ctx = EVP_MD_CTX_new();
        size_t sig_len = 0;
        bool ok = EVP_DigestSignInit(ctx, nullptr, EVP_sha256(), nullptr, key.get()) == 1 &&
                  EVP_DigestSign(ctx, nullptr, &sig_len, message.data(), message.size()) == 1;
        Bytes sig(sig_len);
        ok = ok && EVP_DigestSign(ctx, sig.data(), &sig_len, message.data(),
                                  message.size()) == 1;
        EVP_MD_CTX_free(ctx);
        if (!ok)
            throw Error(ErrorCode::InvalidInput, "ECDSA sign failed");
        sig.resize(sig_len);
        return sig;
    }

    bool verify(const Bytes& public_key, const Bytes& message,
                const Bytes& signature) override {
        PkeyPtr key;
        try {
            key = pkey_from_der(public_key, false, EVP_PKEY_EC);
        } catch (const Error&) {
            return false;
        }
        EVP_MD_CTX* ctx = EVP_MD_CTX_new();
        bool ok = EVP_DigestVerifyInit(ctx, nullptr, EVP_sha256(), nullptr,
                                       key.get()) == 1 &&
                  EVP_DigestVerify(ctx, signature.data(), signature.size(),
                                   message.data(), message.size()) == 1;
        EVP_MD_CTX_free(ctx);
        return ok;
    }

    std::array<uint8_t, 32> digest32(const Bytes& data) override {
        std::array<uint8_t, 32> out{};
        SHA256(data.data(), data.size(), out.data());
        return out;
    }

private:
    uint32_t iterations_;
};

} // namespace

std::unique_ptr<CryptoBackend> make_openssl_backend(uint32_t kdf_iterations) {
    return std::make_unique<OpenSslBackend>(kdf_iterations);
}

std::unique_ptr<CryptoBackend> make_backend(const std::string& name, uint64_t seed) {
    if (name == "production") return make_openssl_backend();
    if (name == "test") return make_test_backend(seed);
    throw Error(ErrorCode::InvalidInput, "unknown crypto backend: " + name);
}

} // namespace partstore
