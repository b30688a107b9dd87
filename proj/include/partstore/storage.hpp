#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "partstore/bytes.hpp"
#include "partstore/crypto.hpp"
#include "partstore/secret_sharing.hpp"

namespace partstore {

// One end-to-end encrypted chat: its participants and the history of
// symmetric chat keys, newest last.
struct Chatroom {
    std::string id;
    std::vector<std::string> participants; // sorted, unique, includes owner
    std::vector<SymmetricKey> key_history;

    bool operator==(const Chatroom&) const = default;
};

// A slice of the owner's chats plus this part's embedded share of the
// compartment secret. Parts are sealed individually so peers can help
// recover them one by one.
struct StoragePart {
    std::string id;
    std::vector<Chatroom> chatrooms;
    Share cts_share;
    std::optional<std::string> predecessor; // older part holding rotated-out keys

    bool operator==(const StoragePart&) const = default;
};

struct PeerKeys {
    Bytes enc_public;
    Bytes sig_public;

    bool operator==(const PeerKeys&) const = default;
};

struct PartTableEntry {
    std::string part_id;
    SymmetricKey part_key;
    std::array<uint8_t, 32> part_hash{}; // digest of the sealed part blob

    bool operator==(const PartTableEntry&) const = default;
};

// The owner's private root record: identity keys, contact keys, and the
// table of part keys. Chat keys themselves live in the parts.
struct Storage {
    std::string owner;
    EncKeyPair enc_pair;
    SigKeyPair sig_pair;
    std::map<std::string, PeerKeys> peer_keys;
    std::vector<PartTableEntry> part_table;
    std::map<std::string, uint32_t> ts_shares_sent;
    std::map<std::string, uint32_t> cts_shares_sent;
    uint64_t last_distribution = 0; // unix seconds

    bool operator==(const Storage&) const = default;
};

enum class BlobKind : uint8_t { Storage = 1, StoragePart = 2 };

struct SealedBlob {
    BlobKind kind = BlobKind::Storage;
    Ciphertext ciphertext;

    // 4-byte magic "PSTR", kind, version, nonce, big-endian body length,
    // body, tag.
    Bytes serialize() const;
    static SealedBlob deserialize(const Bytes& raw);

    bool operator==(const SealedBlob&) const = default;
};

// Server-held recovery material: two encryptions of the same storage key,
// one opened via the compartment route, one via the flat route.
struct RecoveryKeys {
    SymmetricKey k_cts;
    SymmetricKey k_ts;
    Ciphertext s_cts;
    Ciphertext s_ts;

    bool operator==(const RecoveryKeys&) const = default;
};

// Canonical serialization: UTF-8 JSON, lexicographically sorted keys, no
// whitespace. Stable across processes so sealed-blob digests are
// reproducible.
Bytes canonical_storage_bytes(const Storage& storage);
Storage parse_storage(const Bytes& raw);
Bytes canonical_part_bytes(const StoragePart& part);
StoragePart parse_part(const Bytes& raw);

SealedBlob seal_storage(CryptoBackend& crypto, const Storage& storage,
                        const SymmetricKey& p_s);
Storage open_storage(CryptoBackend& crypto, const SealedBlob& blob,
                     const SymmetricKey& p_s);
SealedBlob seal_part(CryptoBackend& crypto, const StoragePart& part,
                     const SymmetricKey& k_sp);
StoragePart open_part(CryptoBackend& crypto, const SealedBlob& blob,
                      const SymmetricKey& k_sp);

// Deterministic round-robin assignment: chatrooms sorted by id, chatroom j
// to part j mod p.
std::vector<std::vector<Chatroom>> partition_chatrooms(
    std::vector<Chatroom> chatrooms, size_t p);

// All contacts the owner shares chats with, sorted. The peer-keys map is
// maintained as exactly that contact set, so its keys are the list.
std::vector<std::string> collect_peers(const Storage& storage);

// Union of participants across the part's chatrooms, owner excluded,
// sorted.
std::vector<std::string> collect_part_peers(const StoragePart& part,
                                            const std::string& owner);

// Stored-bytes model for a distributed storage layout: fixed per-part and
// per-peer costs minus the saving from dropping the monolithic record.
// Model constants, not measurements of our own serialization.
uint64_t estimate_overhead(size_t parts, size_t unique_peers);

// Stored bytes for the undistributed alternative of keeping every chat key
// in one monolithic record.
uint64_t baseline_overhead(size_t chats);

} // namespace partstore
