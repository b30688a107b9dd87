#include "partstore/storage.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "json_text.hpp"
#include "partstore/errors.hpp"

namespace partstore {

namespace {

using nlohmann::json;
using jsontext::append_string;

SymmetricKey key_from_json(const json& j) {
    Bytes raw = b64_decode(j.get<std::string>());
    if (raw.size() != 32)
        throw Error(ErrorCode::InvalidInput, "symmetric key must be 32 bytes");
    SymmetricKey k;
    std::copy(raw.begin(), raw.end(), k.bytes.begin());
    return k;
}

// The canonical record form is JSON with keys sorted and no whitespace.
// Records are re-serialized on every distribution and recovery, so the
// emitters below write that form directly instead of building a DOM first;
// parsing still goes through the general JSON machinery, which also keeps
// the two sides honest about what the canonical bytes look like.

void append_b64(std::string& out, const uint8_t* data, size_t len) {
    // Base64 output never needs escaping inside a JSON string.
    out.push_back('"');
    out += b64_encode(data, len);
    out.push_back('"');
}

void append_b64(std::string& out, const Bytes& b) {
    append_b64(out, b.data(), b.size());
}

void emit_share(std::string& out, const Share& s) {
    out += "{\"payload\":";
    append_b64(out, s.payload);
    out += ",\"schemeId\":";
    append_b64(out, s.scheme_id.data(), s.scheme_id.size());
    out += ",\"x\":";
    out += std::to_string(static_cast<unsigned>(s.x));
    out.push_back('}');
}

Share share_from_json(const json& j) {
    Share s;
    Bytes id = b64_decode(j.at("schemeId").get<std::string>());
    if (id.size() != s.scheme_id.size())
        throw Error(ErrorCode::InvalidInput, "scheme id must be 16 bytes");
    std::copy(id.begin(), id.end(), s.scheme_id.begin());
    s.x = static_cast<uint8_t>(j.at("x").get<unsigned>());
    s.payload = b64_decode(j.at("payload").get<std::string>());
    return s;
}

void emit_chatroom(std::string& out, const Chatroom& c) {
    out += "{\"id\":";
    append_string(out, c.id);
    out += ",\"keyHistory\":[";
    for (size_t i = 0; i < c.key_history.size(); ++i) {
        if (i) out.push_back(',');
        append_b64(out, c.key_history[i].bytes.data(), c.key_history[i].bytes.size());
    }
    out += "],\"participants\":[";
    for (size_t i = 0; i < c.participants.size(); ++i) {
        if (i) out.push_back(',');
        append_string(out, c.participants[i]);
    }
    out += "]}";
}

Chatroom chatroom_from_json(const json& j) {
    Chatroom c;
    c.id = j.at("id").get<std::string>();
    c.participants = j.at("participants").get<std::vector<std::string>>();
    for (const auto& k : j.at("keyHistory")) c.key_history.push_back(key_from_json(k));
    return c;
}

std::string emit_part(const StoragePart& p) {
    std::string out;
    out.reserve(256 + p.chatrooms.size() * 320);
    out += "{\"chatrooms\":[";
    for (size_t i = 0; i < p.chatrooms.size(); ++i) {
        if (i) out.push_back(',');
        emit_chatroom(out, p.chatrooms[i]);
    }
    out += "],\"ctsShare\":";
    emit_share(out, p.cts_share);
    out += ",\"id\":";
    append_string(out, p.id);
    out += ",\"predecessor\":";
    if (p.predecessor)
        append_string(out, *p.predecessor);
    else
        out += "null";
    out.push_back('}');
    return out;
}

StoragePart part_from_json(const json& j) {
    StoragePart p;
    p.id = j.at("id").get<std::string>();
    for (const auto& c : j.at("chatrooms")) p.chatrooms.push_back(chatroom_from_json(c));
    p.cts_share = share_from_json(j.at("ctsShare"));
    const auto& pred = j.at("predecessor");
    if (!pred.is_null()) p.predecessor = pred.get<std::string>();
    return p;
}

void emit_count_map(std::string& out, const std::map<std::string, uint32_t>& counts) {
    out.push_back('{');
    bool first = true;
    for (const auto& [id, n] : counts) {
        if (!first) out.push_back(',');
        first = false;
        append_string(out, id);
        out.push_back(':');
        out += std::to_string(n);
    }
    out.push_back('}');
}

template <typename Pair>
void emit_keypair(std::string& out, const Pair& pair) {
    out += "{\"private\":";
    append_b64(out, pair.private_key);
    out += ",\"public\":";
    append_b64(out, pair.public_key);
    out.push_back('}');
}

std::string emit_storage(const Storage& s) {
    std::string out;
    out.reserve(512 + s.peer_keys.size() * 128 + s.part_table.size() * 192 +
                (s.ts_shares_sent.size() + s.cts_shares_sent.size()) * 16);
    out += "{\"ctsSharesSent\":";
    emit_count_map(out, s.cts_shares_sent);
    out += ",\"encPair\":";
    emit_keypair(out, s.enc_pair);
    out += ",\"lastDistribution\":";
    out += std::to_string(s.last_distribution);
    out += ",\"owner\":";
    append_string(out, s.owner);
    out += ",\"partTable\":[";
    for (size_t i = 0; i < s.part_table.size(); ++i) {
        const auto& e = s.part_table[i];
        if (i) out.push_back(',');
        out += "{\"partHash\":";
        append_b64(out, e.part_hash.data(), e.part_hash.size());
        out += ",\"partId\":";
        append_string(out, e.part_id);
        out += ",\"partKey\":";
        append_b64(out, e.part_key.bytes.data(), e.part_key.bytes.size());
        out.push_back('}');
    }
    out += "],\"peerKeys\":{";
    bool first = true;
    for (const auto& [id, keys] : s.peer_keys) {
        if (!first) out.push_back(',');
        first = false;
        append_string(out, id);
        out += ":{\"enc\":";
        append_b64(out, keys.enc_public);
        out += ",\"sig\":";
        append_b64(out, keys.sig_public);
        out.push_back('}');
    }
    out += "},\"sigPair\":";
    emit_keypair(out, s.sig_pair);
    out += ",\"tsSharesSent\":";
    emit_count_map(out, s.ts_shares_sent);
    out.push_back('}');
    return out;
}

Storage storage_from_json(const json& j) {
    Storage s;
    s.owner = j.at("owner").get<std::string>();
    s.enc_pair.public_key = b64_decode(j.at("encPair").at("public").get<std::string>());
    s.enc_pair.private_key = b64_decode(j.at("encPair").at("private").get<std::string>());
    s.sig_pair.public_key = b64_decode(j.at("sigPair").at("public").get<std::string>());
    s.sig_pair.private_key = b64_decode(j.at("sigPair").at("private").get<std::string>());
    for (const auto& [id, keys] : j.at("peerKeys").items())
        s.peer_keys[id] = PeerKeys{b64_decode(keys.at("enc").get<std::string>()),
                                   b64_decode(keys.at("sig").get<std::string>())};
    for (const auto& e : j.at("partTable")) {
        PartTableEntry entry;
        entry.part_id = e.at("partId").get<std::string>();
        entry.part_key = key_from_json(e.at("partKey"));
        Bytes hash = b64_decode(e.at("partHash").get<std::string>());
        if (hash.size() != entry.part_hash.size())
            throw Error(ErrorCode::InvalidInput, "part hash must be 32 bytes");
        std::copy(hash.begin(), hash.end(), entry.part_hash.begin());
        s.part_table.push_back(std::move(entry));
    }
    s.ts_shares_sent = j.at("tsSharesSent").get<std::map<std::string, uint32_t>>();
    s.cts_shares_sent = j.at("ctsSharesSent").get<std::map<std::string, uint32_t>>();
    s.last_distribution = j.at("lastDistribution").get<uint64_t>();
    return s;
}

json parse_json(const Bytes& raw) {
    json j = json::parse(raw.begin(), raw.end(), nullptr, false);
    if (j.is_discarded())
        throw Error(ErrorCode::InvalidInput, "malformed serialized record");
    return j;
}

constexpr char kMagic[4] = {'P', 'S', 'T', 'R'};
constexpr uint8_t kVersion = 1;

} // namespace

Bytes canonical_storage_bytes(const Storage& storage) {
    return bytes_of(emit_storage(storage));
}

Storage parse_storage(const Bytes& raw) {
    try {
        return storage_from_json(parse_json(raw));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidInput, std::string("bad storage record: ") + e.what());
    }
}

Bytes canonical_part_bytes(const StoragePart& part) {
    return bytes_of(emit_part(part));
}

StoragePart parse_part(const Bytes& raw) {
    try {
        return part_from_json(parse_json(raw));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidInput, std::string("bad part record: ") + e.what());
    }
}

Bytes SealedBlob::serialize() const {
    if (ciphertext.nonce.size() != 12 || ciphertext.tag.size() != 16)
        throw Error(ErrorCode::InvalidInput, "unexpected ciphertext framing");
    Bytes out;
    out.reserve(4 + 2 + 12 + 4 + ciphertext.body.size() + 16);
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(static_cast<uint8_t>(kind));
    out.push_back(kVersion);
    append(out, ciphertext.nonce);
    append_u32_be(out, static_cast<uint32_t>(ciphertext.body.size()));
    append(out, ciphertext.body);
    append(out, ciphertext.tag);
    return out;
}

SealedBlob SealedBlob::deserialize(const Bytes& raw) {
    if (raw.size() < 4 + 2 + 12 + 4 + 16 || !std::equal(kMagic, kMagic + 4, raw.begin()))
        throw Error(ErrorCode::InvalidInput, "not a sealed blob");
    if (raw[5] != kVersion)
        throw Error(ErrorCode::InvalidInput, "unsupported blob version");
    if (raw[4] != static_cast<uint8_t>(BlobKind::Storage) &&
        raw[4] != static_cast<uint8_t>(BlobKind::StoragePart))
        throw Error(ErrorCode::InvalidInput, "unknown blob kind");
    SealedBlob blob;
    blob.kind = static_cast<BlobKind>(raw[4]);
    size_t off = 6;
    blob.ciphertext.nonce.assign(raw.begin() + off, raw.begin() + off + 12);
    off += 12;
    uint32_t body_len = read_u32_be(raw.data() + off);
    off += 4;
    if (raw.size() != off + body_len + 16)
        throw Error(ErrorCode::InvalidInput, "sealed blob length mismatch");
    blob.ciphertext.body.assign(raw.begin() + off, raw.begin() + off + body_len);
    blob.ciphertext.tag.assign(raw.begin() + off + body_len, raw.end());
    return blob;
}

SealedBlob seal_storage(CryptoBackend& crypto, const Storage& storage,
                        const SymmetricKey& p_s) {
    return SealedBlob{BlobKind::Storage,
                      crypto.sym_encrypt(p_s, canonical_storage_bytes(storage))};
}

Storage open_storage(CryptoBackend& crypto, const SealedBlob& blob,
                     const SymmetricKey& p_s) {
    if (blob.kind != BlobKind::Storage)
        throw Error(ErrorCode::InvalidInput, "blob does not hold a storage record");
    return parse_storage(crypto.sym_decrypt(p_s, blob.ciphertext));
}

SealedBlob seal_part(CryptoBackend& crypto, const StoragePart& part,
                     const SymmetricKey& k_sp) {
    return SealedBlob{BlobKind::StoragePart,
                      crypto.sym_encrypt(k_sp, canonical_part_bytes(part))};
}

StoragePart open_part(CryptoBackend& crypto, const SealedBlob& blob,
                      const SymmetricKey& k_sp) {
    if (blob.kind != BlobKind::StoragePart)
        throw Error(ErrorCode::InvalidInput, "blob does not hold a storage part");
    return parse_part(crypto.sym_decrypt(k_sp, blob.ciphertext));
}

std::vector<std::vector<Chatroom>> partition_chatrooms(
    std::vector<Chatroom> chatrooms, size_t p) {
    if (p == 0)
        throw Error(ErrorCode::InvalidInput, "at least one part required");
    std::sort(chatrooms.begin(), chatrooms.end(),
              [](const Chatroom& a, const Chatroom& b) { return a.id < b.id; });
    std::vector<std::vector<Chatroom>> parts(p);
    for (size_t j = 0; j < chatrooms.size(); ++j)
        parts[j % p].push_back(std::move(chatrooms[j]));
    return parts;
}

std::vector<std::string> collect_peers(const Storage& storage) {
    std::vector<std::string> peers;
    peers.reserve(storage.peer_keys.size());
    for (const auto& [id, keys] : storage.peer_keys) peers.push_back(id);
    return peers;
}

std::vector<std::string> collect_part_peers(const StoragePart& part,
                                            const std::string& owner) {
    std::set<std::string> peers;
    for (const auto& room : part.chatrooms)
        peers.insert(room.participants.begin(), room.participants.end());
    peers.erase(owner);
    return {peers.begin(), peers.end()};
}

uint64_t estimate_overhead(size_t parts, size_t unique_peers) {
    if (parts == 0)
        throw Error(ErrorCode::InvalidInput, "at least one part required");
    // Fixed-size model: per part one sealed blob (580) plus its table entry
    // and share bookkeeping (610), 90 per contacted peer, minus the 180 the
    // monolithic record no longer spends on its own framing.
    return static_cast<uint64_t>(parts) * (580 + 610) +
           static_cast<uint64_t>(unique_peers) * 90 - 180;
}

uint64_t baseline_overhead(size_t chats) {
    // One stored chat-key record per chat in the monolithic layout.
    return static_cast<uint64_t>(chats) * 380;
}

} // namespace partstore
