#include "partstore/protocol.hpp"

#include <algorithm>
#include <array>
#include <initializer_list>
#include <string_view>

#include <json.hpp>

#include "json_text.hpp"
#include "partstore/errors.hpp"

namespace partstore {

namespace {

using nlohmann::json;
using jsontext::append_string;

constexpr char kSchemeTs[] = "TS";
constexpr char kSchemeCtsPart[] = "CTS-part";
constexpr char kStorageSchemeTag[] = "CTS-storage";

// Every message body the protocol sends is a flat JSON object whose values
// are strings or null. A dedicated emitter and parser keep the
// per-delivery hot path out of the general JSON machinery; the emitted
// form (keys sorted, no whitespace) is byte-identical to what the record
// serializer produces, so nothing on the wire changes.

struct BodyField {
    std::string_view key;
    const std::string* value; // nullptr renders as JSON null
};

Bytes dump_flat_body(std::initializer_list<BodyField> fields) {
    // Bodies carry at most a handful of fields; emit them in key order no
    // matter how the caller listed them.
    std::array<const BodyField*, 4> order{};
    size_t n = 0;
    for (const auto& f : fields) {
        if (n == order.size())
            throw Error(ErrorCode::InvalidInput, "message body has too many fields");
        order[n++] = &f;
    }
    for (size_t i = 1; i < n; ++i)
        for (size_t j = i; j > 0 && order[j]->key < order[j - 1]->key; --j)
            std::swap(order[j], order[j - 1]);

    size_t cap = 2;
    for (size_t i = 0; i < n; ++i)
        cap += order[i]->key.size() +
               (order[i]->value ? order[i]->value->size() : 4) + 8;
    std::string out;
    out.reserve(cap);
    out.push_back('{');
    for (size_t i = 0; i < n; ++i) {
        if (i) out.push_back(',');
        append_string(out, order[i]->key);
        out.push_back(':');
        if (order[i]->value)
            append_string(out, *order[i]->value);
        else
            out += "null";
    }
    out.push_back('}');
    return bytes_of(out);
}

class FlatBody {
public:
    explicit FlatBody(const Bytes& raw) {
        fields_.reserve(4);
        const char* p = reinterpret_cast<const char*>(raw.data());
        const char* end = p + raw.size();
        skip_ws(p, end);
        expect(p, end, '{');
        skip_ws(p, end);
        if (p < end && *p == '}') {
            ++p;
        } else {
            while (true) {
                skip_ws(p, end);
                std::string key = parse_string(p, end);
                skip_ws(p, end);
                expect(p, end, ':');
                skip_ws(p, end);
                std::optional<std::string> value;
                if (p < end && *p == '"') {
                    value = parse_string(p, end);
                } else if (end - p >= 4 && std::equal(p, p + 4, "null")) {
                    p += 4;
                } else {
                    fail(); // nested or non-string value: not a protocol body
                }
                fields_.emplace_back(std::move(key), std::move(value));
                skip_ws(p, end);
                if (p >= end) fail();
                if (*p == ',') {
                    ++p;
                    continue;
                }
                if (*p == '}') {
                    ++p;
                    break;
                }
                fail();
            }
        }
        skip_ws(p, end);
        if (p != end) fail();
    }

    // Key must be present; null is surfaced as an empty optional.
    const std::optional<std::string>& at(std::string_view key) const {
        for (const auto& [k, v] : fields_)
            if (k == key) return v;
        fail();
    }

    const std::string& str(std::string_view key) const {
        const auto& v = at(key);
        if (!v) fail();
        return *v;
    }

private:
    [[noreturn]] static void fail() {
        throw Error(ErrorCode::InvalidInput, "malformed message body");
    }

    static void skip_ws(const char*& p, const char* end) {
        while (p < end && (*p == ' ' || *p == '\t' || *p == '\n' || *p == '\r')) ++p;
    }

    static void expect(const char*& p, const char* end, char c) {
        if (p >= end || *p != c) fail();
        ++p;
    }

    static std::string parse_string(const char*& p, const char* end) {
        expect(p, end, '"');
        // Fast path: scan to the closing quote; nothing the protocol emits
        // contains escapes, so this normally covers the whole value.
        const char* start = p;
        while (p < end) {
            unsigned char c = static_cast<unsigned char>(*p);
            if (c == '"') {
                std::string out(start, p);
                ++p;
                return out;
            }
            if (c == '\\' || c < 0x20) break;
            ++p;
        }
        if (p >= end || static_cast<unsigned char>(*p) < 0x20) fail();

        std::string out(start, p); // prefix up to the first escape
        while (true) {
            if (p >= end) fail();
            unsigned char c = *p++;
            if (c == '"') return out;
            if (c == '\\') {
                if (p >= end) fail();
                char esc = *p++;
                switch (esc) {
                    case '"': out.push_back('"'); break;
                    case '\\': out.push_back('\\'); break;
                    case '/': out.push_back('/'); break;
                    case 'b': out.push_back('\b'); break;
                    case 'f': out.push_back('\f'); break;
                    case 'n': out.push_back('\n'); break;
                    case 'r': out.push_back('\r'); break;
                    case 't': out.push_back('\t'); break;
                    case 'u': out += parse_unicode_escape(p, end); break;
                    default: fail();
                }
                continue;
            }
            if (c < 0x20) fail(); // raw control characters are not legal JSON
            out.push_back(static_cast<char>(c));
        }
    }

    static std::string parse_unicode_escape(const char*& p, const char* end) {
        if (end - p < 4) fail();
        unsigned cp = 0;
        for (int i = 0; i < 4; ++i) {
            char c = *p++;
            cp <<= 4;
            if (c >= '0' && c <= '9') cp |= static_cast<unsigned>(c - '0');
            else if (c >= 'a' && c <= 'f') cp |= static_cast<unsigned>(c - 'a' + 10);
            else if (c >= 'A' && c <= 'F') cp |= static_cast<unsigned>(c - 'A' + 10);
            else fail();
        }
        if (cp >= 0xD800 && cp <= 0xDFFF) fail(); // no surrogate pairs in bodies
        std::string out;
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
        return out;
    }

    std::vector<std::pair<std::string, std::optional<std::string>>> fields_;
};

const ServerSessionRecord* find_session(const ServerState& server,
                                        const std::string& rid) {
    auto it = server.sessions.find(rid);
    if (it == server.sessions.end() || !it->second.active) return nullptr;
    return &it->second;
}

std::vector<std::string> peers_of(const ServerUserRecord& record,
                                  const std::string& owner) {
    std::set<std::string> peers;
    for (const auto& [room, members] : record.chat_participants)
        peers.insert(members.begin(), members.end());
    peers.erase(owner);
    return {peers.begin(), peers.end()};
}

SymmetricKey key_from_bytes(const Bytes& raw, const char* what) {
    if (raw.size() != 32)
        throw Error(ErrorCode::ReconstructionCorrupt, what);
    SymmetricKey k;
    std::copy(raw.begin(), raw.end(), k.bytes.begin());
    return k;
}

} // namespace

std::string msg_kind_name(MsgKind kind) {
    switch (kind) {
        case MsgKind::InitializeRecovery: return "InitializeRecovery";
        case MsgKind::RecoveryRequest: return "RecoveryRequest";
        case MsgKind::RecoveryConfirmed: return "RecoveryConfirmed";
        case MsgKind::ShareDelivery: return "ShareDelivery";
        case MsgKind::SystemMessage: return "SystemMessage";
        case MsgKind::RecoveryFinished: return "RecoveryFinished";
    }
    throw Error(ErrorCode::InvalidInput, "unknown message kind");
}

MsgKind msg_kind_from_name(const std::string& name) {
    if (name == "InitializeRecovery") return MsgKind::InitializeRecovery;
    if (name == "RecoveryRequest") return MsgKind::RecoveryRequest;
    if (name == "RecoveryConfirmed") return MsgKind::RecoveryConfirmed;
    if (name == "ShareDelivery") return MsgKind::ShareDelivery;
    if (name == "SystemMessage") return MsgKind::SystemMessage;
    if (name == "RecoveryFinished") return MsgKind::RecoveryFinished;
    throw Error(ErrorCode::InvalidInput, "unknown message kind: " + name);
}

Bytes ProtocolMessage::signing_payload() const {
    std::string name = msg_kind_name(kind);
    Bytes payload;
    payload.reserve(name.size() + rid.size() + body.size());
    append(payload, name);
    append(payload, rid);
    append(payload, body);
    return payload;
}

Bytes ProtocolMessage::wire() const {
    json j;
    j["kind"] = msg_kind_name(kind);
    j["rid"] = rid;
    j["sender"] = sender;
    j["recipient"] = recipient;
    j["body"] = b64_encode(body);
    j["sig"] = b64_encode(sig);
    return bytes_of(j.dump());
}

ProtocolMessage ProtocolMessage::from_wire(const Bytes& raw) {
    json j = json::parse(raw.begin(), raw.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw Error(ErrorCode::InvalidInput, "malformed protocol message");
    try {
        ProtocolMessage msg;
        msg.kind = msg_kind_from_name(j.at("kind").get<std::string>());
        msg.rid = j.at("rid").get<std::string>();
        msg.sender = j.at("sender").get<std::string>();
        msg.recipient = j.at("recipient").get<std::string>();
        msg.body = b64_decode(j.at("body").get<std::string>());
        msg.sig = b64_decode(j.at("sig").get<std::string>());
        return msg;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidInput,
                    std::string("malformed protocol message: ") + e.what());
    }
}

ProtocolMessage make_signed_message(CryptoBackend& crypto, MsgKind kind,
                                    std::string rid, std::string sender,
                                    std::string recipient, Bytes body,
                                    const Bytes& sig_private) {
    ProtocolMessage msg;
    msg.kind = kind;
    msg.rid = std::move(rid);
    msg.sender = std::move(sender);
    msg.recipient = std::move(recipient);
    msg.body = std::move(body);
    msg.sig = crypto.sign(sig_private, msg.signing_payload());
    return msg;
}

bool verify_message(CryptoBackend& crypto, const ProtocolMessage& msg,
                    const Bytes& sig_public) {
    return crypto.verify(sig_public, msg.signing_payload(), msg.sig);
}

std::array<uint8_t, 16> make_scheme_id(CryptoBackend& crypto,
                                       const std::string& owner,
                                       const std::string& kind_tag,
                                       uint64_t epoch) {
    Bytes material = bytes_of(owner);
    material.push_back(0x1F);
    append(material, kind_tag);
    material.push_back(0x1F);
    for (int i = 7; i >= 0; --i)
        material.push_back(static_cast<uint8_t>(epoch >> (8 * i)));
    auto digest = crypto.digest32(material);
    std::array<uint8_t, 16> id{};
    std::copy(digest.begin(), digest.begin() + 16, id.begin());
    return id;
}

Ciphertext wrap_part_key(CryptoBackend& crypto, const SymmetricKey& k_sp,
                         const SymmetricKey& k_cts) {
    return crypto.sym_encrypt(k_cts, k_sp.to_bytes());
}

SymmetricKey unwrap_part_key(CryptoBackend& crypto, const Ciphertext& wrapped,
                             const SymmetricKey& k_cts) {
    return key_from_bytes(crypto.sym_decrypt(k_cts, wrapped),
                          "unwrapped part key has wrong size");
}

namespace {

// Recipient list for one scheme instance. Unique mode: each peer once,
// sorted. Non-unique mode: one slot per (chatroom, peer) occurrence, so a
// peer present in several rooms holds several shares of the same scheme.
std::vector<std::string> share_recipients(const std::vector<Chatroom>& rooms,
                                          const std::string& owner,
                                          bool unique_peers) {
    if (unique_peers) {
        std::set<std::string> peers;
        for (const auto& room : rooms)
            peers.insert(room.participants.begin(), room.participants.end());
        peers.erase(owner);
        return {peers.begin(), peers.end()};
    }
    std::vector<const Chatroom*> ordered;
    ordered.reserve(rooms.size());
    for (const auto& room : rooms) ordered.push_back(&room);
    std::sort(ordered.begin(), ordered.end(),
              [](const Chatroom* a, const Chatroom* b) { return a->id < b->id; });
    std::vector<std::string> slots;
    for (const auto* room : ordered)
        for (const auto& member : room->participants)
            if (member != owner) slots.push_back(member);
    return slots;
}

} // namespace

DistributionResult distribute_shares(CryptoBackend& crypto, Storage& storage,
                                     std::vector<StoragePart> parts,
                                     const SymmetricKey& p_s,
                                     const ThresholdRates& rates,
                                     bool unique_peers, bool ts_enabled,
                                     uint64_t epoch, Xoshiro256pp& rng) {
    if (parts.empty())
        throw Error(ErrorCode::InvalidInput, "nothing to distribute");
    if (parts.size() > 255)
        throw Error(ErrorCode::CapacityExceeded, "at most 255 storage parts");

    std::vector<Chatroom> all_rooms;
    for (const auto& part : parts)
        all_rooms.insert(all_rooms.end(), part.chatrooms.begin(), part.chatrooms.end());

    std::set<std::string> all_peers;
    for (const auto& room : all_rooms)
        for (const auto& member : room.participants)
            if (member != storage.owner) all_peers.insert(member);
    if (all_peers.empty())
        throw Error(ErrorCode::NoPeers, "no peers to hold shares");
    for (const auto& peer : all_peers)
        if (!storage.peer_keys.count(peer))
            throw Error(ErrorCode::MissingPeerKey, "no registered keys for " + peer);

    DistributionResult result;
    result.recovery.k_cts = crypto.random_key();
    result.recovery.k_ts = crypto.random_key();
    result.recovery.s_cts = crypto.sym_encrypt(result.recovery.k_cts, p_s.to_bytes());
    result.recovery.s_ts = crypto.sym_encrypt(result.recovery.k_ts, p_s.to_bytes());

    storage.ts_shares_sent.clear();
    storage.cts_shares_sent.clear();

    const size_t p = parts.size();
    result.storage_quorum = compute_threshold(rates.t_storage, p);

    // Storage level: the CTS-encrypted storage key is split across the
    // parts themselves, one share embedded per part.
    auto storage_scheme = make_scheme_id(crypto, storage.owner, kStorageSchemeTag, epoch);
    auto embedded = split(result.recovery.s_cts.serialize(),
                          ThresholdSpec{result.storage_quorum, p}, rng, storage_scheme);
    for (size_t i = 0; i < p; ++i) parts[i].cts_share = embedded[i];

    auto deliver_split = [&](const Bytes& secret, const std::string& kind_tag,
                             const std::vector<std::string>& recipients,
                             size_t threshold, const char* scheme_name,
                             const std::string* part_id,
                             std::map<std::string, uint32_t>& sent_counter) {
        auto scheme = make_scheme_id(crypto, storage.owner, kind_tag, epoch);
        auto shares = split(secret, ThresholdSpec{threshold, recipients.size()},
                            rng, scheme);
        const std::string scheme_field = scheme_name;
        for (size_t j = 0; j < recipients.size(); ++j) {
            const std::string& peer = recipients[j];
            auto key_it = storage.peer_keys.find(peer);
            if (key_it == storage.peer_keys.end())
                throw Error(ErrorCode::MissingPeerKey, "no registered keys for " + peer);
            std::string blob = b64_encode(
                crypto.asym_encrypt(key_it->second.enc_public, shares[j].serialize()));
            result.deliveries.push_back(make_signed_message(
                crypto, MsgKind::ShareDelivery, "", storage.owner, peer,
                dump_flat_body({{"scheme", &scheme_field},
                                {"partId", part_id},
                                {"blob", &blob}}),
                storage.sig_pair.private_key));
            ++sent_counter[peer];
        }
        return threshold;
    };

    // Part level: each part key is wrapped under the compartment key and
    // the wrapped blob is split among that part's own peers.
    for (const auto& part : parts) {
        auto entry = std::find_if(storage.part_table.begin(), storage.part_table.end(),
                                  [&](const PartTableEntry& e) { return e.part_id == part.id; });
        if (entry == storage.part_table.end())
            throw Error(ErrorCode::InvalidInput, "part missing from part table: " + part.id);
        auto recipients = share_recipients(part.chatrooms, storage.owner, unique_peers);
        if (recipients.empty())
            throw Error(ErrorCode::NoPeers, "part has no peers: " + part.id);
        size_t t_sp = compute_threshold(rates.t_storage_part, recipients.size());
        Ciphertext wrapped = wrap_part_key(crypto, entry->part_key, result.recovery.k_cts);
        result.part_thresholds[part.id] =
            deliver_split(wrapped.serialize(), "CTS:" + part.id, recipients, t_sp,
                          kSchemeCtsPart, &part.id, storage.cts_shares_sent);
    }

    // Flat level: the TS-encrypted storage key goes to every peer in one
    // wide split, the cheap extra that covers sparse part coverage.
    if (ts_enabled) {
        auto recipients = share_recipients(all_rooms, storage.owner, unique_peers);
        size_t t_l = compute_threshold(rates.t_target, recipients.size());
        result.ts_threshold =
            deliver_split(result.recovery.s_ts.serialize(), kSchemeTs, recipients,
                          t_l, kSchemeTs, nullptr, storage.ts_shares_sent);
    }

    storage.last_distribution = epoch;
    result.parts = std::move(parts);
    return result;
}

void register_identity(ServerState& server, const std::string& id,
                       Bytes enc_public, Bytes sig_public) {
    server.directory[id] = PeerKeys{std::move(enc_public), std::move(sig_public)};
}

void register_user_account(ServerState& server, const std::string& user,
                           const SymmetricKey& auth_key, const Salt& salt_s,
                           const Salt& salt_a) {
    auto& record = server.users[user];
    record.auth_key = auth_key;
    record.salt_s = salt_s;
    record.salt_a = salt_a;
}

void server_store_distribution(
    ServerState& server, const std::string& owner,
    const DistributionResult& dist, SealedBlob sealed_storage,
    std::map<std::string, SealedBlob> sealed_parts,
    std::map<std::string, std::vector<std::string>> chat_participants) {
    auto it = server.users.find(owner);
    if (it == server.users.end())
        throw Error(ErrorCode::UnknownUser, "no account for " + owner);
    auto& record = it->second;
    record.recovery = dist.recovery;
    record.sealed_storage = std::move(sealed_storage);
    record.sealed_parts = std::move(sealed_parts);
    record.chat_participants = std::move(chat_participants);
    record.ts_threshold = dist.ts_threshold;
    record.storage_quorum = dist.storage_quorum;
    record.part_thresholds = dist.part_thresholds;
    record.provisioned = true;
}

PeerActor make_peer(CryptoBackend& crypto, ServerState& server, std::string id) {
    PeerActor peer;
    peer.id = std::move(id);
    peer.enc_pair = crypto.gen_enc_keypair();
    peer.sig_pair = crypto.gen_sig_keypair();
    register_identity(server, peer.id, peer.enc_pair.public_key,
                      peer.sig_pair.public_key);
    return peer;
}

void peer_store_distribution(CryptoBackend& crypto, PeerActor& peer,
                             const std::string& owner,
                             const std::vector<ProtocolMessage>& deliveries,
                             const ServerState& server) {
    auto dir_it = server.directory.find(owner);
    if (dir_it == server.directory.end())
        throw Error(ErrorCode::UnknownUser, "unregistered sender " + owner);

    std::vector<HeldShare> fresh;
    for (const auto& msg : deliveries) {
        if (msg.recipient != peer.id || msg.kind != MsgKind::ShareDelivery) continue;
        if (!verify_message(crypto, msg, dir_it->second.sig_public)) {
            peer.audit_log.push_back("dropped share with bad signature from " + msg.sender);
            continue;
        }
        try {
            FlatBody body(msg.body);
            HeldShare held;
            held.scheme = body.str("scheme");
            if (const auto& part_id = body.at("partId"))
                held.part_id = *part_id;
            held.share_bytes = crypto.asym_decrypt(peer.enc_pair.private_key,
                                                   b64_decode(body.str("blob")));
            fresh.push_back(std::move(held));
        } catch (const std::exception&) {
            peer.audit_log.push_back("dropped undecodable share from " + msg.sender);
        }
    }
    peer.held[owner] = std::move(fresh);
}

RecoverySession begin_recovery(CryptoBackend& crypto, ServerState& server,
                               const std::string& user,
                               const Bytes& ownership_proof) {
    auto it = server.users.find(user);
    if (it == server.users.end())
        throw Error(ErrorCode::UnknownUser, "no account for " + user);
    bool accepted = server.ownership_verifier
                        ? server.ownership_verifier(user, ownership_proof)
                        : !ownership_proof.empty();
    if (!accepted)
        throw Error(ErrorCode::OwnershipRejected, "ownership proof rejected");
    if (!it->second.provisioned)
        throw Error(ErrorCode::InvalidState, "no distributed storage for " + user);

    // A fresh attempt supersedes any earlier one; peers acting on the old
    // rid will find it invalidated.
    if (auto old = server.active_session.find(user); old != server.active_session.end())
        server.sessions[old->second].active = false;

    std::string rid = "rid-" + user + "-" + std::to_string(++server.rid_counter);
    RecoverySession session;
    session.rid = rid;
    session.owner = user;
    session.fresh_enc_pair = crypto.gen_enc_keypair();
    session.fresh_sig_pair = crypto.gen_sig_keypair();
    session.salt_s = it->second.salt_s;
    session.salt_a = it->second.salt_a;
    session.recovery = it->second.recovery;
    session.sealed_storage = it->second.sealed_storage;
    session.sealed_parts = it->second.sealed_parts;
    session.ts_threshold = it->second.ts_threshold;
    session.storage_quorum = it->second.storage_quorum;
    session.part_thresholds = it->second.part_thresholds;
    session.peers = peers_of(it->second, user);

    ServerSessionRecord record;
    record.rid = rid;
    record.owner = user;
    record.fresh_enc_public = session.fresh_enc_pair.public_key;
    record.fresh_sig_public = session.fresh_sig_pair.public_key;
    server.sessions[rid] = std::move(record);
    server.active_session[user] = rid;
    return session;
}

Bytes sign_rid(CryptoBackend& crypto, const RecoverySession& session) {
    return crypto.sign(session.fresh_sig_pair.private_key, bytes_of(session.rid));
}

ProtocolMessage confirm_recovery(CryptoBackend& crypto, ServerState& server,
                                 PeerActor& confirmer, const std::string& rid,
                                 const Bytes& user_signed_rid,
                                 size_t required_confirmers) {
    auto it = server.sessions.find(rid);
    if (it == server.sessions.end() || !it->second.active)
        throw Error(ErrorCode::InvalidState, "unknown or invalidated recovery id");
    auto& record = it->second;
    if (!crypto.verify(record.fresh_sig_public, bytes_of(rid), user_signed_rid))
        throw Error(ErrorCode::ConfirmationRejected, "user signature does not verify");
    auto user_it = server.users.find(record.owner);
    auto peers = peers_of(user_it->second, record.owner);
    if (!std::binary_search(peers.begin(), peers.end(), confirmer.id))
        throw Error(ErrorCode::NotAPeer, confirmer.id + " shares no chat with " + record.owner);

    std::string user_sig = b64_encode(user_signed_rid);
    auto msg = make_signed_message(
        crypto, MsgKind::RecoveryConfirmed, rid, confirmer.id, "server",
        dump_flat_body({{"confirmer", &confirmer.id}, {"userSig", &user_sig}}),
        confirmer.sig_pair.private_key);
    record.confirmers.insert(confirmer.id);
    if (record.confirmers.size() >= required_confirmers) record.confirmed = true;
    return msg;
}

void session_poll_confirmation(RecoverySession& session, const ServerState& server) {
    const auto* record = find_session(server, session.rid);
    if (record && record->confirmed && session.status == SessionStatus::AwaitingConfirmation)
        session.status = SessionStatus::Collecting;
}

ProtocolMessage make_recovery_request(CryptoBackend& crypto,
                                      const RecoverySession& session,
                                      const std::string& peer_id) {
    return make_signed_message(crypto, MsgKind::RecoveryRequest, session.rid,
                               session.owner, peer_id, bytes_of("{}"),
                               session.fresh_sig_pair.private_key);
}

std::vector<ProtocolMessage> peer_release_shares(CryptoBackend& crypto,
                                                 PeerActor& peer,
                                                 const ProtocolMessage& request,
                                                 const ServerState& server) {
    const auto* record = find_session(server, request.rid);
    if (!record) {
        peer.audit_log.push_back("ignored request for inactive rid " + request.rid);
        return {};
    }
    if (!verify_message(crypto, request, record->fresh_sig_public)) {
        peer.audit_log.push_back("dropped recovery request with bad signature for " +
                                 request.rid);
        return {};
    }
    if (record->finished || peer.finished_rids.count(request.rid)) return {};
    if (!record->confirmed) {
        // Not confirmed yet: park the request and re-check when a
        // confirmation becomes visible.
        bool already = std::any_of(peer.pending_requests.begin(),
                                   peer.pending_requests.end(),
                                   [&](const ProtocolMessage& m) {
                                       return m.rid == request.rid;
                                   });
        if (!already) peer.pending_requests.push_back(request);
        return {};
    }

    const std::string& owner = record->owner;
    auto held_it = peer.held.find(owner);
    if (held_it == peer.held.end() || held_it->second.empty()) return {};

    std::vector<ProtocolMessage> out;
    for (const auto& held : held_it->second) {
        std::string blob = b64_encode(
            crypto.asym_encrypt(record->fresh_enc_public, held.share_bytes));
        out.push_back(make_signed_message(
            crypto, MsgKind::ShareDelivery, request.rid, peer.id, owner,
            dump_flat_body({{"scheme", &held.scheme},
                            {"partId", held.part_id.empty() ? nullptr : &held.part_id},
                            {"blob", &blob}}),
            peer.sig_pair.private_key));
    }

    // One tamper-evident note per shared chatroom so the release is
    // visible to everyone who could spot an impostor.
    auto rooms_it = peer.rooms_with.find(owner);
    if (rooms_it != peer.rooms_with.end()) {
        for (const auto& room : rooms_it->second) {
            auto key_it = peer.room_keys.find(room);
            if (key_it == peer.room_keys.end()) continue;
            Bytes note = dump_flat_body({{"owner", &owner}, {"rid", &request.rid}});
            std::string ciphertext =
                b64_encode(crypto.sym_encrypt(key_it->second, note).serialize());
            out.push_back(make_signed_message(
                crypto, MsgKind::SystemMessage, request.rid, peer.id, room,
                dump_flat_body({{"ciphertext", &ciphertext}}),
                peer.sig_pair.private_key));
        }
    }
    return out;
}

std::vector<ProtocolMessage> peer_recheck_pending(CryptoBackend& crypto,
                                                  PeerActor& peer,
                                                  const ServerState& server) {
    std::vector<ProtocolMessage> parked;
    parked.swap(peer.pending_requests);
    std::vector<ProtocolMessage> out;
    for (const auto& request : parked) {
        auto released = peer_release_shares(crypto, peer, request, server);
        out.insert(out.end(), released.begin(), released.end());
    }
    return out;
}

void peer_observe_finish(CryptoBackend& crypto, PeerActor& peer,
                         const ProtocolMessage& finish, const ServerState& server) {
    if (finish.kind != MsgKind::RecoveryFinished) return;
    const auto* record = find_session(server, finish.rid);
    if (!record || !verify_message(crypto, finish, record->fresh_sig_public)) {
        peer.audit_log.push_back("dropped unverifiable finish for " + finish.rid);
        return;
    }
    peer.finished_rids.insert(finish.rid);
    std::erase_if(peer.pending_requests, [&](const ProtocolMessage& m) {
        return m.rid == finish.rid;
    });
}

bool ingest_share(CryptoBackend& crypto, RecoverySession& session,
                  const ProtocolMessage& delivery, const ServerState& server) {
    if (session.status == SessionStatus::Finished) return false;
    if (delivery.kind != MsgKind::ShareDelivery || delivery.rid != session.rid)
        return false;
    auto dir_it = server.directory.find(delivery.sender);
    if (dir_it == server.directory.end() ||
        !verify_message(crypto, delivery, dir_it->second.sig_public))
        return false;

    Share share;
    std::string scheme;
    std::string part_id;
    try {
        FlatBody body(delivery.body);
        scheme = body.str("scheme");
        if (const auto& pid = body.at("partId")) part_id = *pid;
        Bytes raw = crypto.asym_decrypt(session.fresh_enc_pair.private_key,
                                        b64_decode(body.str("blob")));
        share = Share::deserialize(raw);
    } catch (const std::exception&) {
        return false;
    }

    auto has_x = [](const std::vector<Share>& bucket, uint8_t x) {
        return std::any_of(bucket.begin(), bucket.end(),
                           [&](const Share& s) { return s.x == x; });
    };

    if (scheme == kSchemeTs) {
        if (has_x(session.ts_shares, share.x)) return false;
        session.ts_shares.push_back(std::move(share));
        try_reconstruct_storage(crypto, session);
        return true;
    }
    if (scheme == kSchemeCtsPart && !part_id.empty()) {
        if (!session.sealed_parts.count(part_id)) {
            // Part id we have no sealed blob for: park it, it may become
            // meaningful after more state is recovered.
            for (const auto& [pid, parked] : session.pending_pool)
                if (pid == part_id && parked.x == share.x) return false;
            session.pending_pool.emplace_back(part_id, std::move(share));
            return true;
        }
        auto& bucket = session.part_shares[part_id];
        if (has_x(bucket, share.x)) return false;
        bucket.push_back(std::move(share));
        try_reconstruct_part(crypto, session, part_id);
        try_reconstruct_storage(crypto, session);
        return true;
    }
    return false;
}

bool try_reconstruct_part(CryptoBackend& crypto, RecoverySession& session,
                          const std::string& part_id) {
    if (session.recovered_parts.count(part_id)) return false;
    auto threshold_it = session.part_thresholds.find(part_id);
    auto blob_it = session.sealed_parts.find(part_id);
    if (threshold_it == session.part_thresholds.end() ||
        blob_it == session.sealed_parts.end())
        return false;
    auto bucket_it = session.part_shares.find(part_id);
    if (bucket_it == session.part_shares.end() ||
        bucket_it->second.size() < threshold_it->second)
        return false;

    StoragePart part;
    try {
        Bytes wrapped_raw = reconstruct(bucket_it->second, threshold_it->second);
        Ciphertext wrapped = Ciphertext::deserialize(wrapped_raw);
        SymmetricKey k_sp = unwrap_part_key(crypto, wrapped, session.recovery.k_cts);
        part = open_part(crypto, blob_it->second, k_sp);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ReconstructionCorrupt) throw;
        throw Error(ErrorCode::ReconstructionCorrupt,
                    "part " + part_id + " rejected: " + e.what());
    }
    session.storage_cts_shares.push_back(part.cts_share);
    session.recovered_parts[part_id] = std::move(part);
    return true;
}

std::optional<SymmetricKey> try_reconstruct_storage(CryptoBackend& crypto,
                                                    RecoverySession& session) {
    if (session.p_s) return session.p_s;

    std::optional<SymmetricKey> via_ts;
    std::optional<SymmetricKey> via_cts;
    try {
        if (session.ts_threshold >= 1 && session.ts_shares.size() >= session.ts_threshold) {
            Bytes raw = reconstruct(session.ts_shares, session.ts_threshold);
            via_ts = key_from_bytes(
                crypto.sym_decrypt(session.recovery.k_ts, Ciphertext::deserialize(raw)),
                "flat-route storage key has wrong size");
        }
        if (session.storage_quorum >= 1 &&
            session.recovered_parts.size() >= session.storage_quorum) {
            Bytes raw = reconstruct(session.storage_cts_shares, session.storage_quorum);
            via_cts = key_from_bytes(
                crypto.sym_decrypt(session.recovery.k_cts, Ciphertext::deserialize(raw)),
                "compartment-route storage key has wrong size");
        }
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ReconstructionCorrupt) throw;
        throw Error(ErrorCode::ReconstructionCorrupt,
                    std::string("storage key reconstruction rejected: ") + e.what());
    }
    if (!via_ts && !via_cts) return std::nullopt;
    if (via_ts && via_cts && !(*via_ts == *via_cts))
        throw Error(ErrorCode::ReconstructionCorrupt,
                    "reconstruction routes disagree on the storage key");

    session.p_s = via_ts ? via_ts : via_cts;
    session.storage = open_storage(crypto, session.sealed_storage, *session.p_s);
    if (session.status != SessionStatus::Finished)
        session.status = SessionStatus::StorageRecovered;
    return session.p_s;
}

ProtocolMessage finish_recovery(CryptoBackend& crypto, RecoverySession& session,
                                ServerState& server) {
    if (session.status != SessionStatus::StorageRecovered)
        throw Error(ErrorCode::InvalidState, "recovery has not reached a recovered storage");
    auto it = server.sessions.find(session.rid);
    if (it != server.sessions.end()) it->second.finished = true;
    session.status = SessionStatus::Finished;
    return make_signed_message(crypto, MsgKind::RecoveryFinished, session.rid,
                               session.owner, "*", bytes_of("{}"),
                               session.fresh_sig_pair.private_key);
}

Bytes server_state_bytes(const ServerState& server) {
    Bytes pool;
    for (const auto& [id, keys] : server.directory) {
        append(pool, id);
        append(pool, keys.enc_public);
        append(pool, keys.sig_public);
    }
    for (const auto& [user, record] : server.users) {
        append(pool, user);
        append(pool, record.auth_key.to_bytes());
        append(pool, record.salt_s.bytes);
        append(pool, record.salt_a.bytes);
        append(pool, record.recovery.k_cts.to_bytes());
        append(pool, record.recovery.k_ts.to_bytes());
        append(pool, record.recovery.s_cts.serialize());
        append(pool, record.recovery.s_ts.serialize());
        if (record.provisioned) append(pool, record.sealed_storage.serialize());
        for (const auto& [part_id, blob] : record.sealed_parts) {
            append(pool, part_id);
            append(pool, blob.serialize());
        }
        for (const auto& [room, members] : record.chat_participants) {
            append(pool, room);
            for (const auto& member : members) append(pool, member);
        }
    }
    for (const auto& [rid, record] : server.sessions) {
        append(pool, rid);
        append(pool, record.owner);
        append(pool, record.fresh_enc_public);
        append(pool, record.fresh_sig_public);
        for (const auto& confirmer : record.confirmers) append(pool, confirmer);
    }
    for (const auto& line : server.audit_log) append(pool, line);
    return pool;
}

} // namespace partstore
