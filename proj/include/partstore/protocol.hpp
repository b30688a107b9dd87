#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "partstore/crypto.hpp"
#include "partstore/secret_sharing.hpp"
#include "partstore/storage.hpp"

namespace partstore {

enum class MsgKind {
    InitializeRecovery,
    RecoveryRequest,
    RecoveryConfirmed,
    ShareDelivery,
    SystemMessage,
    RecoveryFinished,
};

std::string msg_kind_name(MsgKind kind);
MsgKind msg_kind_from_name(const std::string& name);

// Every protocol message is signed by its sender over kind ‖ rid ‖ body so
// recipients can pin it to a registered verification key.
struct ProtocolMessage {
    MsgKind kind = MsgKind::SystemMessage;
    std::string rid;       // recovery id, empty outside recovery sessions
    std::string sender;
    std::string recipient; // peer id, user id, or chatroom id
    Bytes body;            // kind-specific JSON payload
    Bytes sig;

    Bytes signing_payload() const;
    Bytes wire() const; // UTF-8 JSON, sorted keys, base64 body and sig
    static ProtocolMessage from_wire(const Bytes& raw);
};

ProtocolMessage make_signed_message(CryptoBackend& crypto, MsgKind kind,
                                    std::string rid, std::string sender,
                                    std::string recipient, Bytes body,
                                    const Bytes& sig_private);
bool verify_message(CryptoBackend& crypto, const ProtocolMessage& msg,
                    const Bytes& sig_public);

// Binds a share to one (owner, scheme kind, distribution epoch) triple so
// shares from different distributions never interpolate together.
std::array<uint8_t, 16> make_scheme_id(CryptoBackend& crypto,
                                       const std::string& owner,
                                       const std::string& kind_tag,
                                       uint64_t epoch);

// The part key never travels in the clear: it is sealed under the
// server-held compartment key and the sealed blob is what gets split to
// the part's peers.
Ciphertext wrap_part_key(CryptoBackend& crypto, const SymmetricKey& k_sp,
                         const SymmetricKey& k_cts);
SymmetricKey unwrap_part_key(CryptoBackend& crypto, const Ciphertext& wrapped,
                             const SymmetricKey& k_cts);

// Output of one distribution run: server-bound recovery material, one
// encrypted-and-signed delivery per (peer, share), the parts with their
// embedded compartment shares filled in, and the thresholds the server
// publishes for the eventual recovery session.
struct DistributionResult {
    RecoveryKeys recovery;
    std::vector<ProtocolMessage> deliveries;
    std::vector<StoragePart> parts;
    size_t ts_threshold = 0; // 0 means the flat scheme was not distributed
    size_t storage_quorum = 0;
    std::map<std::string, size_t> part_thresholds;
};

// Runs one full share distribution for the owner of `storage`. With
// unique_peers, every peer holds at most one share per scheme; without it,
// a peer receives one share per chatroom it shares with the owner, which
// weights reliable heavy contacts. With ts_enabled=false only the
// compartmented scheme is distributed. Updates the storage's bookkeeping
// and last_distribution (= epoch).
DistributionResult distribute_shares(CryptoBackend& crypto, Storage& storage,
                                     std::vector<StoragePart> parts,
                                     const SymmetricKey& p_s,
                                     const ThresholdRates& rates,
                                     bool unique_peers, bool ts_enabled,
                                     uint64_t epoch, Xoshiro256pp& rng);

struct ServerUserRecord {
    SymmetricKey auth_key; // P_A, usable for login checks only
    Salt salt_s;
    Salt salt_a;
    RecoveryKeys recovery;
    SealedBlob sealed_storage;
    std::map<std::string, SealedBlob> sealed_parts;
    std::map<std::string, std::vector<std::string>> chat_participants;
    size_t ts_threshold = 0;
    size_t storage_quorum = 0;
    std::map<std::string, size_t> part_thresholds;
    bool provisioned = false;
};

struct ServerSessionRecord {
    std::string rid;
    std::string owner;
    Bytes fresh_enc_public;
    Bytes fresh_sig_public;
    std::set<std::string> confirmers;
    bool confirmed = false;
    bool finished = false;
    bool active = true;
};

// The service provider's entire view. Holds only public keys, salts,
// sealed blobs, the two recovery keys, and plaintext participant lists;
// the blindness checks scan exactly this state.
struct ServerState {
    std::map<std::string, PeerKeys> directory; // registered e_i, v_i per actor
    std::map<std::string, ServerUserRecord> users;
    std::map<std::string, ServerSessionRecord> sessions;
    std::map<std::string, std::string> active_session; // owner -> rid
    std::vector<std::string> audit_log;
    uint64_t rid_counter = 0;
    // Stand-in for the out-of-band ownership check (e-mail link etc.).
    std::function<bool(const std::string&, const Bytes&)> ownership_verifier;
};

void register_identity(ServerState& server, const std::string& id,
                       Bytes enc_public, Bytes sig_public);
void register_user_account(ServerState& server, const std::string& user,
                           const SymmetricKey& auth_key, const Salt& salt_s,
                           const Salt& salt_a);
void server_store_distribution(
    ServerState& server, const std::string& owner,
    const DistributionResult& dist, SealedBlob sealed_storage,
    std::map<std::string, SealedBlob> sealed_parts,
    std::map<std::string, std::vector<std::string>> chat_participants);

// Everything a peer remembers about one share it safekeeps.
struct HeldShare {
    std::string scheme; // "TS" or "CTS-part"
    std::string part_id;
    Bytes share_bytes;
};

// One contact of the user: holds shares inside its own storage, knows the
// chat keys of its rooms, and follows the confirm-then-release discipline.
struct PeerActor {
    std::string id;
    EncKeyPair enc_pair;
    SigKeyPair sig_pair;
    std::map<std::string, std::vector<HeldShare>> held; // by owner
    std::map<std::string, SymmetricKey> room_keys;      // latest k_c per room
    std::map<std::string, std::vector<std::string>> rooms_with; // owner -> room ids
    std::set<std::string> finished_rids;
    std::vector<ProtocolMessage> pending_requests; // awaiting a confirmation
    std::vector<std::string> audit_log;
};

PeerActor make_peer(CryptoBackend& crypto, ServerState& server, std::string id);

// Replaces the peer's holdings for this owner with a freshly delivered
// batch; a new distribution epoch supersedes older shares wholesale.
void peer_store_distribution(CryptoBackend& crypto, PeerActor& peer,
                             const std::string& owner,
                             const std::vector<ProtocolMessage>& deliveries,
                             const ServerState& server);

enum class SessionStatus { AwaitingConfirmation, Collecting, StorageRecovered, Finished };

// User-side state of one recovery attempt, from the server handshake to
// the reopened storage.
struct RecoverySession {
    std::string rid;
    std::string owner;
    EncKeyPair fresh_enc_pair;
    SigKeyPair fresh_sig_pair;
    Salt salt_s;
    Salt salt_a;
    RecoveryKeys recovery;
    SealedBlob sealed_storage;
    std::map<std::string, SealedBlob> sealed_parts;
    size_t ts_threshold = 0;
    size_t storage_quorum = 0;
    std::map<std::string, size_t> part_thresholds;
    std::vector<std::string> peers;
    std::vector<Share> ts_shares;
    std::map<std::string, std::vector<Share>> part_shares;
    std::vector<std::pair<std::string, Share>> pending_pool; // unknown part ids
    std::map<std::string, StoragePart> recovered_parts;
    std::vector<Share> storage_cts_shares; // embedded shares of recovered parts
    SessionStatus status = SessionStatus::AwaitingConfirmation;
    std::optional<SymmetricKey> p_s;
    std::optional<Storage> storage;
};

// Server half of session setup: verifies the ownership proof, invalidates
// any previous session for the user, hands out salts, peers, recovery
// keys, sealed blobs, and thresholds under a fresh rid. The user half
// generates fresh key pairs and registers their public halves.
RecoverySession begin_recovery(CryptoBackend& crypto, ServerState& server,
                               const std::string& user,
                               const Bytes& ownership_proof);

Bytes sign_rid(CryptoBackend& crypto, const RecoverySession& session);

// Peer countersigns the user's signed rid after the out-of-band identity
// check; the server publishes the confirmation and flips the session to
// confirmed once enough distinct peers signed.
ProtocolMessage confirm_recovery(CryptoBackend& crypto, ServerState& server,
                                 PeerActor& confirmer, const std::string& rid,
                                 const Bytes& user_signed_rid,
                                 size_t required_confirmers = 1);

// Moves the session to Collecting once the server shows a confirmation.
void session_poll_confirmation(RecoverySession& session, const ServerState& server);

ProtocolMessage make_recovery_request(CryptoBackend& crypto,
                                      const RecoverySession& session,
                                      const std::string& peer_id);

// The gated step: nothing is released unless the server shows a
// RecoveryConfirmed for this rid and no RecoveryFinished has been seen.
// On release, every held share is re-encrypted to the owner's fresh key
// and each shared chatroom gets one encrypted audit note.
std::vector<ProtocolMessage> peer_release_shares(CryptoBackend& crypto,
                                                 PeerActor& peer,
                                                 const ProtocolMessage& request,
                                                 const ServerState& server);

// Re-runs requests that were parked while unconfirmed. A real deployment
// would poll on a timer; here the re-check is event-driven.
std::vector<ProtocolMessage> peer_recheck_pending(CryptoBackend& crypto,
                                                  PeerActor& peer,
                                                  const ServerState& server);

void peer_observe_finish(CryptoBackend& crypto, PeerActor& peer,
                         const ProtocolMessage& finish, const ServerState& server);

// Verifies, decrypts, and files one delivered share, then opportunistically
// attempts part and storage reconstruction. Returns false for rejected or
// duplicate deliveries.
bool ingest_share(CryptoBackend& crypto, RecoverySession& session,
                  const ProtocolMessage& delivery, const ServerState& server);

// Once a part's share bucket reaches its threshold: rebuild the wrapped
// part key, unwrap it with the compartment key, open the sealed part.
bool try_reconstruct_part(CryptoBackend& crypto, RecoverySession& session,
                          const std::string& part_id);

// Route A: enough flat shares rebuild the TS-encrypted storage key. Route
// B: enough recovered parts rebuild the CTS-encrypted one. Both routes
// must agree when both fire; either opens the sealed storage.
std::optional<SymmetricKey> try_reconstruct_storage(CryptoBackend& crypto,
                                                    RecoverySession& session);

// Broadcast that stops further releases for this rid. Callers follow up
// with a fresh distribution under a new password.
ProtocolMessage finish_recovery(CryptoBackend& crypto, RecoverySession& session,
                                ServerState& server);

// Flattens everything the server persists into one byte pool so tests can
// scan it for secrets that must never appear there in plaintext.
Bytes server_state_bytes(const ServerState& server);

} // namespace partstore
