#include <doctest.h>

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "partstore/errors.hpp"
#include "partstore/protocol.hpp"
#include "partstore/simulation.hpp"

using namespace partstore;

namespace {

// Fixed small world: user u, five peers, three chats of growing size.
// Non-owner headcounts are 3 + 4 + 5 = 12 across chats, 5 unique peers.
Population small_population() {
    Population pop;
    pop.user = "u";
    pop.peer_ids = {"p1", "p2", "p3", "p4", "p5"};
    pop.chats = {{"c1", {"p1", "p2", "p3", "u"}},
                 {"c2", {"p1", "p2", "p3", "p4", "u"}},
                 {"c3", {"p1", "p2", "p3", "p4", "p5", "u"}}};
    return pop;
}

Deployment deploy_small(CryptoBackend& crypto, size_t parts, bool unique_peers,
                        bool ts_enabled, uint64_t rng_seed = 77,
                        double t_target = 0.7) {
    Xoshiro256pp rng(rng_seed);
    return deploy_population(crypto, small_population(), parts, parts, t_target,
                             unique_peers, ts_enabled, /*epoch=*/1, rng,
                             bytes_of("secret password"));
}

size_t count_deliveries(const DistributionResult& dist, const std::string& scheme) {
    size_t n = 0;
    for (const auto& msg : dist.deliveries) {
        if (msg.kind != MsgKind::ShareDelivery) continue;
        auto body = nlohmann::json::parse(string_of(msg.body));
        if (body.at("scheme").get<std::string>() == scheme) ++n;
    }
    return n;
}

// Drives a whole recovery: confirm via the first peer, then ask everyone.
RecoverySession recover_fully(CryptoBackend& crypto, Deployment& world) {
    RecoverySession session =
        begin_recovery(crypto, world.server, "u", bytes_of("proof"));
    confirm_recovery(crypto, world.server, world.peers.at(session.peers.front()),
                     session.rid, sign_rid(crypto, session));
    session_poll_confirmation(session, world.server);
    for (const auto& peer_id : session.peers) {
        auto released = peer_release_shares(crypto, world.peers.at(peer_id),
                                            make_recovery_request(crypto, session, peer_id),
                                            world.server);
        for (const auto& msg : released)
            if (msg.kind == MsgKind::ShareDelivery && msg.recipient == "u")
                ingest_share(crypto, session, msg, world.server);
        if (session.p_s) break;
    }
    return session;
}

} // namespace

TEST_CASE("protocol messages survive the wire and pin their signer") {
    auto crypto = make_test_backend(20);
    SigKeyPair signer = crypto->gen_sig_keypair();
    ProtocolMessage msg =
        make_signed_message(*crypto, MsgKind::RecoveryRequest, "rid-u-1", "u", "p1",
                            bytes_of("{\"a\":1}"), signer.private_key);
    CHECK(verify_message(*crypto, msg, signer.public_key));

    ProtocolMessage parsed = ProtocolMessage::from_wire(msg.wire());
    CHECK(parsed.kind == msg.kind);
    CHECK(parsed.rid == msg.rid);
    CHECK(parsed.sender == msg.sender);
    CHECK(parsed.recipient == msg.recipient);
    CHECK(parsed.body == msg.body);
    CHECK(parsed.sig == msg.sig);
    CHECK(verify_message(*crypto, parsed, signer.public_key));

    // The signature covers kind, rid, and body; any change must break it.
    ProtocolMessage tampered = msg;
    tampered.body = bytes_of("{\"a\":2}");
    CHECK_FALSE(verify_message(*crypto, tampered, signer.public_key));
    tampered = msg;
    tampered.rid = "rid-u-2";
    CHECK_FALSE(verify_message(*crypto, tampered, signer.public_key));
    tampered = msg;
    tampered.kind = MsgKind::RecoveryFinished;
    CHECK_FALSE(verify_message(*crypto, tampered, signer.public_key));

    CHECK_THROWS_AS(ProtocolMessage::from_wire(bytes_of("gibberish")), Error);
    for (auto kind : {MsgKind::InitializeRecovery, MsgKind::RecoveryRequest,
                      MsgKind::RecoveryConfirmed, MsgKind::ShareDelivery,
                      MsgKind::SystemMessage, MsgKind::RecoveryFinished})
        CHECK(msg_kind_from_name(msg_kind_name(kind)) == kind);
}

TEST_CASE("scheme ids separate owner, scheme kind, and epoch") {
    auto crypto = make_test_backend(21);
    auto base = make_scheme_id(*crypto, "u", "TS", 1);
    CHECK(base == make_scheme_id(*crypto, "u", "TS", 1));
    CHECK(base != make_scheme_id(*crypto, "v", "TS", 1));
    CHECK(base != make_scheme_id(*crypto, "u", "CTS-storage", 1));
    CHECK(base != make_scheme_id(*crypto, "u", "TS", 2));
    // Separator discipline: composite inputs must not collide.
    CHECK(make_scheme_id(*crypto, "ab", "c", 1) != make_scheme_id(*crypto, "a", "bc", 1));
}

TEST_CASE("part keys unwrap only under the compartment key") {
    auto crypto = make_test_backend(22);
    SymmetricKey k_sp = crypto->random_key();
    SymmetricKey k_cts = crypto->random_key();
    SymmetricKey k_ts = crypto->random_key();

    Ciphertext wrapped = wrap_part_key(*crypto, k_sp, k_cts);
    CHECK(unwrap_part_key(*crypto, wrapped, k_cts) == k_sp);
    CHECK_THROWS_AS(unwrap_part_key(*crypto, wrapped, k_ts), Error);
    CHECK_FALSE(contains_bytes(wrapped.serialize(), k_sp.to_bytes()));
}

TEST_CASE("distribution share counts follow the placement mode") {
    auto crypto = make_test_backend(23);

    // Per-chat placement: one flat share per (chat, member) slot, 3+4+5.
    Deployment per_chat = deploy_small(*crypto, 1, /*unique_peers=*/false, true);
    CHECK(count_deliveries(per_chat.dist, "TS") == 12);
    CHECK(per_chat.storage.ts_shares_sent.at("p1") == 3);
    CHECK(per_chat.storage.ts_shares_sent.at("p4") == 2);
    CHECK(per_chat.storage.ts_shares_sent.at("p5") == 1);
    CHECK(per_chat.dist.ts_threshold == compute_threshold(0.7, 12));

    // Unique placement: one flat share per distinct peer.
    Deployment unique = deploy_small(*crypto, 1, /*unique_peers=*/true, true);
    CHECK(count_deliveries(unique.dist, "TS") == 5);
    for (const auto& [peer, n] : unique.storage.ts_shares_sent) CHECK(n == 1);
    CHECK(unique.dist.ts_threshold == compute_threshold(0.7, 5));

    // Compartment shares go to each part's own chat members.
    CHECK(count_deliveries(unique.dist, "CTS-part") == 5);
    CHECK(unique.dist.storage_quorum == 1);
    REQUIRE(unique.dist.parts.size() == 1);
    CHECK(unique.dist.part_thresholds.at(unique.dist.parts[0].id) ==
          compute_threshold(0.7, 5));

    // Flat scheme off: no TS deliveries, threshold reported as absent.
    Deployment cts_only = deploy_small(*crypto, 2, true, /*ts_enabled=*/false);
    CHECK(count_deliveries(cts_only.dist, "TS") == 0);
    CHECK(cts_only.dist.ts_threshold == 0);
    CHECK(cts_only.storage.ts_shares_sent.empty());
}

TEST_CASE("peers withhold shares until the server shows a confirmation") {
    auto crypto = make_test_backend(24);
    Deployment world = deploy_small(*crypto, 2, true, true);

    RecoverySession session =
        begin_recovery(*crypto, world.server, "u", bytes_of("proof"));
    CHECK(session.status == SessionStatus::AwaitingConfirmation);
    CHECK(session.peers == std::vector<std::string>{"p1", "p2", "p3", "p4", "p5"});

    // Unconfirmed request: parked, nothing released, no duplicates parked.
    auto request = make_recovery_request(*crypto, session, "p1");
    CHECK(peer_release_shares(*crypto, world.peers.at("p1"), request, world.server).empty());
    CHECK(peer_release_shares(*crypto, world.peers.at("p1"), request, world.server).empty());
    CHECK(world.peers.at("p1").pending_requests.size() == 1);

    // A forged request signed by somebody else's key is dropped, not parked.
    SigKeyPair rogue = crypto->gen_sig_keypair();
    ProtocolMessage forged =
        make_signed_message(*crypto, MsgKind::RecoveryRequest, session.rid, "u",
                            "p2", request.body, rogue.private_key);
    CHECK(peer_release_shares(*crypto, world.peers.at("p2"), forged, world.server).empty());
    CHECK(world.peers.at("p2").pending_requests.empty());

    auto confirmation =
        confirm_recovery(*crypto, world.server, world.peers.at("p2"), session.rid,
                         sign_rid(*crypto, session));
    CHECK(confirmation.kind == MsgKind::RecoveryConfirmed);
    session_poll_confirmation(session, world.server);
    CHECK(session.status == SessionStatus::Collecting);

    // The parked request now yields deliveries plus chat audit notes.
    auto released = peer_recheck_pending(*crypto, world.peers.at("p1"), world.server);
    size_t deliveries = 0, notes = 0;
    for (const auto& msg : released) {
        if (msg.kind == MsgKind::ShareDelivery) ++deliveries;
        if (msg.kind == MsgKind::SystemMessage) ++notes;
    }
    CHECK(deliveries == world.peers.at("p1").held.at("u").size());
    CHECK(notes == world.peers.at("p1").rooms_with.at("u").size());
    CHECK(notes == 3); // p1 shares all three chats with u
    CHECK(world.peers.at("p1").pending_requests.empty());
}

TEST_CASE("confirmation scrutinizes rid, signature, and peer membership") {
    auto crypto = make_test_backend(25);
    Deployment world = deploy_small(*crypto, 2, true, true);
    RecoverySession session =
        begin_recovery(*crypto, world.server, "u", bytes_of("proof"));

    CHECK_THROWS_AS(confirm_recovery(*crypto, world.server, world.peers.at("p1"),
                                     "rid-nonexistent", sign_rid(*crypto, session)),
                    Error);
    CHECK_THROWS_AS(confirm_recovery(*crypto, world.server, world.peers.at("p1"),
                                     session.rid, bytes_of("not a signature")),
                    Error);

    PeerActor stranger = make_peer(*crypto, world.server, "mallory");
    CHECK_THROWS_AS(confirm_recovery(*crypto, world.server, stranger, session.rid,
                                     sign_rid(*crypto, session)),
                    Error);
}

TEST_CASE("multi-confirmer policy needs distinct confirmers") {
    auto crypto = make_test_backend(26);
    Deployment world = deploy_small(*crypto, 2, true, true);
    RecoverySession session =
        begin_recovery(*crypto, world.server, "u", bytes_of("proof"));
    Bytes signed_rid = sign_rid(*crypto, session);

    confirm_recovery(*crypto, world.server, world.peers.at("p1"), session.rid,
                     signed_rid, /*required_confirmers=*/2);
    session_poll_confirmation(session, world.server);
    CHECK(session.status == SessionStatus::AwaitingConfirmation);

    // The same peer confirming again does not move the count.
    confirm_recovery(*crypto, world.server, world.peers.at("p1"), session.rid,
                     signed_rid, 2);
    session_poll_confirmation(session, world.server);
    CHECK(session.status == SessionStatus::AwaitingConfirmation);

    confirm_recovery(*crypto, world.server, world.peers.at("p3"), session.rid,
                     signed_rid, 2);
    session_poll_confirmation(session, world.server);
    CHECK(session.status == SessionStatus::Collecting);
}

TEST_CASE("a full recovery rebuilds the exact storage record") {
    auto crypto = make_test_backend(27);
    Deployment world = deploy_small(*crypto, 2, true, true);
    RecoverySession session = recover_fully(*crypto, world);

    REQUIRE(session.p_s.has_value());
    CHECK(*session.p_s == world.p_s);
    REQUIRE(session.storage.has_value());
    CHECK(*session.storage == world.storage);
    CHECK(session.status == SessionStatus::StorageRecovered);

    // Both routes were live here; their keys agreed (a disagreement throws).
    CHECK(session.ts_shares.size() >= session.ts_threshold);
    CHECK(session.recovered_parts.size() == 2);
}

TEST_CASE("the compartment route alone recovers storage when flat is off") {
    auto crypto = make_test_backend(28);
    Deployment world = deploy_small(*crypto, 2, true, /*ts_enabled=*/false);
    RecoverySession session = recover_fully(*crypto, world);
    CHECK(session.ts_shares.empty());
    REQUIRE(session.p_s.has_value());
    CHECK(*session.storage == world.storage);
}

TEST_CASE("ingest rejects spoofed, stale, or duplicate deliveries") {
    auto crypto = make_test_backend(29);
    Deployment world = deploy_small(*crypto, 2, true, true);
    RecoverySession session =
        begin_recovery(*crypto, world.server, "u", bytes_of("proof"));
    confirm_recovery(*crypto, world.server, world.peers.at("p1"), session.rid,
                     sign_rid(*crypto, session));
    session_poll_confirmation(session, world.server);

    auto released = peer_release_shares(*crypto, world.peers.at("p2"),
                                        make_recovery_request(*crypto, session, "p2"),
                                        world.server);
    std::vector<ProtocolMessage> deliveries;
    for (const auto& msg : released)
        if (msg.kind == MsgKind::ShareDelivery) deliveries.push_back(msg);
    REQUIRE(deliveries.size() >= 2);

    CHECK(ingest_share(*crypto, session, deliveries[0], world.server));
    CHECK_FALSE(ingest_share(*crypto, session, deliveries[0], world.server)); // dup

    ProtocolMessage wrong_rid = deliveries[1];
    wrong_rid.rid = "rid-u-999";
    CHECK_FALSE(ingest_share(*crypto, session, wrong_rid, world.server));

    ProtocolMessage wrong_sender = deliveries[1];
    wrong_sender.sender = "nobody";
    CHECK_FALSE(ingest_share(*crypto, session, wrong_sender, world.server));

    ProtocolMessage tampered = deliveries[1];
    tampered.body[tampered.body.size() / 2] ^= 0x01;
    CHECK_FALSE(ingest_share(*crypto, session, tampered, world.server));

    ProtocolMessage wrong_kind = deliveries[1];
    wrong_kind.kind = MsgKind::SystemMessage;
    CHECK_FALSE(ingest_share(*crypto, session, wrong_kind, world.server));

    CHECK(ingest_share(*crypto, session, deliveries[1], world.server));
}

TEST_CASE("shares for an unknown part wait in the pending pool") {
    auto crypto = make_test_backend(30);
    Deployment world = deploy_small(*crypto, 2, true, true);
    RecoverySession session =
        begin_recovery(*crypto, world.server, "u", bytes_of("proof"));
    confirm_recovery(*crypto, world.server, world.peers.at("p1"), session.rid,
                     sign_rid(*crypto, session));
    session_poll_confirmation(session, world.server);

    // Craft a valid-looking delivery for a part id this session never saw.
    Share orphan;
    orphan.scheme_id = make_scheme_id(*crypto, "u", "CTS:spX", 1);
    orphan.x = 1;
    orphan.payload = crypto->random_bytes(48);
    nlohmann::json body;
    body["scheme"] = "CTS-part";
    body["partId"] = "spX";
    body["blob"] = b64_encode(
        crypto->asym_encrypt(session.fresh_enc_pair.public_key, orphan.serialize()));
    ProtocolMessage msg = make_signed_message(
        *crypto, MsgKind::ShareDelivery, session.rid, "p1", "u",
        bytes_of(nlohmann::json(body).dump()), world.peers.at("p1").sig_pair.private_key);

    CHECK(ingest_share(*crypto, session, msg, world.server));
    CHECK(session.pending_pool.size() == 1);
    CHECK_FALSE(ingest_share(*crypto, session, msg, world.server)); // pool dedups
    CHECK(session.pending_pool.size() == 1);
    CHECK(session.part_shares.count("spX") == 0);
}

TEST_CASE("finish stops releases and peers remember the rid") {
    auto crypto = make_test_backend(31);
    Deployment world = deploy_small(*crypto, 2, true, true);
    RecoverySession session = recover_fully(*crypto, world);
    REQUIRE(session.p_s.has_value());

    ProtocolMessage finish = finish_recovery(*crypto, session, world.server);
    CHECK(finish.kind == MsgKind::RecoveryFinished);
    CHECK(session.status == SessionStatus::Finished);
    CHECK_THROWS_AS(finish_recovery(*crypto, session, world.server), Error);

    // A peer that never released now refuses: the server shows finished.
    auto late = peer_release_shares(*crypto, world.peers.at("p5"),
                                    make_recovery_request(*crypto, session, "p5"),
                                    world.server);
    CHECK(late.empty());

    // Observing the broadcast pins the rid peer-side too.
    peer_observe_finish(*crypto, world.peers.at("p4"), finish, world.server);
    CHECK(world.peers.at("p4").finished_rids.count(session.rid) == 1);
}

TEST_CASE("re-initiating invalidates the previous session") {
    auto crypto = make_test_backend(32);
    Deployment world = deploy_small(*crypto, 2, true, true);

    RecoverySession first = begin_recovery(*crypto, world.server, "u", bytes_of("proof"));
    RecoverySession second = begin_recovery(*crypto, world.server, "u", bytes_of("proof"));
    CHECK(first.rid != second.rid);

    CHECK_THROWS_AS(confirm_recovery(*crypto, world.server, world.peers.at("p1"),
                                     first.rid, sign_rid(*crypto, first)),
                    Error);
    auto stale = peer_release_shares(*crypto, world.peers.at("p1"),
                                     make_recovery_request(*crypto, first, "p1"),
                                     world.server);
    CHECK(stale.empty());
}

TEST_CASE("begin_recovery validates user, proof, and provisioning") {
    auto crypto = make_test_backend(33);
    Deployment world = deploy_small(*crypto, 2, true, true);
    CHECK_THROWS_AS(begin_recovery(*crypto, world.server, "ghost", bytes_of("proof")),
                    Error);
    CHECK_THROWS_AS(begin_recovery(*crypto, world.server, "u", Bytes{}), Error);

    world.server.ownership_verifier = [](const std::string&, const Bytes& proof) {
        return proof == bytes_of("the one true proof");
    };
    CHECK_THROWS_AS(begin_recovery(*crypto, world.server, "u", bytes_of("wrong")),
                    Error);
    CHECK(begin_recovery(*crypto, world.server, "u", bytes_of("the one true proof"))
              .rid.size() > 0);
}

TEST_CASE("server persistence never contains user secrets in the clear") {
    auto crypto = make_test_backend(34);
    Deployment world = deploy_small(*crypto, 2, true, true);

    // Exercise a full session so session state is persisted too.
    RecoverySession session = recover_fully(*crypto, world);
    finish_recovery(*crypto, session, world.server);

    Bytes pool = server_state_bytes(world.server);
    CHECK(contains_bytes(pool, Bytes(world.sealed_storage.serialize())));

    CHECK_FALSE(contains_bytes(pool, world.password));
    CHECK_FALSE(contains_bytes(pool, world.p_s.to_bytes()));
    CHECK_FALSE(contains_bytes(pool, world.storage.enc_pair.private_key));
    CHECK_FALSE(contains_bytes(pool, world.storage.sig_pair.private_key));
    for (const auto& entry : world.storage.part_table)
        CHECK_FALSE(contains_bytes(pool, entry.part_key.to_bytes()));
    for (const auto& chat : world.rooms)
        for (const auto& key : chat.key_history)
            CHECK_FALSE(contains_bytes(pool, key.to_bytes()));
    // The canonical plaintext of the storage record must not leak either.
    CHECK_FALSE(contains_bytes(pool, canonical_storage_bytes(world.storage)));
}

TEST_CASE("colluding peers cannot open anything without the server keys") {
    auto crypto = make_test_backend(35);
    Deployment world = deploy_small(*crypto, 2, true, true);

    // Every peer pools every held share: thresholds are trivially met.
    std::vector<Share> ts_shares;
    std::map<std::string, std::vector<Share>> part_shares;
    for (const auto& [id, peer] : world.peers) {
        auto it = peer.held.find("u");
        if (it == peer.held.end()) continue;
        for (const auto& held : it->second) {
            Share share = Share::deserialize(held.share_bytes);
            if (held.scheme == "TS")
                ts_shares.push_back(share);
            else
                part_shares[held.part_id].push_back(share);
        }
    }
    REQUIRE(ts_shares.size() >= world.dist.ts_threshold);

    // Reconstruction succeeds but yields only ciphertext under k_ts.
    Bytes s_ts_raw = reconstruct(ts_shares, world.dist.ts_threshold);
    Ciphertext s_ts = Ciphertext::deserialize(s_ts_raw);
    CHECK_FALSE(contains_bytes(s_ts_raw, world.p_s.to_bytes()));
    SymmetricKey guess;
    std::copy_n(s_ts.body.begin(), 32, guess.bytes.begin());
    CHECK_THROWS_AS(open_storage(*crypto, world.sealed_storage, guess), Error);
    CHECK(crypto->sym_decrypt(world.dist.recovery.k_ts, s_ts) ==
          world.p_s.to_bytes()); // only the server-held key opens it

    // Same story per part: the wrapped part key needs k_cts.
    for (auto& [part_id, shares] : part_shares) {
        Bytes wrapped_raw = reconstruct(shares, world.dist.part_thresholds.at(part_id));
        Ciphertext wrapped = Ciphertext::deserialize(wrapped_raw);
        CHECK_THROWS_AS(unwrap_part_key(*crypto, wrapped, guess), Error);
        for (const auto& entry : world.storage.part_table)
            CHECK_FALSE(contains_bytes(wrapped_raw, entry.part_key.to_bytes()));
    }
}

TEST_CASE("redistribution supersedes old shares wholesale") {
    auto crypto = make_test_backend(36);
    Deployment world = deploy_small(*crypto, 2, true, true);
    auto old_scheme_id = world.dist.parts[0].cts_share.scheme_id;
    size_t old_count = world.peers.at("p1").held.at("u").size();

    Xoshiro256pp rng(123);
    redistribute(*crypto, world, 0.7, 2, true, true, /*epoch=*/2, rng,
                 bytes_of("fresh password"));
    CHECK(world.storage.last_distribution == 2);
    CHECK(world.dist.parts[0].cts_share.scheme_id != old_scheme_id);

    // Old shares are gone peer-side: same holder count, all new scheme ids.
    const auto& held = world.peers.at("p1").held.at("u");
    CHECK(held.size() == old_count);
    for (const auto& h : held)
        CHECK(Share::deserialize(h.share_bytes).scheme_id != old_scheme_id);

    // The refreshed world recovers under the new password-derived key.
    RecoverySession session = recover_fully(*crypto, world);
    REQUIRE(session.p_s.has_value());
    CHECK(*session.storage == world.storage);
}
