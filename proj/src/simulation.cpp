#include "partstore/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

#include "partstore/errors.hpp"

namespace partstore {

namespace {

std::string indexed_id(const char* prefix, size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%03zu", prefix, i);
    return buf;
}

void validate_population(const PopulationSpec& spec) {
    double sum = std::accumulate(spec.size_weights.begin(), spec.size_weights.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-9)
        throw Error(ErrorCode::InvalidInput, "chat size weights must sum to 1");
    if (spec.inactive_rate < 0.0 || spec.inactive_rate >= 1.0)
        throw Error(ErrorCode::InvalidRate, "inactive rate must be in [0,1)");
    if (spec.peer_pool == 0)
        throw Error(ErrorCode::InvalidInput, "peer pool must not be empty");
}

size_t draw_chat_size(const PopulationSpec& spec, Xoshiro256pp& rng) {
    double u = rng.next_unit();
    double edge = spec.size_weights[0];
    if (u < edge) return 2;
    edge += spec.size_weights[1];
    if (u < edge) return 3 + rng.next_below(3); // 3..5
    edge += spec.size_weights[2];
    if (u < edge) return 6 + rng.next_below(5); // 6..10
    return 11 + rng.next_below(10);             // 11..20
}

} // namespace

Population generate_population(const PopulationSpec& spec, Xoshiro256pp& rng) {
    validate_population(spec);
    Population pop;
    pop.user = "u";
    pop.peer_ids.reserve(spec.peer_pool);
    for (size_t i = 0; i < spec.peer_pool; ++i)
        pop.peer_ids.push_back(indexed_id("p", i));

    pop.chats.reserve(spec.n_chats);
    for (size_t c = 0; c < spec.n_chats; ++c) {
        size_t size = draw_chat_size(spec, rng);
        size_t n_peers = std::min(size - 1, spec.peer_pool);
        auto picks = rng.sample_without_replacement(
            static_cast<uint32_t>(spec.peer_pool), static_cast<uint32_t>(n_peers));
        GeneratedChat chat;
        chat.id = indexed_id("c", c);
        chat.participants.reserve(n_peers + 1);
        chat.participants.push_back(pop.user);
        for (uint32_t p : picks) chat.participants.push_back(pop.peer_ids[p]);
        std::sort(chat.participants.begin(), chat.participants.end());
        pop.chats.push_back(std::move(chat));
    }
    return pop;
}

std::vector<uint8_t> active_flags(size_t n_peers, double inactive_rate,
                                  Xoshiro256pp& rng) {
    if (inactive_rate < 0.0 || inactive_rate >= 1.0)
        throw Error(ErrorCode::InvalidRate, "inactive rate must be in [0,1)");
    std::vector<uint8_t> flags(n_peers, 1);
    auto inactive_count = static_cast<uint32_t>(
        std::floor(inactive_rate * static_cast<double>(n_peers) + 0.5));
    for (uint32_t idx : rng.sample_without_replacement(
             static_cast<uint32_t>(n_peers), inactive_count))
        flags[idx] = 0;
    return flags;
}

std::vector<std::string> mark_inactive(const std::vector<std::string>& peers,
                                       double inactive_rate, Xoshiro256pp& rng) {
    auto flags = active_flags(peers.size(), inactive_rate, rng);
    std::vector<std::string> active;
    active.reserve(peers.size());
    for (size_t i = 0; i < peers.size(); ++i)
        if (flags[i]) active.push_back(peers[i]);
    return active;
}

namespace {

// (Re)provisions world.storage for the current rooms under the given
// password: fresh salts and part keys, one distribution, sealed blobs on
// the server, shares on the peers.
void provision(CryptoBackend& crypto, Deployment& world, size_t parts,
               size_t storage_quorum, double t_target, bool unique_peers,
               bool ts_enabled, uint64_t epoch, Xoshiro256pp& rng,
               const Bytes& password,
               const std::set<std::string>* offline = nullptr) {
    Salt salt_s = crypto.random_salt();
    Salt salt_a = crypto.random_salt();
    world.password = password;
    world.p_s = crypto.derive_key(password, salt_s, KeyPurpose::Storage);
    SymmetricKey p_a = crypto.derive_key(password, salt_a, KeyPurpose::Auth);
    register_user_account(world.server, world.storage.owner, p_a, salt_s, salt_a);

    auto chunks = partition_chatrooms(world.rooms, parts);
    std::vector<StoragePart> fresh_parts;
    fresh_parts.reserve(parts);
    world.storage.part_table.clear();
    for (size_t i = 0; i < chunks.size(); ++i) {
        StoragePart part;
        part.id = "sp" + std::to_string(i);
        part.chatrooms = std::move(chunks[i]);
        fresh_parts.push_back(std::move(part));
        world.storage.part_table.push_back(
            PartTableEntry{"sp" + std::to_string(i), crypto.random_key(), {}});
    }

    ThresholdRates rates = split_rates(t_target, parts, storage_quorum);
    world.dist = distribute_shares(crypto, world.storage, std::move(fresh_parts),
                                   world.p_s, rates, unique_peers, ts_enabled,
                                   epoch, rng);
    world.parts = world.dist.parts;

    world.sealed_parts.clear();
    for (const auto& part : world.parts) {
        SealedBlob sealed = seal_part(crypto, part, [&] {
            for (const auto& entry : world.storage.part_table)
                if (entry.part_id == part.id) return entry.part_key;
            throw Error(ErrorCode::InvalidInput, "part key missing for " + part.id);
        }());
        auto hash = crypto.digest32(sealed.serialize());
        for (auto& entry : world.storage.part_table)
            if (entry.part_id == part.id) entry.part_hash = hash;
        world.sealed_parts[part.id] = std::move(sealed);
    }
    world.sealed_storage = seal_storage(crypto, world.storage, world.p_s);

    std::map<std::string, std::vector<std::string>> chat_participants;
    for (const auto& room : world.rooms)
        chat_participants[room.id] = room.participants;
    server_store_distribution(world.server, world.storage.owner, world.dist,
                              world.sealed_storage, world.sealed_parts,
                              std::move(chat_participants));

    // Every recipient reads its own deliveries out of the shared batch;
    // peer_store_distribution filters by recipient, so nothing is copied
    // per mailbox.
    std::set<std::string> recipients;
    for (const auto& msg : world.dist.deliveries)
        if (!offline || !offline->count(msg.recipient))
            recipients.insert(msg.recipient);
    for (const auto& peer_id : recipients)
        peer_store_distribution(crypto, world.peers.at(peer_id),
                                world.storage.owner, world.dist.deliveries,
                                world.server);
}

} // namespace

Deployment deploy_population(CryptoBackend& crypto, const Population& population,
                             size_t parts, size_t storage_quorum, double t_target,
                             bool unique_peers, bool ts_enabled, uint64_t epoch,
                             Xoshiro256pp& rng, const Bytes& password,
                             const std::set<std::string>* offline) {
    Deployment world;
    for (const auto& peer_id : population.peer_ids)
        world.peers.emplace(peer_id, make_peer(crypto, world.server, peer_id));

    world.storage.owner = population.user;
    world.storage.enc_pair = crypto.gen_enc_keypair();
    world.storage.sig_pair = crypto.gen_sig_keypair();
    register_identity(world.server, population.user,
                      world.storage.enc_pair.public_key,
                      world.storage.sig_pair.public_key);

    world.rooms.reserve(population.chats.size());
    for (const auto& chat : population.chats) {
        Chatroom room;
        room.id = chat.id;
        room.participants = chat.participants;
        room.key_history.push_back(crypto.random_key());
        world.rooms.push_back(std::move(room));
    }

    for (const auto& room : world.rooms) {
        for (const auto& member : room.participants) {
            if (member == population.user) continue;
            auto& peer = world.peers.at(member);
            world.storage.peer_keys[member] =
                PeerKeys{peer.enc_pair.public_key, peer.sig_pair.public_key};
            peer.room_keys[room.id] = room.key_history.back();
            peer.rooms_with[population.user].push_back(room.id);
        }
    }

    provision(crypto, world, parts, storage_quorum, t_target, unique_peers,
              ts_enabled, epoch, rng, password, offline);
    return world;
}

void redistribute(CryptoBackend& crypto, Deployment& world, double t_target,
                  size_t storage_quorum, bool unique_peers, bool ts_enabled,
                  uint64_t epoch, Xoshiro256pp& rng, const Bytes& new_password) {
    provision(crypto, world, world.parts.size(), storage_quorum, t_target,
              unique_peers, ts_enabled, epoch, rng, new_password);
}

TrialOutcome run_trial(const ScenarioConfig& config, uint64_t trial_index) {
    Xoshiro256pp pop_rng(derive_seed(config.master_seed, trial_index, RngStream::Population));
    Xoshiro256pp act_rng(derive_seed(config.master_seed, trial_index, RngStream::Activity));
    Xoshiro256pp proto_rng(derive_seed(config.master_seed, trial_index, RngStream::Protocol));
    auto crypto = make_backend(config.crypto_backend,
                               derive_seed(config.master_seed, trial_index,
                                           RngStream::Protocol));

    TrialOutcome outcome;
    outcome.total_parts = config.parts;

    Population population = generate_population(config.population, pop_rng);
    auto flags = active_flags(population.peer_ids.size(),
                              config.population.inactive_rate, act_rng);
    std::map<std::string, size_t> peer_index;
    std::set<std::string> offline;
    for (size_t i = 0; i < population.peer_ids.size(); ++i) {
        peer_index[population.peer_ids[i]] = i;
        if (!flags[i]) offline.insert(population.peer_ids[i]);
    }

    // Any protocol failure below counts as an unrecovered trial rather
    // than aborting the experiment.
    try {
        Deployment world = deploy_population(
            *crypto, population, config.parts, config.storage_quorum,
            config.t_target, config.unique_peers, config.ts_enabled,
            /*epoch=*/1, proto_rng, bytes_of("pw-" + population.user), &offline);

        RecoverySession session =
            begin_recovery(*crypto, world.server, population.user, bytes_of("ok"));
        Bytes signed_rid = sign_rid(*crypto, session);

        const std::string* confirmer = nullptr;
        for (const auto& peer_id : session.peers) {
            if (flags[peer_index.at(peer_id)]) {
                confirmer = &peer_id;
                break;
            }
        }
        if (!confirmer) return outcome; // nobody left to vouch for the user

        confirm_recovery(*crypto, world.server, world.peers.at(*confirmer),
                         session.rid, signed_rid, 1);
        session_poll_confirmation(session, world.server);

        for (const auto& peer_id : session.peers) {
            if (session.p_s) break; // storage already open, stop asking
            if (!flags[peer_index.at(peer_id)]) continue; // inactive: no response
            auto request = make_recovery_request(*crypto, session, peer_id);
            auto released = peer_release_shares(*crypto, world.peers.at(peer_id),
                                                request, world.server);
            for (const auto& msg : released)
                if (msg.kind == MsgKind::ShareDelivery &&
                    msg.recipient == population.user)
                    ingest_share(*crypto, session, msg, world.server);
        }

        outcome.full = session.p_s.has_value();
        outcome.recovered_parts = session.recovered_parts.size();

        // Close the session so peers drop their now-invalidated shares.
        // The owner's follow-up redistribution does not feed any measured
        // rate, so the trial loop stops here; redistribute() itself is
        // exercised by the protocol tests and the demo command.
        if (outcome.full) {
            auto finish = finish_recovery(*crypto, session, world.server);
            for (auto& [peer_id, peer] : world.peers)
                if (flags[peer_index.at(peer_id)])
                    peer_observe_finish(*crypto, peer, finish, world.server);
        }
    } catch (const Error&) {
        outcome.full = false;
    }
    return outcome;
}

namespace {

struct BucketCounts {
    uint64_t full = 0, b75 = 0, b50 = 0, b25 = 0, total = 0;

    void add(const TrialOutcome& o) {
        ++total;
        size_t k = o.recovered_parts, p = o.total_parts;
        if (o.full)
            ++full;
        else if (k > 0 && 2 * k > p && k < p)
            ++b75;
        else if (4 * k > p && 2 * k <= p)
            ++b50;
        else if (k > 0 && 4 * k <= p)
            ++b25;
    }

    RateReport report() const {
        RateReport rep;
        rep.trials = total;
        auto rate = [&](uint64_t c) {
            return static_cast<double>(c) / static_cast<double>(total);
        };
        rep.r = rate(full);
        rep.r75 = rate(b75);
        rep.r50 = rate(b50);
        rep.r25 = rate(b25);
        rep.ra = rep.r + rep.r75 + rep.r50 + rep.r25;
        return rep;
    }
};

void validate_scenario(const ScenarioConfig& config) {
    if (config.parts < 1 || config.storage_quorum < 1 ||
        config.storage_quorum > config.parts)
        throw Error(ErrorCode::InvalidSpec, "need 1 <= q <= parts");
    if (!(config.t_target > 0.0) || config.t_target > 1.0)
        throw Error(ErrorCode::InvalidRate, "target rate must be in (0,1]");
    if (config.trials < 1)
        throw Error(ErrorCode::InvalidInput, "at least one trial");
    validate_population(config.population);
}

} // namespace

RateReport bucketize(const std::vector<TrialOutcome>& outcomes) {
    if (outcomes.empty())
        throw Error(ErrorCode::InvalidInput, "no outcomes to bucketize");
    BucketCounts counts;
    for (const auto& o : outcomes) counts.add(o);
    return counts.report();
}

RateReport run_scenario(const ScenarioConfig& config, unsigned jobs) {
    validate_scenario(config);
    if (jobs <= 1) {
        BucketCounts counts;
        for (uint64_t t = 0; t < config.trials; ++t)
            counts.add(run_trial(config, t));
        return counts.report();
    }

    // Contiguous chunks, merged in thread order: the aggregate is a sum of
    // per-trial classifications, so the schedule cannot change it.
    std::vector<BucketCounts> partial(jobs);
    std::vector<std::thread> workers;
    uint64_t chunk = (config.trials + jobs - 1) / jobs;
    for (unsigned w = 0; w < jobs; ++w) {
        uint64_t begin = w * chunk;
        uint64_t end = std::min<uint64_t>(config.trials, begin + chunk);
        if (begin >= end) break;
        workers.emplace_back([&, w, begin, end] {
            for (uint64_t t = begin; t < end; ++t) partial[w].add(run_trial(config, t));
        });
    }
    for (auto& worker : workers) worker.join();

    BucketCounts merged;
    for (const auto& p : partial) {
        merged.full += p.full;
        merged.b75 += p.b75;
        merged.b50 += p.b50;
        merged.b25 += p.b25;
        merged.total += p.total;
    }
    return merged.report();
}

std::string csv_header() {
    return "parts,q,t_target,unique_peers,ts_enabled,inactive_rate,trials,seed,"
           "r,r75,r50,r25,ra";
}

std::string csv_row(const ScenarioConfig& config, const RateReport& report) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "%zu,%zu,%.2f,%d,%d,%.2f,%llu,%llu,%.5f,%.5f,%.5f,%.5f,%.5f",
                  config.parts, config.storage_quorum, config.t_target,
                  config.unique_peers ? 1 : 0, config.ts_enabled ? 1 : 0,
                  config.population.inactive_rate,
                  static_cast<unsigned long long>(config.trials),
                  static_cast<unsigned long long>(config.master_seed), report.r,
                  report.r75, report.r50, report.r25, report.ra);
    return buf;
}

std::string run_experiment(const std::vector<ScenarioConfig>& configs,
                           unsigned jobs) {
    std::string out = csv_header() + "\n";
    for (const auto& config : configs)
        out += csv_row(config, run_scenario(config, jobs)) + "\n";
    return out;
}

} // namespace partstore
