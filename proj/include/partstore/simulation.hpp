#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "partstore/protocol.hpp"
#include "partstore/rng.hpp"

namespace partstore {

// Usage statistics for the synthetic population: chat-size categories with
// their weights, the contact pool, and the fraction of peers that will not
// respond during recovery.
struct PopulationSpec {
    size_t n_chats = 60;
    size_t peer_pool = 70;
    // Chat sizes in participants including the user: exactly 2, uniform
    // 3..5, uniform 6..10, uniform 11..20.
    std::array<double, 4> size_weights{0.715, 0.114, 0.069, 0.102};
    double inactive_rate = 0.7;
};

struct GeneratedChat {
    std::string id;
    std::vector<std::string> participants; // sorted, includes the user
};

struct Population {
    std::string user;
    std::vector<std::string> peer_ids; // the whole pool, chat member or not
    std::vector<GeneratedChat> chats;
};

// One experiment cell: the sharing layout under test plus the population
// model and trial budget.
struct ScenarioConfig {
    size_t parts = 4;
    size_t storage_quorum = 4;
    double t_target = 0.7;
    bool unique_peers = true;
    bool ts_enabled = true;
    uint64_t trials = 10000;
    uint64_t master_seed = 42;
    PopulationSpec population;
    std::string crypto_backend = "test";
};

struct TrialOutcome {
    bool full = false;           // storage key recovered, either route
    size_t recovered_parts = 0;
    size_t total_parts = 1;
};

struct RateReport {
    double r = 0, r75 = 0, r50 = 0, r25 = 0, ra = 0;
    uint64_t trials = 0;
};

// Draws the chat structure only; keys and actors are created at deploy
// time so structure and crypto consume independent rng streams.
Population generate_population(const PopulationSpec& spec, Xoshiro256pp& rng);

// Marks round(rate * n) peers inactive, sampled uniformly without
// replacement, and returns the active remainder in input order. The exact
// count (rather than per-peer coin flips) keeps the activity level of
// every trial at the configured rate.
std::vector<std::string> mark_inactive(const std::vector<std::string>& peers,
                                       double inactive_rate, Xoshiro256pp& rng);

// Index-level variant used in the trial hot path: flags[i] says whether
// peer i stays active.
std::vector<uint8_t> active_flags(size_t n_peers, double inactive_rate,
                                  Xoshiro256pp& rng);

// A fully provisioned world: one user with distributed storage, the
// server's view, and every peer holding its shares. Shared between the
// Monte-Carlo runner, the demo command, and the protocol tests.
struct Deployment {
    Bytes password;
    SymmetricKey p_s;
    Storage storage;
    std::vector<StoragePart> parts;
    std::vector<Chatroom> rooms;
    std::map<std::string, SealedBlob> sealed_parts;
    SealedBlob sealed_storage;
    DistributionResult dist;
    ServerState server;
    std::map<std::string, PeerActor> peers;
};

// `offline` names peers whose devices never come online during the
// scenario: their queued deliveries stay unread on the server. Only online
// peers confirm or release shares, so skipping their mailbox processing is
// observationally equivalent and saves most of the provisioning cost.
Deployment deploy_population(CryptoBackend& crypto, const Population& population,
                             size_t parts, size_t storage_quorum, double t_target,
                             bool unique_peers, bool ts_enabled, uint64_t epoch,
                             Xoshiro256pp& rng, const Bytes& password,
                             const std::set<std::string>* offline = nullptr);

// Re-provisions an owner after a finished recovery: fresh password-derived
// keys, fresh part keys, fresh distribution to the same population.
void redistribute(CryptoBackend& crypto, Deployment& world, double t_target,
                  size_t storage_quorum, bool unique_peers, bool ts_enabled,
                  uint64_t epoch, Xoshiro256pp& rng, const Bytes& new_password);

// One end-to-end trial: build the world, knock out the configured share of
// peers, run the recovery choreography until quiescent, count parts.
TrialOutcome run_trial(const ScenarioConfig& config, uint64_t trial_index);

RateReport bucketize(const std::vector<TrialOutcome>& outcomes);

// Runs all trials of one cell, parallelized across jobs; the result is
// independent of the schedule because every trial owns seeded streams.
RateReport run_scenario(const ScenarioConfig& config, unsigned jobs = 1);

std::string csv_header();
std::string csv_row(const ScenarioConfig& config, const RateReport& report);

// Runs every config and renders the CSV table, one row per config.
std::string run_experiment(const std::vector<ScenarioConfig>& configs,
                           unsigned jobs = 1);

} // namespace partstore
