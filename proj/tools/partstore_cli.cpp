#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "partstore/errors.hpp"
#include "partstore/presets.hpp"
#include "partstore/protocol.hpp"
#include "partstore/simulation.hpp"
#include "partstore/storage.hpp"

namespace {

using namespace partstore;

bool parse_seed(const char* text, uint64_t& out) {
    if (!text || !*text) return false;
    char* end = nullptr;
    errno = 0;
    unsigned long long value = std::strtoull(text, &end, 10);
    if (errno != 0 || end == text || *end != '\0') return false;
    out = value;
    return true;
}

// --seed beats PARTSTORE_SEED beats the built-in default.
int resolve_seed(const CLI::App* cmd, uint64_t& seed) {
    if (cmd->count("--seed")) return 0;
    const char* env = std::getenv("PARTSTORE_SEED");
    if (!env) return 0;
    if (!parse_seed(env, seed)) {
        std::cerr << "error: PARTSTORE_SEED is not a valid integer: " << env << "\n";
        return 2;
    }
    return 0;
}

struct SimulateArgs {
    size_t parts = 4;
    size_t q = 0; // 0: default to parts
    double t_target = 0.7;
    std::string unique_peers = "true";
    std::string ts = "on";
    double inactive_rate = -1.0; // <0: default to 1 - t_target
    uint64_t trials = 10000;
    uint64_t seed = 42;
    unsigned jobs = 1;
    int figure = 0;
    std::string output;
    std::string crypto = "test";
};

int cmd_simulate(const CLI::App* cmd, SimulateArgs& args) {
    if (int rc = resolve_seed(cmd, args.seed)) return rc;

    std::vector<ScenarioConfig> configs;
    if (args.figure != 0) {
        configs = figure_preset(args.figure, args.trials, args.seed);
        for (auto& config : configs) config.crypto_backend = args.crypto;
    } else {
        ScenarioConfig config;
        config.parts = args.parts;
        config.storage_quorum = args.q == 0 ? args.parts : args.q;
        config.t_target = args.t_target;
        config.unique_peers = args.unique_peers == "true";
        config.ts_enabled = args.ts == "on";
        config.trials = args.trials;
        config.master_seed = args.seed;
        config.crypto_backend = args.crypto;
        config.population.inactive_rate =
            args.inactive_rate < 0.0 ? 1.0 - args.t_target : args.inactive_rate;
        if (!(config.t_target > 0.0) || config.t_target > 1.0) {
            std::cerr << "error: --t-target must be in (0,1]\n";
            return 2;
        }
        if (config.population.inactive_rate < 0.0 ||
            config.population.inactive_rate >= 1.0) {
            std::cerr << "error: --inactive-rate must be in [0,1)\n";
            return 2;
        }
        if (config.storage_quorum < 1 || config.storage_quorum > config.parts) {
            std::cerr << "error: --q must be in 1..--parts\n";
            return 2;
        }
        configs.push_back(config);
    }

    std::string csv = run_experiment(configs, args.jobs);
    if (args.output.empty()) {
        std::cout << csv;
        return 0;
    }
    std::ofstream file(args.output, std::ios::binary);
    if (!file) {
        std::cerr << "error: cannot write " << args.output << "\n";
        return 2;
    }
    file << csv;
    file.close();

    // Human-readable recap; the CSV in the file is the machine contract.
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line); // header
    size_t row = 0;
    while (std::getline(lines, line)) {
        const auto& config = configs[row++];
        auto last_comma = line.rfind(',');
        auto ra = line.substr(last_comma + 1);
        std::printf("p=%-2zu q=%-2zu t=%.2f unique=%d ts=%d inactive=%.2f  ra=%s\n",
                    config.parts, config.storage_quorum, config.t_target,
                    config.unique_peers ? 1 : 0, config.ts_enabled ? 1 : 0,
                    config.population.inactive_rate, ra.c_str());
    }
    std::printf("wrote %zu rows to %s\n", row, args.output.c_str());
    return 0;
}

struct DemoArgs {
    size_t parts = 2;
    double t_target = 0.5;
    std::string inactive;
    bool skip_confirmation = false;
    uint64_t seed = 42;
    std::string crypto = "production";
};

void print_message(const char* phase, const ProtocolMessage& msg) {
    std::printf("  [%s] %-17s %s -> %s%s%s (%zu-byte body)\n", phase,
                msg_kind_name(msg.kind).c_str(), msg.sender.c_str(),
                msg.recipient.c_str(), msg.rid.empty() ? "" : "  rid=",
                msg.rid.c_str(), msg.body.size());
}

int cmd_demo(const CLI::App* cmd, DemoArgs& args) {
    if (int rc = resolve_seed(cmd, args.seed)) return rc;

    Population pop;
    pop.user = "u";
    pop.peer_ids = {"p1", "p2", "p3", "p4"};
    pop.chats = {{"c1", {"p1", "p2", "u"}},
                 {"c2", {"p2", "p3", "u"}},
                 {"c3", {"p1", "p3", "p4", "u"}}};

    std::set<std::string> inactive;
    if (args.inactive == "all") {
        inactive.insert(pop.peer_ids.begin(), pop.peer_ids.end());
    } else if (!args.inactive.empty()) {
        std::istringstream parts(args.inactive);
        std::string id;
        while (std::getline(parts, id, ',')) {
            if (std::find(pop.peer_ids.begin(), pop.peer_ids.end(), id) ==
                pop.peer_ids.end()) {
                std::cerr << "error: unknown peer in --inactive: " << id << "\n";
                return 2;
            }
            inactive.insert(id);
        }
    }
    auto is_active = [&](const std::string& id) { return !inactive.count(id); };

    auto crypto = make_backend(args.crypto, args.seed);
    Xoshiro256pp rng(args.seed);

    std::printf("population: user u, peers p1..p4, chats c1{u,p1,p2} c2{u,p2,p3} "
                "c3{u,p1,p3,p4}\n");
    std::printf("distributing: parts=%zu, target rate=%.2f, backend=%s\n",
                args.parts, args.t_target, crypto->name().c_str());

    Deployment world =
        deploy_population(*crypto, pop, args.parts, args.parts, args.t_target,
                          /*unique_peers=*/true, /*ts_enabled=*/true, /*epoch=*/1,
                          rng, bytes_of("demo password"));
    for (const auto& msg : world.dist.deliveries) print_message("distribute", msg);
    std::printf("sealed storage: %zu bytes; %zu sealed parts on the server\n",
                world.sealed_storage.serialize().size(), world.sealed_parts.size());

    if (!inactive.empty()) {
        std::printf("inactive peers:");
        for (const auto& id : inactive) std::printf(" %s", id.c_str());
        std::printf("\n");
    }

    std::printf("user lost the password; starting recovery\n");
    RecoverySession session = begin_recovery(*crypto, world.server, "u", bytes_of("ok"));
    print_message("recover", make_signed_message(*crypto, MsgKind::InitializeRecovery,
                                                 session.rid, "u", "server",
                                                 bytes_of("{}"),
                                                 session.fresh_sig_pair.private_key));

    if (args.skip_confirmation) {
        std::printf("  (confirmation step skipped on purpose)\n");
    } else {
        const std::string* confirmer = nullptr;
        for (const auto& id : session.peers)
            if (is_active(id)) {
                confirmer = &id;
                break;
            }
        if (!confirmer) {
            std::printf("  (no active peer can confirm the request)\n");
        } else {
            auto confirmation =
                confirm_recovery(*crypto, world.server, world.peers.at(*confirmer),
                                 session.rid, sign_rid(*crypto, session), 1);
            print_message("recover", confirmation);
            session_poll_confirmation(session, world.server);
        }
    }

    for (const auto& peer_id : session.peers) {
        auto request = make_recovery_request(*crypto, session, peer_id);
        print_message("recover", request);
        if (!is_active(peer_id)) {
            std::printf("    (%s is inactive, no response)\n", peer_id.c_str());
            continue;
        }
        auto released =
            peer_release_shares(*crypto, world.peers.at(peer_id), request, world.server);
        if (released.empty())
            std::printf("    (%s withholds shares: no confirmation visible)\n",
                        peer_id.c_str());
        size_t parts_before = session.recovered_parts.size();
        bool storage_before = session.p_s.has_value();
        for (const auto& msg : released) {
            print_message("release", msg);
            if (msg.kind == MsgKind::ShareDelivery && msg.recipient == "u")
                ingest_share(*crypto, session, msg, world.server);
        }
        for (const auto& [part_id, part] : session.recovered_parts)
            if (session.recovered_parts.size() > parts_before)
                std::printf("    -> part %s open (%zu chats usable)\n",
                            part_id.c_str(), part.chatrooms.size());
        if (!storage_before && session.p_s) {
            bool flat = session.ts_threshold >= 1 &&
                        session.ts_shares.size() >= session.ts_threshold;
            bool compartment = session.storage_quorum >= 1 &&
                               session.recovered_parts.size() >= session.storage_quorum;
            std::printf("    -> storage key recovered (routes:%s%s)\n",
                        flat ? " flat" : "", compartment ? " compartment" : "");
        }
    }

    if (!session.p_s) {
        std::printf("verdict: storage not recovered\n");
        return 1;
    }

    bool match = canonical_storage_bytes(*session.storage) ==
                 canonical_storage_bytes(world.storage);
    std::printf("storage-match: %s\n", match ? "yes" : "no");

    auto finish = finish_recovery(*crypto, session, world.server);
    print_message("finish", finish);
    for (auto& [id, peer] : world.peers)
        if (is_active(id)) peer_observe_finish(*crypto, peer, finish, world.server);

    redistribute(*crypto, world, args.t_target, args.parts, /*unique_peers=*/true,
                 /*ts_enabled=*/true, /*epoch=*/2, rng, bytes_of("fresh demo password"));
    std::printf("redistributed under a fresh password: %zu deliveries, epoch %llu\n",
                world.dist.deliveries.size(),
                static_cast<unsigned long long>(world.storage.last_distribution));
    std::printf("verdict: storage recovered%s\n", match ? "" : " (MISMATCH)");
    return match ? 0 : 1;
}

struct OverheadArgs {
    size_t parts = 0;
    size_t peers = 70;
    size_t chats = 60;
};

int cmd_overhead(const OverheadArgs& args) {
    uint64_t distributed = estimate_overhead(args.parts, args.peers);
    uint64_t baseline = baseline_overhead(args.chats);
    std::printf("distributed-bytes: %llu\n",
                static_cast<unsigned long long>(distributed));
    std::printf("baseline-bytes: %llu (%zu chats)\n",
                static_cast<unsigned long long>(baseline), args.chats);
    std::printf("ratio: %.5f\n",
                static_cast<double>(distributed) / static_cast<double>(baseline));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Partitioned private-storage backup and social key recovery"};
    app.require_subcommand(1);

    SimulateArgs sim_args;
    auto* sim = app.add_subcommand(
        "simulate", "Run Monte-Carlo reconstruction-rate experiments (CSV output)");
    sim->add_option("--parts", sim_args.parts, "Number of storage parts")
        ->check(CLI::Range(size_t{1}, size_t{255}));
    sim->add_option("--q", sim_args.q, "Storage quorum (parts needed; default: --parts)");
    sim->add_option("--t-target", sim_args.t_target, "Overall threshold rate in (0,1]");
    sim->add_option("--unique-peers", sim_args.unique_peers,
                    "One share per peer (true) or one per chat occurrence (false)")
        ->check(CLI::IsMember({"true", "false"}));
    sim->add_option("--ts", sim_args.ts, "Distribute the flat scheme on top (on/off)")
        ->check(CLI::IsMember({"on", "off"}));
    sim->add_option("--inactive-rate", sim_args.inactive_rate,
                    "Fraction of unresponsive peers (default: 1 - t-target)");
    sim->add_option("--trials", sim_args.trials, "Monte-Carlo trials per row")
        ->check(CLI::Range(uint64_t{1}, uint64_t{100000000}));
    sim->add_option("--seed", sim_args.seed, "Master seed (PARTSTORE_SEED overrides default)");
    sim->add_option("--jobs", sim_args.jobs, "Worker threads")
        ->check(CLI::Range(1u, 256u));
    auto* figure_opt =
        sim->add_option("--figure", sim_args.figure, "Preset sweep (3, 4, 5, or 6)")
            ->check(CLI::IsMember({3, 4, 5, 6}));
    sim->add_option("-o,--output", sim_args.output, "Write CSV here (default: stdout)");
    sim->add_option("--crypto", sim_args.crypto, "Crypto backend")
        ->check(CLI::IsMember({"test", "production"}));
    for (const char* flag : {"--parts", "--q", "--t-target", "--unique-peers",
                             "--ts", "--inactive-rate"})
        figure_opt->excludes(flag);

    DemoArgs demo_args;
    auto* demo = app.add_subcommand(
        "demo", "Run one small recovery end to end and print the message trace");
    demo->add_option("--parts", demo_args.parts, "Number of storage parts")
        ->check(CLI::Range(size_t{1}, size_t{3}));
    demo->add_option("--t-target", demo_args.t_target, "Overall threshold rate in (0,1]")
        ->check(CLI::Range(0.01, 1.0));
    demo->add_option("--inactive", demo_args.inactive,
                     "Comma-separated peers that never respond, or 'all'");
    demo->add_flag("--skip-confirmation", demo_args.skip_confirmation,
                   "Send recovery requests without any peer confirmation");
    demo->add_option("--seed", demo_args.seed, "Seed for the deterministic pieces");
    demo->add_option("--crypto", demo_args.crypto, "Crypto backend")
        ->check(CLI::IsMember({"test", "production"}));

    OverheadArgs overhead_args;
    auto* overhead = app.add_subcommand(
        "overhead", "Print the stored-bytes estimate for a distributed layout");
    overhead->add_option("--parts", overhead_args.parts, "Number of storage parts")
        ->required()
        ->check(CLI::Range(size_t{1}, size_t{255}));
    overhead->add_option("--peers", overhead_args.peers, "Unique peers holding shares");
    overhead->add_option("--chats", overhead_args.chats, "Chats in the baseline layout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed()) return cmd_simulate(sim, sim_args);
        if (demo->parsed()) return cmd_demo(demo, demo_args);
        if (overhead->parsed()) return cmd_overhead(overhead_args);
    } catch (const partstore::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
