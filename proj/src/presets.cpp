#include "partstore/presets.hpp"

#include "partstore/errors.hpp"

namespace partstore {

namespace {

ScenarioConfig base_config(uint64_t trials, uint64_t seed, double t_target) {
    ScenarioConfig config;
    config.trials = trials;
    config.master_seed = seed;
    config.t_target = t_target;
    config.unique_peers = true;
    config.ts_enabled = true;
    config.population.inactive_rate = 1.0 - t_target;
    return config;
}

} // namespace

std::vector<ScenarioConfig> figure_preset(int figure, uint64_t trials,
                                          uint64_t seed) {
    std::vector<ScenarioConfig> configs;
    switch (figure) {
        case 3:
            for (size_t p = 1; p <= 8; ++p)
                for (bool unique : {true, false}) {
                    auto config = base_config(trials, seed, 0.7);
                    config.parts = p;
                    config.storage_quorum = p;
                    config.unique_peers = unique;
                    config.ts_enabled = false;
                    configs.push_back(config);
                }
            break;
        case 4:
            for (size_t p : {1, 2, 4, 8, 12, 16, 20})
                for (bool ts : {false, true}) {
                    auto config = base_config(trials, seed, 0.7);
                    config.parts = p;
                    config.storage_quorum = p;
                    config.ts_enabled = ts;
                    configs.push_back(config);
                }
            break;
        case 5:
            for (size_t p : {8, 12, 16})
                for (size_t drop : {0, 1, 2}) {
                    auto config = base_config(trials, seed, 0.7);
                    config.parts = p;
                    config.storage_quorum = p - drop;
                    configs.push_back(config);
                }
            break;
        case 6:
            for (size_t p : {1, 2, 4, 8, 12})
                for (double t : {0.7, 0.9}) {
                    auto config = base_config(trials, seed, t);
                    config.parts = p;
                    config.storage_quorum = p;
                    configs.push_back(config);
                }
            break;
        default:
            throw Error(ErrorCode::InvalidInput,
                        "no preset for figure " + std::to_string(figure));
    }
    return configs;
}

} // namespace partstore
