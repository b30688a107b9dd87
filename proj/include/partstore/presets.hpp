#pragma once

#include <cstdint>
#include <vector>

#include "partstore/simulation.hpp"

namespace partstore {

// Canned experiment sweeps behind `simulate --figure N`. Each returns one
// ScenarioConfig per output row:
//   3: part granularity 1..8, unique vs per-chat share placement,
//      compartment scheme only
//   4: part granularity {1,2,4,8,12,16,20}, flat scheme off vs on
//   5: storage quorum q in {p, p-1, p-2} for p in {8,12,16}
//   6: part granularity {1,2,4,8,12} at target rates 0.7 and 0.9
// Sweeps 3..5 run at target rate 0.7. The inactive fraction tracks the
// target rate (1 - t_target): the scenario measures whether exactly the
// targeted fraction of active peers suffices.
std::vector<ScenarioConfig> figure_preset(int figure, uint64_t trials,
                                          uint64_t seed);

} // namespace partstore
