#pragma once

// Cell-level CTMC over (occupancy state x feedback phase). Event transitions
// keep the phase; phase edges advance it, and the last phase applies one
// conversion step.

#include "tfrc/ctmc.hpp"
#include "tfrc/metrics.hpp"
#include "tfrc/model.hpp"
#include "tfrc/user_chain.hpp"

#include <cstddef>
#include <vector>

namespace tfrc {

enum class EventCategory { NewCall, HandoffArrival, HandoffDeparture, Termination };

/// A state-changing event out of one occupancy state.
struct EventTransition {
    EventCategory category;
    SystemState target;
    double rate;
    bool recovery_failure = false; ///< foreground ended and the background could not be restored
};

/// All event transitions (no phase edges) leaving `s`. Blocked and dropped
/// requests leave the state unchanged and are not listed.
std::vector<EventTransition> event_transitions(const SystemState &s, const ModelConfig &cfg,
                                               const WithdrawalSchedule &sched,
                                               const HandoffRates &rates);

struct SystemChain {
    ModelConfig cfg;
    WithdrawalSchedule sched;
    HandoffRates rates;
    std::vector<SystemState> states; ///< enumerate_states() order
    ctmc::SparseGenerator generator;

    int stairs() const noexcept { return cfg.stairs; }
    std::size_t row(std::size_t macro, int substate) const {
        return macro * static_cast<std::size_t>(cfg.stairs) + static_cast<std::size_t>(substate - 1);
    }
    std::size_t dimension() const noexcept { return generator.dimension(); }
};

/// Throws CapacityExplosion if the stair state count exceeds `stair_limit`.
SystemChain build_system_chain(const ModelConfig &cfg, const WithdrawalSchedule &sched,
                               const HandoffRates &rates,
                               std::size_t stair_limit = kDefaultStairStateLimit);

/// Stationary law over stair states, pruned to the class of the empty cell.
ctmc::SteadyStateDistribution solve_system(const SystemChain &chain,
                                           const ctmc::SolveOptions &opts = {});

struct MetricsOptions {
    /// Count population-cap rejections as handoff drops (numerator and denominator).
    bool include_cap_rejections = false;
};

MetricsReport compute_metrics(const SystemChain &chain, const ctmc::SteadyStateDistribution &pi,
                              const MetricsOptions &opts = {});

/// Stationary probability per occupancy state (phases summed).
std::vector<double> macro_distribution(const SystemChain &chain,
                                       const ctmc::SteadyStateDistribution &pi);

struct AnalyticResult {
    HandoffRates rates;
    UserDistribution user;
    std::size_t states = 0;
    ctmc::SteadyStateDistribution distribution;
    MetricsReport metrics;
};

/// User chain, handoff rates, system chain, solve and metrics in one call.
AnalyticResult solve_analytic(const ModelConfig &cfg, const WithdrawalSchedule &sched,
                              const ctmc::SolveOptions &solve = {},
                              const MetricsOptions &metrics = {},
                              std::size_t stair_limit = kDefaultStairStateLimit);

} // namespace tfrc
