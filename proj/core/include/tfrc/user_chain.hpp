#pragma once

// Per-user Markov chain in isolation (no capacity limits), with each user
// state split into `stairs` phases so the deterministic feedback period is
// approximated by an Erlang clock. Its stationary law sets the handoff inflow.

#include "tfrc/ctmc.hpp"
#include "tfrc/model.hpp"

#include <array>
#include <cstddef>
#include <vector>

namespace tfrc {

struct UserChain {
    std::vector<UserState> macro; ///< Idle, SingleT1, SingleT2, then each class by stage
    int stairs = 1;
    ctmc::SparseGenerator generator;

    std::size_t macro_index(const UserState &u) const;
    /// Row of (u, substate); substate runs 1..stairs.
    std::size_t row(const UserState &u, int substate) const {
        return macro_index(u) * static_cast<std::size_t>(stairs) +
               static_cast<std::size_t>(substate - 1);
    }

  private:
    friend UserChain build_user_chain(const ModelConfig &, const WithdrawalSchedule &);
    std::array<std::size_t, 4> class_offset_{};
};

UserChain build_user_chain(const ModelConfig &cfg, const WithdrawalSchedule &sched);

/// Stationary probability of each macro user state (substates summed).
struct UserDistribution {
    double idle = 0.0;
    double single_t1 = 0.0;
    double single_t2 = 0.0;
    std::array<std::vector<double>, 4> multi;

    double operator()(const UserState &u) const;
    double total() const;
};

UserDistribution user_steady_state(const UserChain &chain, const ctmc::SolveOptions &opts = {});

/// Handoff inflow per arriving user state: users * mobility_rate * pi(state).
struct HandoffRates {
    double single_t1 = 0.0;
    double single_t2 = 0.0;
    std::array<std::vector<double>, 4> multi;

    double operator()(const UserState &u) const;
    double total() const;
};

HandoffRates handoff_rates(const ModelConfig &cfg, const UserDistribution &pi);

/// Every non-idle user state with its inflow rate, in canonical order.
std::vector<std::pair<UserState, double>> arrival_streams(const HandoffRates &rates);

} // namespace tfrc
