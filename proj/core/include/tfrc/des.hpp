#pragma once

// Event-level simulation of one cell with an exact feedback period. Each
// connection carries a data volume; it drains at allocated * bitrate, so a
// background connection that loses subchannels takes proportionally longer.

#include "tfrc/metrics.hpp"
#include "tfrc/model.hpp"
#include "tfrc/system_chain.hpp"
#include "tfrc/user_chain.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace tfrc::des {

enum class Role { Foreground, Background };

struct SimConnection {
    ConnType type = ConnType::T1;
    Role role = Role::Foreground;
    double remaining_bits = 0.0; ///< as of `updated`
    double updated = 0.0;
    int allocated = 0;
    int owner = 0;
    double started = 0.0;
    double nominal = 0.0;        ///< drawn full-rate duration
    bool reduced = false;        ///< ever held fewer than its full subchannels

    /// Remaining full-rate seconds as of `updated`.
    double remaining_work(const ModelConfig &cfg) const {
        return remaining_bits / (cfg.subchannels(type) * cfg.subchannel_bitrate);
    }
};

struct SimUser {
    int id = 0;
    UserState state;
    std::vector<SimConnection> connections; ///< [0] foreground, [1] background if present
};

struct SimStats {
    std::uint64_t seed = 0;
    double observed_time = 0.0;
    std::uint64_t events = 0;

    std::array<std::uint64_t, 2> new_offered{};
    std::array<std::uint64_t, 2> new_accepted{};
    std::array<std::uint64_t, 2> new_blocked{};
    std::array<std::uint64_t, 2> first_offered{};
    std::array<std::uint64_t, 2> first_blocked{};

    std::array<std::uint64_t, kArrivalFamilies> handoff_offered{};
    std::array<std::uint64_t, kArrivalFamilies> handoff_full{};
    std::array<std::uint64_t, kArrivalFamilies> handoff_frozen{};
    std::array<std::uint64_t, kArrivalFamilies> handoff_dropped{};
    std::array<std::uint64_t, kArrivalFamilies> handoff_capped{};

    std::array<std::uint64_t, 4> recovery_attempts{};
    std::array<std::uint64_t, 4> recovery_failures{};

    double load_integral = 0.0;
    std::array<double, kArrivalFamilies> user_integral{};
    int peak_load = 0;

    /// Full-rate remaining work at each successful recovery, per restored connection type.
    std::array<std::vector<double>, 2> post_recovery;

    /// Completed connections that never lost subchannels, and the worst
    /// |wall-clock duration - nominal duration| among them.
    std::uint64_t conservation_checked = 0;
    double conservation_error = 0.0;

    bool operator==(const SimStats &) const = default;
};

struct RunOptions {
    double horizon = 5e4;
    std::uint64_t seed = 1;
    double warmup_fraction = 0.1;
    /// When set, one line per event: "<time> <category> <state digest>".
    std::ostream *trace = nullptr;
};

/// One replication. Throws SimulationAssertion if an internal invariant breaks.
SimStats run(const ModelConfig &cfg, const WithdrawalSchedule &sched, const HandoffRates &rates,
             const RunOptions &opts);

struct ReplicationOptions {
    std::size_t replications = 20;
    double horizon = 5e4;
    std::uint64_t master_seed = 1;
    double warmup_fraction = 0.1;
    unsigned threads = 0; ///< 0 = hardware concurrency
};

/// Seed of replication `k` under `master`.
std::uint64_t replication_seed(std::uint64_t master, std::size_t k);

/// Independent replications, returned in replication order.
std::vector<SimStats> run_replications(const ModelConfig &cfg, const WithdrawalSchedule &sched,
                                       const HandoffRates &rates, const ReplicationOptions &opts);

/// Ratio-of-sums point estimates with Student-t 95% half-widths over
/// per-replication values. Throws InsufficientData for fewer than two replications.
MetricsReport estimate(std::span<const SimStats> stats, const ModelConfig &cfg,
                       const MetricsOptions &opts = {});

struct KsReport {
    std::size_t samples = 0;
    double statistic = 0.0;
    double p_value = 0.0;
    bool passed = false;
};

/// One-sample Kolmogorov-Smirnov test of `samples` against Exponential(rate).
/// Throws InsufficientData below `min_samples`.
KsReport ks_exponential(std::span<const double> samples, double rate, double alpha = 0.01,
                        std::size_t min_samples = 1000);

/// KS test of the post-recovery holding times of `type` connections.
KsReport recovery_holding_test(const SimStats &stats, ConnType type, double rate,
                               double alpha = 0.01);

/// Asymptotic Kolmogorov tail probability P(K > x).
double kolmogorov_tail(double x);

} // namespace tfrc::des
