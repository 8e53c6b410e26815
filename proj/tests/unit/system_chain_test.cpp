#include "dense_oracle.hpp"
#include "tfrc/system_chain.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

using namespace tfrc;

namespace {

struct Solved {
    ModelConfig cfg;
    WithdrawalSchedule sched;
    HandoffRates rates;
    SystemChain chain;
    ctmc::SteadyStateDistribution pi;
    MetricsReport metrics;
};

Solved solve(const ModelConfig &cfg) {
    Solved s{cfg, default_schedule(cfg), {}, {}, {}, {}};
    s.rates = handoff_rates(cfg, user_steady_state(build_user_chain(cfg, s.sched)));
    s.chain = build_system_chain(cfg, s.sched, s.rates);
    s.pi = solve_system(s.chain);
    s.metrics = compute_metrics(s.chain, s.pi);
    return s;
}

HandoffRates zero_rates(const WithdrawalSchedule &sched) {
    HandoffRates r;
    for (MultiClass c : kMultiClasses)
        r.multi[index(c)].assign(sched.final_stage(c) + 1, 0.0);
    return r;
}

double value(const Estimate &e) { return e.value.value(); }

} // namespace

TEST(Events, EmptyState) {
    ModelConfig c;
    c.channels = 6;
    c.handoff_reserve = 2;
    c.recovery_reserve = 1;
    c.users = 2;
    auto sched = default_schedule(c);
    auto rates = handoff_rates(c, user_steady_state(build_user_chain(c, sched)));
    auto ev = event_transitions(SystemState::empty(sched), c, sched, rates);
    std::vector<double> calls;
    std::size_t handoffs = 0;
    for (const auto &e : ev) {
        if (e.category == EventCategory::NewCall)
            calls.push_back(e.rate);
        else if (e.category == EventCategory::HandoffArrival)
            ++handoffs;
        else
            ADD_FAILURE() << "unexpected event out of the empty cell";
    }
    ASSERT_EQ(calls.size(), 2u);
    EXPECT_DOUBLE_EQ(calls[0], 2 * c.call_rate * c.t1_share);
    EXPECT_DOUBLE_EQ(calls[1], 2 * c.call_rate * c.t2_share);
    // Every stream with positive rate fits an empty cell of 6 with C_R = 1.
    std::size_t positive = 0;
    for (const auto &[u, r] : arrival_streams(rates))
        positive += r > 0.0;
    EXPECT_EQ(handoffs, positive);
}

TEST(Events, RecoveryFailureTarget) {
    ModelConfig c;
    auto sched = default_schedule(c);
    SystemState s = SystemState::empty(sched);
    // Load 8: two frozen class II users (1 each) and three single T1 (6).
    s.single_t1 = 3;
    s.count(MultiClass::II, 2) = 2;
    c.users = 5;
    ASSERT_EQ(cell_load(s, c, sched), 8);
    auto ev = event_transitions(s, c, sched, zero_rates(sched));
    int failures = 0;
    for (const auto &e : ev)
        if (e.recovery_failure) {
            ++failures;
            SystemState expect = s;
            --expect.count(MultiClass::II, 2);
            EXPECT_EQ(e.target, expect);
            EXPECT_DOUBLE_EQ(e.rate, 2 * c.t2_service_rate);
        }
    EXPECT_EQ(failures, 1);
}

TEST(Events, NoIdleInitiatorWhenAllBusy) {
    ModelConfig c;
    c.users = 2;
    c.handoff_reserve = 0;
    c.recovery_reserve = 0;
    auto sched = default_schedule(c);
    SystemState s = SystemState::empty(sched);
    s.single_t1 = 2;
    for (const auto &e : event_transitions(s, c, sched, zero_rates(sched))) {
        if (e.category == EventCategory::NewCall)
            EXPECT_EQ(busy_users(e.target), 2);
        EXPECT_NE(e.category, EventCategory::HandoffArrival);
    }
}

TEST(Events, RateConservationRecount) {
    ModelConfig c;
    c.stairs = 1;
    auto sched = default_schedule(c);
    auto rates = handoff_rates(c, user_steady_state(build_user_chain(c, sched)));
    for (const auto &s : enumerate_states(c, sched)) {
        std::map<EventCategory, double> got;
        for (const auto &e : event_transitions(s, c, sched, rates))
            got[e.category] += e.rate;

        const int load = cell_load(s, c, sched);
        const int idle = idle_users(s, c);
        double calls = 0.0;
        if (load + c.t1_subchannels <= c.channels - c.handoff_reserve)
            calls += (idle + s.single_t1 + s.single_t2) * c.call_rate * c.t1_share;
        if (load + c.t2_subchannels <= c.channels - c.handoff_reserve)
            calls += (idle + s.single_t1 + s.single_t2) * c.call_rate * c.t2_share;
        double arrivals = 0.0;
        if (idle > 0)
            for (const auto &[u, r] : arrival_streams(rates))
                if (handoff_outcome(load, u, c, sched) != HandoffOutcome::Drop)
                    arrivals += r;
        const double departures = busy_users(s) * c.mobility_rate;
        double ends = s.single_t1 * c.t1_service_rate + s.single_t2 * c.t2_service_rate;
        for (MultiClass j : kMultiClasses)
            for (int i = 0; i <= sched.final_stage(j); ++i) {
                const ConnType bg = background_type(j);
                ends += s.count(j, i) *
                        (c.service_rate(foreground_type(j)) +
                         c.service_rate(bg) * (1.0 - double(sched.withdrawn(j, i)) / c.subchannels(bg)));
            }
        EXPECT_NEAR(got[EventCategory::NewCall], calls, 1e-12);
        EXPECT_NEAR(got[EventCategory::HandoffArrival], arrivals, 1e-12);
        EXPECT_NEAR(got[EventCategory::HandoffDeparture], departures, 1e-12);
        EXPECT_NEAR(got[EventCategory::Termination], ends, 1e-12);
    }
}

TEST(SystemChain, GeneratorValid) {
    ModelConfig c;
    c.stairs = 2;
    auto s = solve(c);
    const auto &g = s.chain.generator;
    EXPECT_EQ(g.dimension(), 1073u * 2);
    for (std::size_t r = 0; r < g.dimension(); ++r) {
        double sum = 0.0;
        for (double v : g.rates(r)) {
            EXPECT_GT(v, 0.0);
            sum += v;
        }
        EXPECT_EQ(sum + g.diagonal(r), 0.0);
    }
    EXPECT_LE(s.pi.residual_norm, 1e-10 * g.max_exit_rate());
}

TEST(SystemChain, SingleUserHandSolve) {
    // K = 1, T1 only, no room for a second connection: empty <-> n1 = 1.
    ModelConfig c;
    c.users = 1;
    c.channels = 3;
    c.recovery_reserve = 0;
    c.handoff_reserve = 0;
    c.t1_share = 1.0;
    c.t2_share = 0.0;
    c.mobility_rate = 0.0;
    c.call_rate = 0.7;
    c.t1_service_rate = 1.3;
    c.stairs = 1;
    auto s = solve(c);
    auto p = macro_distribution(s.chain, s.pi);
    const double busy = 0.7 / (0.7 + 1.3);
    double p1 = 0.0, p0 = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (s.chain.states[k] == SystemState::empty(s.sched))
            p0 = p[k];
        else if (s.chain.states[k].single_t1 == 1 && busy_users(s.chain.states[k]) == 1)
            p1 = p[k];
    }
    EXPECT_NEAR(p1, busy, 1e-12);
    EXPECT_NEAR(p0, 1.0 - busy, 1e-12);
}

TEST(SystemChain, MatchesDenseOracle) {
    for (int M : {1, 2}) {
        ModelConfig c;
        c.stairs = M;
        auto s = solve(c);
        auto w = oracle::withdrawals(c);
        auto u = oracle::user_chain(c, w);
        auto in = oracle::inflow(c, w, u);
        auto sys = oracle::system_chain(c, w, in);
        ASSERT_EQ(sys.states.size(), s.chain.states.size());
        double d = 0.0;
        for (std::size_t k = 0; k < s.chain.states.size(); ++k) {
            const std::size_t o = sys.index.at(oracle::flatten(s.chain.states[k]));
            for (int m = 1; m <= M; ++m)
                d = std::max(d, std::abs(s.pi.probabilities[s.chain.row(k, m)] -
                                         sys.pi[o * M + (m - 1)]));
        }
        EXPECT_LE(d, 1e-8);
        auto om = oracle::metrics(c, w, in, sys);
        EXPECT_NEAR(value(s.metrics.blocking[0]), *om.blocking_t1, 1e-8);
        EXPECT_NEAR(value(s.metrics.blocking[1]), *om.blocking_t2, 1e-8);
        EXPECT_NEAR(value(s.metrics.handoff_dropping), *om.handoff_dropping, 1e-8);
        EXPECT_NEAR(value(s.metrics.handoff_freeze), *om.handoff_freeze, 1e-8);
        EXPECT_NEAR(value(s.metrics.recovering_dropping), *om.recovering_dropping, 1e-8);
        EXPECT_NEAR(value(s.metrics.utilization), *om.utilization, 1e-8);
        EXPECT_NEAR(value(s.metrics.cap_rejection_rate), om.cap_rate, 1e-8);
    }
}

TEST(SystemChain, CutBalanceSingleT1) {
    // Stationary inflow into the single-T1 set equals its outflow.
    ModelConfig c;
    c.stairs = 2;
    auto s = solve(c);
    const auto &g = s.chain.generator;
    auto set_of = [&](std::size_t row) { return s.chain.states[row / c.stairs].single_t1; };
    // Net flow of the n1 counter: sum over edges of pi * rate * (n1' - n1) is zero.
    double net = 0.0, gross = 0.0;
    for (std::size_t r = 0; r < g.dimension(); ++r) {
        auto cols = g.columns(r);
        auto rates = g.rates(r);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            const double f = s.pi.probabilities[r] * rates[k];
            const int d = set_of(cols[k]) - set_of(r);
            net += f * d;
            gross += f * std::abs(d);
        }
    }
    EXPECT_GT(gross, 0.0);
    EXPECT_LE(std::abs(net), 1e-8);
}

TEST(Metrics, HandoffReserveMonotone) {
    double prev = -1.0;
    for (int chr = 1; chr <= 5; ++chr) {
        ModelConfig c;
        c.stairs = 2;
        c.handoff_reserve = chr;
        const double b = value(solve(c).metrics.blocking[0]);
        EXPECT_GE(b, prev - 1e-12) << chr;
        prev = b;
    }
}

TEST(Metrics, AllReservedBlocksEverything) {
    ModelConfig c;
    c.stairs = 2;
    c.handoff_reserve = c.channels;
    auto s = solve(c);
    EXPECT_EQ(value(s.metrics.blocking[0]), 1.0);
    EXPECT_EQ(value(s.metrics.blocking[1]), 1.0);
}

TEST(Metrics, AmpleCapacityNeverBlocks) {
    ModelConfig c;
    c.stairs = 2;
    c.users = 3;
    c.channels = 3 * 2 * c.t1_subchannels;
    c.recovery_reserve = 0;
    c.handoff_reserve = 0;
    auto s = solve(c);
    EXPECT_EQ(value(s.metrics.blocking[0]), 0.0);
    EXPECT_EQ(value(s.metrics.blocking[1]), 0.0);
    EXPECT_EQ(value(s.metrics.handoff_dropping), 0.0);
    EXPECT_EQ(value(s.metrics.recovering_dropping), 0.0);
    EXPECT_GT(value(s.metrics.utilization), 0.0);
    EXPECT_LE(value(s.metrics.utilization), 1.0);
}

TEST(Metrics, UndefinedWhenNoDenominator) {
    ModelConfig c;
    c.stairs = 1;
    c.mobility_rate = 0.0;
    c.t1_share = 1.0;
    c.t2_share = 0.0;
    auto s = solve(c);
    EXPECT_FALSE(s.metrics.handoff_dropping.defined());
    EXPECT_FALSE(s.metrics.blocking[1].defined());
    EXPECT_FALSE(s.metrics.recovering_dropping.defined());
    EXPECT_TRUE(s.metrics.blocking[0].defined());
}

TEST(Metrics, EngsetFirstCallBlocking) {
    for (int K : {1, 3, 6})
        for (int C : {2, 3}) {
            ModelConfig c;
            c.users = K;
            c.channels = C;
            c.t1_subchannels = 2;
            c.recovery_reserve = 0;
            c.handoff_reserve = 0;
            c.t1_share = 1.0;
            c.t2_share = 0.0;
            c.mobility_rate = 0.0;
            c.stairs = 1;
            auto s = solve(c);
            EXPECT_NEAR(value(s.metrics.first_call_blocking[0]),
                        oracle::engset(K, C / 2, c.call_rate / c.t1_service_rate), 1e-12);
        }
}

TEST(Metrics, CapRejectionsOptIn) {
    ModelConfig c;
    c.stairs = 1;
    c.users = 2;
    auto sched = default_schedule(c);
    auto rates = handoff_rates(c, user_steady_state(build_user_chain(c, sched)));
    auto chain = build_system_chain(c, sched, rates);
    auto pi = solve_system(chain);
    auto a = compute_metrics(chain, pi);
    auto b = compute_metrics(chain, pi, {.include_cap_rejections = true});
    EXPECT_GT(value(a.cap_rejection_rate), 0.0);
    EXPECT_GT(value(b.handoff_dropping), value(a.handoff_dropping));
}
