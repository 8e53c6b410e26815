#include "tfrc/system_chain.hpp"

#include "tfrc/errors.hpp"

#include <stdexcept>

namespace tfrc {

std::vector<EventTransition> event_transitions(const SystemState &s, const ModelConfig &cfg,
                                               const WithdrawalSchedule &sched,
                                               const HandoffRates &rates) {
    std::vector<EventTransition> out;
    const int load = cell_load(s, cfg, sched);
    const int idle = idle_users(s, cfg);

    auto emit = [&](EventCategory cat, SystemState target, double rate, bool failed = false) {
        if (rate > 0.0)
            out.push_back({cat, std::move(target), rate, failed});
    };

    // New calls; the initiator's existing connection (if any) goes to the background.
    for (ConnType t : kConnTypes) {
        if (!new_call_admissible(load, t, cfg))
            continue;
        const double per_user = cfg.call_rate * cfg.share(t);
        SystemState next = s;
        ++next.single(t);
        emit(EventCategory::NewCall, std::move(next), idle * per_user);
        for (ConnType held : kConnTypes) {
            const int n = s.single(held);
            if (n == 0)
                continue;
            next = s;
            --next.single(held);
            ++next.count(multi_class(held, t), 0);
            emit(EventCategory::NewCall, std::move(next), n * per_user);
        }
    }

    // Handoff arrivals; none when every user in the population is already busy.
    if (idle > 0) {
        for (const auto &[u, rate] : arrival_streams(rates)) {
            if (rate <= 0.0)
                continue;
            SystemState next = s;
            switch (handoff_outcome(load, u, cfg, sched)) {
            case HandoffOutcome::Drop: continue;
            case HandoffOutcome::AcceptFull:
                if (u.kind == UserKind::Multi)
                    ++next.count(u.cls, u.stage);
                else
                    ++next.single(u.kind == UserKind::SingleT1 ? ConnType::T1 : ConnType::T2);
                break;
            case HandoffOutcome::AcceptFrozen: ++next.count(u.cls, sched.final_stage(u.cls)); break;
            }
            emit(EventCategory::HandoffArrival, std::move(next), rate);
        }
    }

    // Departures and single-connection terminations.
    for (ConnType t : kConnTypes) {
        const int n = s.single(t);
        if (n == 0)
            continue;
        SystemState next = s;
        --next.single(t);
        emit(EventCategory::HandoffDeparture, next, n * cfg.mobility_rate);
        emit(EventCategory::Termination, std::move(next), n * cfg.service_rate(t));
    }

    for (MultiClass c : kMultiClasses) {
        const ConnType bg = background_type(c);
        const ConnType fg = foreground_type(c);
        for (int i = 0; i <= sched.final_stage(c); ++i) {
            const int n = s.count(c, i);
            if (n == 0)
                continue;
            SystemState gone = s;
            --gone.count(c, i);
            emit(EventCategory::HandoffDeparture, gone, n * cfg.mobility_rate);

            // Background ends at its reduced service rate; the foreground stays.
            const double kept_fraction =
                1.0 - static_cast<double>(sched.withdrawn(c, i)) / cfg.subchannels(bg);
            SystemState next = gone;
            ++next.single(fg);
            emit(EventCategory::Termination, std::move(next), n * cfg.service_rate(bg) * kept_fraction);

            // Foreground ends; the background is restored to full allocation if it fits.
            if (recovery_feasible(load, c, i, cfg, sched)) {
                next = gone;
                ++next.single(bg);
                emit(EventCategory::Termination, std::move(next), n * cfg.service_rate(fg));
            } else {
                emit(EventCategory::Termination, std::move(gone), n * cfg.service_rate(fg), true);
            }
        }
    }
    return out;
}

SystemChain build_system_chain(const ModelConfig &cfg, const WithdrawalSchedule &sched,
                               const HandoffRates &rates, std::size_t stair_limit) {
    SystemChain chain{cfg, sched, rates, enumerate_states(cfg, sched, stair_limit), {}};
    const int m_max = cfg.stairs;
    const double stair_rate = m_max / cfg.feedback_period;
    ctmc::GeneratorBuilder b(chain.states.size() * static_cast<std::size_t>(m_max));

    auto locate = [&](const SystemState &s) {
        auto k = find_state(chain.states, s);
        if (!k)
            throw std::logic_error("transition target outside the enumerated state space");
        return *k;
    };

    for (std::size_t k = 0; k < chain.states.size(); ++k) {
        const SystemState &s = chain.states[k];
        for (const EventTransition &e : event_transitions(s, cfg, sched, rates)) {
            const std::size_t target = locate(e.target);
            for (int m = 1; m <= m_max; ++m)
                b.add(chain.row(k, m), chain.row(target, m), e.rate);
        }
        for (int m = 1; m < m_max; ++m)
            b.add(chain.row(k, m), chain.row(k, m + 1), stair_rate);
        const std::size_t from = chain.row(k, m_max);
        const std::size_t to = chain.row(locate(convert(s)), 1);
        if (from != to)
            b.add(from, to, stair_rate);
    }
    chain.generator = std::move(b).finalize();
    return chain;
}

ctmc::SteadyStateDistribution solve_system(const SystemChain &chain,
                                           const ctmc::SolveOptions &opts) {
    const auto empty = find_state(chain.states, SystemState::empty(chain.sched));
    return ctmc::steady_state_from(chain.generator, chain.row(empty.value(), 1), opts);
}

std::vector<double> macro_distribution(const SystemChain &chain,
                                       const ctmc::SteadyStateDistribution &pi) {
    std::vector<double> p(chain.states.size(), 0.0);
    for (std::size_t k = 0; k < p.size(); ++k)
        for (int m = 1; m <= chain.stairs(); ++m)
            p[k] += pi.probabilities.at(chain.row(k, m));
    return p;
}

MetricsReport compute_metrics(const SystemChain &chain, const ctmc::SteadyStateDistribution &pi,
                              const MetricsOptions &opts) {
    const ModelConfig &cfg = chain.cfg;
    const WithdrawalSchedule &sched = chain.sched;
    const auto p = macro_distribution(chain, pi);
    const auto streams = arrival_streams(chain.rates);
    const double inflow = chain.rates.total();

    std::array<double, 2> offered{}, blocked{}, first_offered{}, first_blocked{};
    std::array<double, kArrivalFamilies> fam_offered{}, fam_dropped{};
    double frozen = 0.0, capped = 0.0;
    double recover_all = 0.0, recover_failed = 0.0;
    double load_mean = 0.0;
    std::array<double, kArrivalFamilies> users{};

    for (std::size_t k = 0; k < p.size(); ++k) {
        const double w = p[k];
        if (w == 0.0)
            continue;
        const SystemState &s = chain.states[k];
        const int load = cell_load(s, cfg, sched);
        const int idle = idle_users(s, cfg);
        load_mean += w * load;

        for (ConnType t : kConnTypes) {
            const double per_user = cfg.call_rate * cfg.share(t);
            const double all = (idle + s.single_t1 + s.single_t2) * per_user;
            const double first = idle * per_user;
            offered[index(t)] += w * all;
            first_offered[index(t)] += w * first;
            if (!new_call_admissible(load, t, cfg)) {
                blocked[index(t)] += w * all;
                first_blocked[index(t)] += w * first;
            }
        }

        if (idle == 0) {
            capped += w * inflow;
        } else {
            for (const auto &[u, rate] : streams) {
                const std::size_t f = index(family_of(u));
                fam_offered[f] += w * rate;
                switch (handoff_outcome(load, u, cfg, sched)) {
                case HandoffOutcome::Drop: fam_dropped[f] += w * rate; break;
                case HandoffOutcome::AcceptFrozen: frozen += w * rate; break;
                case HandoffOutcome::AcceptFull: break;
                }
            }
        }

        users[0] += w * s.single_t1;
        users[1] += w * s.single_t2;
        for (MultiClass c : kMultiClasses)
            for (int i = 0; i <= sched.final_stage(c); ++i) {
                const int n = s.count(c, i);
                users[2 + index(c)] += w * n;
                if (c == MultiClass::II && n > 0) {
                    const double rate = w * n * cfg.service_rate(foreground_type(c));
                    recover_all += rate;
                    if (!recovery_feasible(load, c, i, cfg, sched))
                        recover_failed += rate;
                }
            }
    }

    MetricsReport r;
    r.provenance = Provenance::Analytic;
    r.stairs = cfg.stairs;
    for (std::size_t t = 0; t < 2; ++t) {
        r.blocking[t].value = ratio(blocked[t], offered[t]);
        r.first_call_blocking[t].value = ratio(first_blocked[t], first_offered[t]);
    }
    double dropped = 0.0, accepted_pool = 0.0;
    for (std::size_t f = 0; f < kArrivalFamilies; ++f) {
        r.family_dropping[f].value = ratio(fam_dropped[f], fam_offered[f]);
        dropped += fam_dropped[f];
        accepted_pool += fam_offered[f];
        r.mean_users[f].value = users[f];
    }
    if (opts.include_cap_rejections) {
        r.handoff_dropping.value = ratio(dropped + capped, accepted_pool + capped);
        r.handoff_freeze.value = ratio(frozen, accepted_pool + capped);
    } else {
        r.handoff_dropping.value = ratio(dropped, accepted_pool);
        r.handoff_freeze.value = ratio(frozen, accepted_pool);
    }
    r.recovering_dropping.value = ratio(recover_failed, recover_all);
    r.cap_rejection_rate.value = capped;
    r.utilization.value = ratio(load_mean, cfg.channels);
    return r;
}

AnalyticResult solve_analytic(const ModelConfig &cfg, const WithdrawalSchedule &sched,
                              const ctmc::SolveOptions &solve, const MetricsOptions &metrics,
                              std::size_t stair_limit) {
    AnalyticResult out;
    out.user = user_steady_state(build_user_chain(cfg, sched), solve);
    out.rates = handoff_rates(cfg, out.user);
    const SystemChain chain = build_system_chain(cfg, sched, out.rates, stair_limit);
    out.states = chain.dimension();
    out.distribution = solve_system(chain, solve);
    out.metrics = compute_metrics(chain, out.distribution, metrics);
    return out;
}

} // namespace tfrc
