#include "tfrc/user_chain.hpp"

#include <numeric>
#include <stdexcept>

namespace tfrc {

std::size_t UserChain::macro_index(const UserState &u) const {
    switch (u.kind) {
    case UserKind::Idle: return 0;
    case UserKind::SingleT1: return 1;
    case UserKind::SingleT2: return 2;
    case UserKind::Multi: break;
    }
    return class_offset_[index(u.cls)] + static_cast<std::size_t>(u.stage);
}

UserChain build_user_chain(const ModelConfig &cfg, const WithdrawalSchedule &sched) {
    UserChain chain;
    chain.stairs = cfg.stairs;
    chain.macro = {UserState::idle(), UserState::single(ConnType::T1),
                   UserState::single(ConnType::T2)};
    for (MultiClass c : kMultiClasses) {
        chain.class_offset_[index(c)] = chain.macro.size();
        for (int i = 0; i <= sched.final_stage(c); ++i)
            chain.macro.push_back(UserState::two(c, i));
    }

    const int m_max = cfg.stairs;
    const double stair_rate = m_max / cfg.feedback_period;
    ctmc::GeneratorBuilder b(chain.macro.size() * static_cast<std::size_t>(m_max));

    for (int m = 1; m <= m_max; ++m) {
        auto add = [&](const UserState &from, const UserState &to, double rate) {
            b.add(chain.row(from, m), chain.row(to, m), rate);
        };
        for (ConnType t : kConnTypes) {
            const UserState single = UserState::single(t);
            add(UserState::idle(), single, cfg.call_rate * cfg.share(t));
            add(single, UserState::idle(), cfg.service_rate(t));
            // The existing connection moves to the background.
            for (ConnType fresh : kConnTypes)
                add(single, UserState::two(multi_class(t, fresh), 0),
                    cfg.call_rate * cfg.share(fresh));
        }
        for (MultiClass c : kMultiClasses) {
            const ConnType bg = background_type(c);
            const ConnType fg = foreground_type(c);
            const double bg_full = cfg.subchannels(bg);
            for (int i = 0; i <= sched.final_stage(c); ++i) {
                const UserState u = UserState::two(c, i);
                add(u, UserState::single(bg), cfg.service_rate(fg));
                add(u, UserState::single(fg),
                    cfg.service_rate(bg) * (1.0 - sched.withdrawn(c, i) / bg_full));
            }
        }
    }

    for (const UserState &u : chain.macro) {
        for (int m = 1; m < m_max; ++m)
            b.add(chain.row(u, m), chain.row(u, m + 1), stair_rate);
        UserState next = u;
        if (u.kind == UserKind::Multi && u.stage < sched.final_stage(u.cls))
            next.stage = u.stage + 1;
        const std::size_t from = chain.row(u, m_max);
        const std::size_t to = chain.row(next, 1);
        if (from != to)
            b.add(from, to, stair_rate);
    }

    chain.generator = std::move(b).finalize();
    return chain;
}

double UserDistribution::operator()(const UserState &u) const {
    switch (u.kind) {
    case UserKind::Idle: return idle;
    case UserKind::SingleT1: return single_t1;
    case UserKind::SingleT2: return single_t2;
    case UserKind::Multi: break;
    }
    return multi[index(u.cls)].at(static_cast<std::size_t>(u.stage));
}

double UserDistribution::total() const {
    double s = idle + single_t1 + single_t2;
    for (const auto &v : multi)
        s = std::accumulate(v.begin(), v.end(), s);
    return s;
}

UserDistribution user_steady_state(const UserChain &chain, const ctmc::SolveOptions &opts) {
    auto dist = ctmc::steady_state_from(chain.generator, chain.row(UserState::idle(), 1), opts);

    UserDistribution out;
    for (const auto &v : chain.macro)
        if (v.kind == UserKind::Multi)
            out.multi[index(v.cls)].push_back(0.0);
    for (const UserState &u : chain.macro) {
        double p = 0.0;
        for (int m = 1; m <= chain.stairs; ++m)
            p += dist.probabilities[chain.row(u, m)];
        switch (u.kind) {
        case UserKind::Idle: out.idle = p; break;
        case UserKind::SingleT1: out.single_t1 = p; break;
        case UserKind::SingleT2: out.single_t2 = p; break;
        case UserKind::Multi: out.multi[index(u.cls)][static_cast<std::size_t>(u.stage)] = p; break;
        }
    }
    return out;
}

double HandoffRates::operator()(const UserState &u) const {
    switch (u.kind) {
    case UserKind::Idle: return 0.0;
    case UserKind::SingleT1: return single_t1;
    case UserKind::SingleT2: return single_t2;
    case UserKind::Multi: break;
    }
    return multi[index(u.cls)].at(static_cast<std::size_t>(u.stage));
}

double HandoffRates::total() const {
    double s = single_t1 + single_t2;
    for (const auto &v : multi)
        s = std::accumulate(v.begin(), v.end(), s);
    return s;
}

HandoffRates handoff_rates(const ModelConfig &cfg, const UserDistribution &pi) {
    const double scale = cfg.users * cfg.mobility_rate;
    HandoffRates r;
    r.single_t1 = scale * pi.single_t1;
    r.single_t2 = scale * pi.single_t2;
    for (MultiClass c : kMultiClasses)
        for (double p : pi.multi[index(c)])
            r.multi[index(c)].push_back(scale * p);
    return r;
}

std::vector<std::pair<UserState, double>> arrival_streams(const HandoffRates &rates) {
    std::vector<std::pair<UserState, double>> out{
        {UserState::single(ConnType::T1), rates.single_t1},
        {UserState::single(ConnType::T2), rates.single_t2}};
    for (MultiClass c : kMultiClasses)
        for (std::size_t i = 0; i < rates.multi[index(c)].size(); ++i)
            out.emplace_back(UserState::two(c, static_cast<int>(i)), rates.multi[index(c)][i]);
    return out;
}

} // namespace tfrc
