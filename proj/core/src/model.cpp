#include "tfrc/model.hpp"

#include "tfrc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tfrc {

std::string_view to_string(MultiClass c) noexcept {
    switch (c) {
    case MultiClass::I: return "I";
    case MultiClass::II: return "II";
    case MultiClass::III: return "III";
    case MultiClass::IV: return "IV";
    }
    return "?";
}

std::string_view to_string(ConnType t) noexcept { return t == ConnType::T1 ? "T1" : "T2"; }

namespace {

void require(bool ok, const char *field, const std::string &why) {
    if (!ok)
        throw ConfigError(field, why);
}

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }
bool nonnegative_finite(double v) { return std::isfinite(v) && v >= 0.0; }

} // namespace

void ModelConfig::validate() const {
    require(channels >= 0, "channels", "must be >= 0");
    require(recovery_reserve >= 0, "recovery_reserve", "must be >= 0");
    require(recovery_reserve <= handoff_reserve, "recovery_reserve",
            "nesting rule violated: recovery_reserve must not exceed handoff_reserve");
    require(handoff_reserve <= channels, "handoff_reserve",
            "nesting rule violated: handoff_reserve must not exceed channels");
    require(t2_subchannels >= 1, "t2_subchannels", "must be >= 1");
    require(t1_subchannels > t2_subchannels, "t1_subchannels",
            "must be greater than t2_subchannels");
    require(nonnegative_finite(t1_share), "t1_share", "must be a probability");
    require(nonnegative_finite(t2_share), "t2_share", "must be a probability");
    require(std::abs(t1_share + t2_share - 1.0) <= 1e-12, "t2_share",
            "t1_share + t2_share must equal 1");
    require(nonnegative_finite(call_rate), "call_rate", "must be >= 0");
    require(positive_finite(t1_service_rate), "t1_service_rate", "must be > 0");
    require(positive_finite(t2_service_rate), "t2_service_rate", "must be > 0");
    require(nonnegative_finite(mobility_rate), "mobility_rate", "must be >= 0");
    require(users >= 0, "users", "must be >= 0");
    require(positive_finite(feedback_period), "feedback_period", "must be > 0");
    require(stairs >= 1, "stairs", "must be >= 1");
    require(withdrawal_step >= 1, "withdrawal_step", "must be >= 1");
    require(positive_finite(subchannel_bitrate), "subchannel_bitrate", "must be > 0");
}

WithdrawalSchedule::WithdrawalSchedule(std::array<std::vector<int>, 4> per_class,
                                       const ModelConfig &cfg)
    : withdrawn_(std::move(per_class)) {
    for (MultiClass c : kMultiClasses) {
        const std::string field = "schedule." + std::string(to_string(c));
        const auto &w = withdrawn_[index(c)];
        const int full = cfg.subchannels(background_type(c));
        if (w.size() < 2)
            throw ConfigError(field, "needs at least two stages");
        if (w.front() != 0)
            throw ConfigError(field, "stage 0 must withdraw nothing");
        if (w.back() != full)
            throw ConfigError(field, "final stage must withdraw all " + std::to_string(full) +
                                         " background subchannels");
        if (std::adjacent_find(w.begin(), w.end(), std::greater_equal<>{}) != w.end())
            throw ConfigError(field, "withdrawn amounts must be strictly increasing");
    }
}

WithdrawalSchedule default_schedule(const ModelConfig &cfg) {
    std::array<std::vector<int>, 4> per_class;
    for (MultiClass c : kMultiClasses) {
        const int full = cfg.subchannels(background_type(c));
        const int last = (full + cfg.withdrawal_step - 1) / cfg.withdrawal_step;
        auto &w = per_class[index(c)];
        for (int i = 0; i <= last; ++i)
            w.push_back(std::min(i * cfg.withdrawal_step, full));
    }
    return WithdrawalSchedule(std::move(per_class), cfg);
}

SystemState SystemState::empty(const WithdrawalSchedule &sched) {
    SystemState s;
    for (MultiClass c : kMultiClasses)
        s.multi[index(c)].assign(sched.final_stage(c) + 1, 0);
    return s;
}

int occupied_subchannels(const UserState &u, const ModelConfig &cfg,
                         const WithdrawalSchedule &sched) {
    switch (u.kind) {
    case UserKind::Idle: return 0;
    case UserKind::SingleT1: return cfg.t1_subchannels;
    case UserKind::SingleT2: return cfg.t2_subchannels;
    case UserKind::Multi:
        return cfg.subchannels(background_type(u.cls)) - sched.withdrawn(u.cls, u.stage) +
               cfg.subchannels(foreground_type(u.cls));
    }
    return 0;
}

int busy_users(const SystemState &s) noexcept {
    int busy = s.single_t1 + s.single_t2;
    for (const auto &v : s.multi)
        busy = std::accumulate(v.begin(), v.end(), busy);
    return busy;
}

int cell_load(const SystemState &s, const ModelConfig &cfg, const WithdrawalSchedule &sched) {
    int load = s.single_t1 * cfg.t1_subchannels + s.single_t2 * cfg.t2_subchannels;
    for (MultiClass c : kMultiClasses) {
        const auto &v = s.multi[index(c)];
        for (int i = 0; i < static_cast<int>(v.size()); ++i)
            if (v[i] != 0)
                load += v[i] * occupied_subchannels(UserState::two(c, i), cfg, sched);
    }
    return load;
}

int idle_users(const SystemState &s, const ModelConfig &cfg) {
    const int busy = busy_users(s);
    if (busy > cfg.users)
        throw InfeasibleState("busy users " + std::to_string(busy) + " exceed population " +
                              std::to_string(cfg.users));
    return cfg.users - busy;
}

SystemState convert(const SystemState &s) {
    SystemState out = s;
    for (auto &v : out.multi) {
        if (v.size() < 2)
            continue;
        const int frozen = v.back() + v[v.size() - 2];
        for (std::size_t i = v.size() - 2; i > 0; --i)
            v[i] = v[i - 1];
        v[0] = 0;
        v.back() = frozen;
    }
    return out;
}

namespace {

struct Enumerator {
    const ModelConfig &cfg;
    std::size_t stair_limit;
    std::vector<int> weights;  // per flattened field
    std::vector<int> counts;
    std::vector<std::vector<int>> found;

    void run(std::size_t field, int busy, int load) {
        if (field == weights.size()) {
            found.push_back(counts);
            if (found.size() * static_cast<std::size_t>(cfg.stairs) > stair_limit)
                throw CapacityExplosion(found.size() * static_cast<std::size_t>(cfg.stairs),
                                        stair_limit);
            return;
        }
        for (int n = 0; busy + n <= cfg.users && load + n * weights[field] <= cfg.channels;
             ++n) {
            counts[field] = n;
            run(field + 1, busy + n, load + n * weights[field]);
        }
        counts[field] = 0;
    }
};

} // namespace

std::vector<SystemState> enumerate_states(const ModelConfig &cfg, const WithdrawalSchedule &sched,
                                          std::size_t stair_limit) {
    Enumerator e{cfg, stair_limit, {}, {}, {}};
    e.weights = {cfg.t1_subchannels, cfg.t2_subchannels};
    for (MultiClass c : kMultiClasses)
        for (int i = 0; i <= sched.final_stage(c); ++i)
            e.weights.push_back(occupied_subchannels(UserState::two(c, i), cfg, sched));
    e.counts.assign(e.weights.size(), 0);
    e.run(0, 0, 0);

    std::vector<SystemState> states;
    states.reserve(e.found.size());
    for (const auto &flat : e.found) {
        SystemState s = SystemState::empty(sched);
        s.single_t1 = flat[0];
        s.single_t2 = flat[1];
        std::size_t k = 2;
        for (auto &v : s.multi)
            for (int &n : v)
                n = flat[k++];
        states.push_back(std::move(s));
    }
    return states;
}

std::optional<std::size_t> find_state(const std::vector<SystemState> &states,
                                      const SystemState &s) {
    auto it = std::lower_bound(states.begin(), states.end(), s);
    if (it == states.end() || *it != s)
        return std::nullopt;
    return static_cast<std::size_t>(it - states.begin());
}

bool new_call_admissible(int load, ConnType type, const ModelConfig &cfg) {
    return load + cfg.subchannels(type) <= cfg.channels - cfg.handoff_reserve;
}

bool new_call_admissible(const SystemState &s, ConnType type, const ModelConfig &cfg,
                         const WithdrawalSchedule &sched) {
    return new_call_admissible(cell_load(s, cfg, sched), type, cfg);
}

HandoffOutcome handoff_outcome(int load, const UserState &arriving, const ModelConfig &cfg,
                               const WithdrawalSchedule &sched) {
    const int limit = cfg.channels - cfg.recovery_reserve;
    switch (arriving.kind) {
    case UserKind::Idle: throw std::invalid_argument("handoff_outcome: idle user cannot hand off");
    case UserKind::SingleT1:
    case UserKind::SingleT2:
        return load + occupied_subchannels(arriving, cfg, sched) <= limit ? HandoffOutcome::AcceptFull
                                                                          : HandoffOutcome::Drop;
    case UserKind::Multi: break;
    }
    if (load + occupied_subchannels(arriving, cfg, sched) <= limit)
        return HandoffOutcome::AcceptFull;
    if (arriving.stage < sched.final_stage(arriving.cls) &&
        load + cfg.subchannels(foreground_type(arriving.cls)) <= limit)
        return HandoffOutcome::AcceptFrozen;
    return HandoffOutcome::Drop;
}

HandoffOutcome handoff_outcome(const SystemState &s, const UserState &arriving,
                               const ModelConfig &cfg, const WithdrawalSchedule &sched) {
    return handoff_outcome(cell_load(s, cfg, sched), arriving, cfg, sched);
}

bool recovery_feasible(int load, MultiClass c, int stage, const ModelConfig &cfg,
                       const WithdrawalSchedule &sched) {
    return load + sched.withdrawn(c, stage) - cfg.subchannels(foreground_type(c)) <= cfg.channels;
}

} // namespace tfrc
