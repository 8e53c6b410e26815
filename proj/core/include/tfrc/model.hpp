#pragma once

// Domain types for a single cell running the double-threshold guard-channel
// policy with time-frequency resource conversion (TFRC): users hold at most
// two connections, and the background one loses subchannels every feedback
// period until it is frozen.

#include <array>
#include <compare>
#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

namespace tfrc {

/// Wide-band (T1) or narrow-band (T2) connection.
enum class ConnType { T1 = 0, T2 = 1 };

/// Two-connection user sets, named by (background type, foreground type):
/// I = (T1, T1), II = (T1, T2), III = (T2, T1), IV = (T2, T2).
enum class MultiClass { I = 0, II = 1, III = 2, IV = 3 };

inline constexpr std::array<MultiClass, 4> kMultiClasses{MultiClass::I, MultiClass::II,
                                                         MultiClass::III, MultiClass::IV};
inline constexpr std::array<ConnType, 2> kConnTypes{ConnType::T1, ConnType::T2};

constexpr std::size_t index(MultiClass c) noexcept { return static_cast<std::size_t>(c); }
constexpr std::size_t index(ConnType t) noexcept { return static_cast<std::size_t>(t); }

constexpr ConnType background_type(MultiClass c) noexcept {
    return (c == MultiClass::I || c == MultiClass::II) ? ConnType::T1 : ConnType::T2;
}

constexpr ConnType foreground_type(MultiClass c) noexcept {
    return (c == MultiClass::I || c == MultiClass::III) ? ConnType::T1 : ConnType::T2;
}

constexpr MultiClass multi_class(ConnType background, ConnType foreground) noexcept {
    if (background == ConnType::T1)
        return foreground == ConnType::T1 ? MultiClass::I : MultiClass::II;
    return foreground == ConnType::T1 ? MultiClass::III : MultiClass::IV;
}

std::string_view to_string(MultiClass c) noexcept;
std::string_view to_string(ConnType t) noexcept;

/// All scalar model parameters. Rates are per second.
struct ModelConfig {
    int channels = 8;          ///< subchannels per cell
    int recovery_reserve = 1;  ///< held back for recovering calls only
    int handoff_reserve = 2;   ///< held back for recovering and handoff calls
    int t1_subchannels = 2;
    int t2_subchannels = 1;
    double call_rate = 0.5;    ///< per-user connection initiation rate
    double t1_share = 0.5;     ///< probability a new connection is T1
    double t2_share = 0.5;
    double t1_service_rate = 1.0;
    double t2_service_rate = 1.0;
    double mobility_rate = 0.2; ///< reciprocal mean cell residence time
    int users = 4;
    double feedback_period = 1.0;
    int stairs = 16;            ///< substates per state in the multi-stair approximation
    int withdrawal_step = 1;    ///< subchannels withdrawn per feedback period
    double subchannel_bitrate = 1.0;

    /// Throws ConfigError naming the first violated field.
    void validate() const;

    int subchannels(ConnType t) const noexcept {
        return t == ConnType::T1 ? t1_subchannels : t2_subchannels;
    }
    double share(ConnType t) const noexcept { return t == ConnType::T1 ? t1_share : t2_share; }
    double service_rate(ConnType t) const noexcept {
        return t == ConnType::T1 ? t1_service_rate : t2_service_rate;
    }

    bool operator==(const ModelConfig &) const = default;
};

/// Cumulative subchannels withdrawn from the background connection at each
/// conversion stage, per class. Stage 0 withdraws nothing; the final stage
/// withdraws the whole background allocation (frozen).
class WithdrawalSchedule {
  public:
    WithdrawalSchedule() = default;

    /// Validates `per_class` against `cfg`; throws ConfigError("schedule.<class>", ...).
    WithdrawalSchedule(std::array<std::vector<int>, 4> per_class, const ModelConfig &cfg);

    int final_stage(MultiClass c) const noexcept {
        return static_cast<int>(withdrawn_[index(c)].size()) - 1;
    }
    int withdrawn(MultiClass c, int stage) const { return withdrawn_[index(c)].at(stage); }
    const std::vector<int> &stages(MultiClass c) const noexcept { return withdrawn_[index(c)]; }
    const std::array<std::vector<int>, 4> &all() const noexcept { return withdrawn_; }

    bool operator==(const WithdrawalSchedule &) const = default;

  private:
    std::array<std::vector<int>, 4> withdrawn_;
};

/// Stage counts ceil(background / step), withdrawing min(i * step, background).
WithdrawalSchedule default_schedule(const ModelConfig &cfg);

/// Cell occupancy: single-connection counts and per-stage two-connection counts.
/// Ordering is lexicographic over (single_t1, single_t2, multi[I..IV]).
struct SystemState {
    int single_t1 = 0;
    int single_t2 = 0;
    std::array<std::vector<int>, 4> multi;

    static SystemState empty(const WithdrawalSchedule &sched);

    int &count(MultiClass c, int stage) { return multi[index(c)].at(stage); }
    int count(MultiClass c, int stage) const { return multi[index(c)].at(stage); }
    int &single(ConnType t) { return t == ConnType::T1 ? single_t1 : single_t2; }
    int single(ConnType t) const { return t == ConnType::T1 ? single_t1 : single_t2; }

    auto operator<=>(const SystemState &) const = default;
    bool operator==(const SystemState &) const = default;
};

enum class UserKind { Idle, SingleT1, SingleT2, Multi };

/// One point of the per-user state space.
struct UserState {
    UserKind kind = UserKind::Idle;
    MultiClass cls = MultiClass::I;
    int stage = 0;

    static constexpr UserState idle() noexcept { return {}; }
    static constexpr UserState single(ConnType t) noexcept {
        return {t == ConnType::T1 ? UserKind::SingleT1 : UserKind::SingleT2, MultiClass::I, 0};
    }
    static constexpr UserState two(MultiClass c, int stage) noexcept {
        return {UserKind::Multi, c, stage};
    }

    bool operator==(const UserState &o) const noexcept {
        if (kind != o.kind)
            return false;
        return kind != UserKind::Multi || (cls == o.cls && stage == o.stage);
    }
};

/// Subchannels held by a user in state `u`.
int occupied_subchannels(const UserState &u, const ModelConfig &cfg,
                         const WithdrawalSchedule &sched);

int busy_users(const SystemState &s) noexcept;

/// R(S): total subchannels in use.
int cell_load(const SystemState &s, const ModelConfig &cfg, const WithdrawalSchedule &sched);

/// Users holding no connection. Throws InfeasibleState if more than `cfg.users` are busy.
int idle_users(const SystemState &s, const ModelConfig &cfg);

/// One feedback instant: every two-connection user advances one stage; the final stage absorbs.
SystemState convert(const SystemState &s);

inline constexpr std::size_t kDefaultStairStateLimit = 5'000'000;

/// Every state with cell_load <= channels and busy_users <= users, sorted
/// lexicographically. Throws CapacityExplosion if count * cfg.stairs exceeds `stair_limit`.
std::vector<SystemState> enumerate_states(const ModelConfig &cfg, const WithdrawalSchedule &sched,
                                          std::size_t stair_limit = kDefaultStairStateLimit);

/// Position of `s` in an enumerate_states() result, or nullopt if absent.
std::optional<std::size_t> find_state(const std::vector<SystemState> &states,
                                      const SystemState &s);

bool new_call_admissible(int load, ConnType type, const ModelConfig &cfg);
bool new_call_admissible(const SystemState &s, ConnType type, const ModelConfig &cfg,
                         const WithdrawalSchedule &sched);

enum class HandoffOutcome { AcceptFull, AcceptFrozen, Drop };

/// Admission decision for a handoff user. `arriving` must not be idle.
HandoffOutcome handoff_outcome(int load, const UserState &arriving, const ModelConfig &cfg,
                               const WithdrawalSchedule &sched);
HandoffOutcome handoff_outcome(const SystemState &s, const UserState &arriving,
                               const ModelConfig &cfg, const WithdrawalSchedule &sched);

/// Whether restoring a class-`c` background at `stage` fits when its foreground ends.
bool recovery_feasible(int load, MultiClass c, int stage, const ModelConfig &cfg,
                       const WithdrawalSchedule &sched);

} // namespace tfrc
