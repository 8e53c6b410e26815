#pragma once

#include "tfrc/model.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tfrc {

/// Handoff arrivals grouped by the arriving user's set (stages pooled).
enum class ArrivalFamily { SingleT1 = 0, SingleT2, I, II, III, IV };
inline constexpr std::size_t kArrivalFamilies = 6;

constexpr std::size_t index(ArrivalFamily f) noexcept { return static_cast<std::size_t>(f); }

constexpr ArrivalFamily family_of(const UserState &u) noexcept {
    switch (u.kind) {
    case UserKind::SingleT1: return ArrivalFamily::SingleT1;
    case UserKind::SingleT2: return ArrivalFamily::SingleT2;
    default: break;
    }
    return static_cast<ArrivalFamily>(2 + index(u.cls));
}

/// Suffix used in metric names: single_t1, single_t2, I, II, III, IV.
std::string family_name(std::size_t family);

/// A metric value; `value` is empty when its denominator was zero.
struct Estimate {
    std::optional<double> value;
    std::optional<double> half_width; ///< 95% CI half-width (simulated only)

    bool defined() const noexcept { return value.has_value(); }
};

/// Ratio with an explicit undefined marker for a zero denominator.
inline std::optional<double> ratio(double num, double den) {
    if (den == 0.0)
        return std::nullopt;
    return num / den;
}

enum class Provenance { Analytic, Simulated };

/// Steady-state performance figures. Probabilities are dimensionless;
/// cap_rejection_rate is in 1/s; mean_users is an average count per user set
/// (single_t1, single_t2, I, II, III, IV).
struct MetricsReport {
    Provenance provenance = Provenance::Analytic;
    int stairs = 0;                 ///< analytic only
    std::size_t replications = 0;   ///< simulated only

    std::array<Estimate, 2> blocking;            ///< per new-call type, all initiators
    std::array<Estimate, 2> first_call_blocking; ///< per type, initiated by idle users only
    Estimate handoff_dropping;
    std::array<Estimate, kArrivalFamilies> family_dropping;
    Estimate handoff_freeze;
    Estimate recovering_dropping;
    Estimate cap_rejection_rate;
    Estimate utilization;
    std::array<Estimate, kArrivalFamilies> mean_users;
};

/// Flat (name, estimate) view in a fixed order, used for serialization and comparison.
std::vector<std::pair<std::string, Estimate>> metric_table(const MetricsReport &r);

/// The five headline metrics compared between analytic and simulated runs.
inline const std::array<std::string, 5> kHeadlineMetrics{
    "blocking_t1", "blocking_t2", "handoff_dropping", "recovering_dropping", "utilization"};

std::optional<Estimate> find_metric(const MetricsReport &r, const std::string &name);

} // namespace tfrc
