#include "tfrc/metrics.hpp"

namespace tfrc {

std::string family_name(std::size_t family) {
    static const std::array<const char *, kArrivalFamilies> names{"single_t1", "single_t2", "I",
                                                                  "II",        "III",       "IV"};
    return names.at(family);
}

std::vector<std::pair<std::string, Estimate>> metric_table(const MetricsReport &r) {
    std::vector<std::pair<std::string, Estimate>> t;
    t.emplace_back("blocking_t1", r.blocking[0]);
    t.emplace_back("blocking_t2", r.blocking[1]);
    t.emplace_back("first_call_blocking_t1", r.first_call_blocking[0]);
    t.emplace_back("first_call_blocking_t2", r.first_call_blocking[1]);
    t.emplace_back("handoff_dropping", r.handoff_dropping);
    for (std::size_t f = 0; f < kArrivalFamilies; ++f)
        t.emplace_back("handoff_dropping_" + family_name(f), r.family_dropping[f]);
    t.emplace_back("handoff_freeze", r.handoff_freeze);
    t.emplace_back("recovering_dropping", r.recovering_dropping);
    t.emplace_back("cap_rejection_rate", r.cap_rejection_rate);
    t.emplace_back("utilization", r.utilization);
    for (std::size_t f = 0; f < kArrivalFamilies; ++f)
        t.emplace_back("mean_users_" + family_name(f), r.mean_users[f]);
    return t;
}

std::optional<Estimate> find_metric(const MetricsReport &r, const std::string &name) {
    for (auto &[n, e] : metric_table(r))
        if (n == name)
            return e;
    return std::nullopt;
}

} // namespace tfrc
