#include "tfrc/des.hpp"

#include "tfrc/errors.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>

namespace tfrc::des {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Independent random streams; adding a stream must not perturb existing ones.
enum Stream : std::uint32_t {
    kIdleCalls,
    kSingleCalls,
    kTypeChoice,
    kHandoffClock,
    kHandoffChoice,
    kDepartures,
    kWork,
    kUserPick,
    kStreamCount
};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct Clock {
    double rate = 0.0;
    double next = kInf;
};

class Simulator {
  public:
    Simulator(const ModelConfig &cfg, const WithdrawalSchedule &sched, const HandoffRates &rates,
              const RunOptions &opts)
        : cfg_(cfg), sched_(sched), opts_(opts), streams_(arrival_streams(rates)),
          warmup_(opts.warmup_fraction * opts.horizon), next_conversion_(cfg.feedback_period) {
        for (std::uint32_t s = 0; s < kStreamCount; ++s) {
            std::seed_seq seq{static_cast<std::uint32_t>(opts.seed),
                              static_cast<std::uint32_t>(opts.seed >> 32), s};
            rng_[s].seed(seq);
        }
        std::vector<double> weights;
        for (const auto &st : streams_) {
            weights.push_back(st.second);
            handoff_total_ += st.second;
        }
        if (handoff_total_ > 0.0)
            pick_stream_ = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
        state_ = SystemState::empty(sched_);
    }

    SimStats run() {
        stats_.seed = opts_.seed;
        refresh_state();
        update_clocks(nullptr);

        for (;;) {
            std::size_t cu = 0, cc = 0;
            double t_done = kInf;
            for (std::size_t u = 0; u < users_.size(); ++u)
                for (std::size_t c = 0; c < users_[u].connections.size(); ++c) {
                    const double t = completion_time(users_[u].connections[c]);
                    if (t < t_done) {
                        t_done = t;
                        cu = u;
                        cc = c;
                    }
                }

            const double t = std::min({t_done, next_conversion_, idle_calls_.next,
                                       single_calls_.next, departures_.next, handoffs_.next});
            if (t >= opts_.horizon) {
                integrate(opts_.horizon);
                break;
            }
            integrate(t);
            now_ = t;

            Clock *fired = nullptr;
            const char *what = nullptr;
            if (t == t_done) {
                what = complete(cu, cc);
            } else if (t == next_conversion_) {
                convert_all();
                what = "conversion";
            } else if (t == idle_calls_.next) {
                fired = &idle_calls_;
                what = idle_call();
            } else if (t == single_calls_.next) {
                fired = &single_calls_;
                what = single_call();
            } else if (t == departures_.next) {
                fired = &departures_;
                depart();
                what = "departure";
            } else {
                fired = &handoffs_;
                what = handoff();
            }
            if (counting())
                ++stats_.events;
            refresh_state();
            update_clocks(fired);
            if (opts_.trace)
                trace(what);
        }
        stats_.observed_time = opts_.horizon - std::min(warmup_, opts_.horizon);
        return std::move(stats_);
    }

  private:
    bool counting() const { return now_ >= warmup_; }

    double draw_exp(Stream s, double rate) {
        return std::exponential_distribution<double>(rate)(rng_[s]);
    }

    ConnType draw_type() {
        return std::bernoulli_distribution(cfg_.t1_share)(rng_[kTypeChoice]) ? ConnType::T1
                                                                              : ConnType::T2;
    }

    SimConnection open(ConnType type, Role role, int allocated, int owner) {
        SimConnection c;
        c.type = type;
        c.role = role;
        c.allocated = allocated;
        c.owner = owner;
        c.nominal = draw_exp(kWork, cfg_.service_rate(type));
        c.remaining_bits = cfg_.subchannels(type) * cfg_.subchannel_bitrate * c.nominal;
        c.updated = now_;
        c.started = now_;
        c.reduced = allocated < cfg_.subchannels(type);
        return c;
    }

    void advance(SimConnection &c) const {
        c.remaining_bits -= c.allocated * cfg_.subchannel_bitrate * (now_ - c.updated);
        c.updated = now_;
    }

    double completion_time(const SimConnection &c) const {
        if (c.allocated == 0)
            return kInf;
        return c.updated + c.remaining_bits / (c.allocated * cfg_.subchannel_bitrate);
    }

    void set_allocation(SimConnection &c, int allocated) {
        advance(c);
        c.allocated = allocated;
        if (allocated < cfg_.subchannels(c.type))
            c.reduced = true;
    }

    int background_allocation(MultiClass cls, int stage) const {
        return cfg_.subchannels(background_type(cls)) - sched_.withdrawn(cls, stage);
    }

    void integrate(double t) {
        const double a = std::max(now_, warmup_);
        if (t <= a)
            return;
        const double dt = t - a;
        stats_.load_integral += load_ * dt;
        stats_.user_integral[0] += state_.single_t1 * dt;
        stats_.user_integral[1] += state_.single_t2 * dt;
        for (MultiClass c : kMultiClasses)
            for (int n : state_.multi[index(c)])
                stats_.user_integral[2 + index(c)] += n * dt;
    }

    // Rebuilds the occupancy vector from the user list and checks allocations.
    void refresh_state() {
        SystemState s = SystemState::empty(sched_);
        int allocated = 0;
        for (const SimUser &u : users_) {
            int mine = 0;
            for (const SimConnection &c : u.connections) {
                if (c.allocated < 0 || c.allocated > cfg_.subchannels(c.type))
                    throw SimulationAssertion("connection allocation out of range");
                mine += c.allocated;
            }
            if (mine != occupied_subchannels(u.state, cfg_, sched_))
                throw SimulationAssertion("user " + std::to_string(u.id) +
                                          " allocation does not match its state");
            allocated += mine;
            switch (u.state.kind) {
            case UserKind::SingleT1: ++s.single_t1; break;
            case UserKind::SingleT2: ++s.single_t2; break;
            case UserKind::Multi: ++s.count(u.state.cls, u.state.stage); break;
            case UserKind::Idle: throw SimulationAssertion("idle user in the busy list");
            }
        }
        state_ = std::move(s);
        load_ = cell_load(state_, cfg_, sched_);
        if (allocated != load_ || load_ > cfg_.channels)
            throw SimulationAssertion("cell load " + std::to_string(load_) + " inconsistent");
        if (static_cast<int>(users_.size()) > cfg_.users)
            throw SimulationAssertion("busy users exceed population");
        if (counting())
            stats_.peak_load = std::max(stats_.peak_load, load_);
    }

    void reset(Clock &c, Stream s, double rate, bool force) {
        if (!force && rate == c.rate)
            return;
        c.rate = rate;
        c.next = rate > 0.0 ? now_ + draw_exp(s, rate) : kInf;
    }

    void update_clocks(const Clock *fired) {
        const int busy = static_cast<int>(users_.size());
        const int singles = state_.single_t1 + state_.single_t2;
        const bool all = fired == nullptr && now_ == 0.0;
        reset(idle_calls_, kIdleCalls, (cfg_.users - busy) * cfg_.call_rate,
              all || fired == &idle_calls_);
        reset(single_calls_, kSingleCalls, singles * cfg_.call_rate,
              all || fired == &single_calls_);
        reset(departures_, kDepartures, busy * cfg_.mobility_rate, all || fired == &departures_);
        reset(handoffs_, kHandoffClock, handoff_total_, all || fired == &handoffs_);
    }

    void convert_all() {
        for (SimUser &u : users_) {
            if (u.state.kind != UserKind::Multi || u.state.stage == sched_.final_stage(u.state.cls))
                continue;
            ++u.state.stage;
            set_allocation(u.connections[1], background_allocation(u.state.cls, u.state.stage));
        }
        ++conversions_;
        next_conversion_ = static_cast<double>(conversions_ + 1) * cfg_.feedback_period;
    }

    const char *idle_call() {
        const ConnType t = draw_type();
        const bool ok = new_call_admissible(load_, t, cfg_);
        if (counting()) {
            ++stats_.new_offered[index(t)];
            ++stats_.first_offered[index(t)];
            if (!ok) {
                ++stats_.new_blocked[index(t)];
                ++stats_.first_blocked[index(t)];
            }
        }
        if (!ok)
            return "new_call_blocked";
        if (counting())
            ++stats_.new_accepted[index(t)];
        SimUser u;
        u.id = next_id_++;
        u.state = UserState::single(t);
        u.connections.push_back(open(t, Role::Foreground, cfg_.subchannels(t), u.id));
        users_.push_back(std::move(u));
        return "new_call";
    }

    const char *single_call() {
        std::vector<std::size_t> singles;
        for (std::size_t k = 0; k < users_.size(); ++k)
            if (users_[k].state.kind == UserKind::SingleT1 ||
                users_[k].state.kind == UserKind::SingleT2)
                singles.push_back(k);
        if (singles.empty())
            throw SimulationAssertion("second-call clock fired with no single-connection user");
        SimUser &u = users_[singles[std::uniform_int_distribution<std::size_t>(
            0, singles.size() - 1)(rng_[kUserPick])]];

        const ConnType t = draw_type();
        const bool ok = new_call_admissible(load_, t, cfg_);
        if (counting()) {
            ++stats_.new_offered[index(t)];
            if (!ok)
                ++stats_.new_blocked[index(t)];
        }
        if (!ok)
            return "new_call_blocked";
        if (counting())
            ++stats_.new_accepted[index(t)];
        const ConnType held = u.connections[0].type;
        u.state = UserState::two(multi_class(held, t), 0);
        u.connections[0].role = Role::Background;
        u.connections.insert(u.connections.begin(),
                             open(t, Role::Foreground, cfg_.subchannels(t), u.id));
        return "new_call";
    }

    void depart() {
        if (users_.empty())
            throw SimulationAssertion("departure clock fired with no busy user");
        const auto k =
            std::uniform_int_distribution<std::size_t>(0, users_.size() - 1)(rng_[kUserPick]);
        users_.erase(users_.begin() + static_cast<std::ptrdiff_t>(k));
    }

    const char *handoff() {
        const UserState u = streams_[pick_stream_(rng_[kHandoffChoice])].first;
        const std::size_t f = index(family_of(u));
        if (counting())
            ++stats_.handoff_offered[f];
        if (static_cast<int>(users_.size()) >= cfg_.users) {
            if (counting())
                ++stats_.handoff_capped[f];
            return "handoff_capped";
        }
        const HandoffOutcome outcome = handoff_outcome(load_, u, cfg_, sched_);
        if (outcome == HandoffOutcome::Drop) {
            if (counting())
                ++stats_.handoff_dropped[f];
            return "handoff_dropped";
        }

        SimUser user;
        user.id = next_id_++;
        user.state = u;
        if (u.kind != UserKind::Multi) {
            const ConnType t = u.kind == UserKind::SingleT1 ? ConnType::T1 : ConnType::T2;
            user.connections.push_back(open(t, Role::Foreground, cfg_.subchannels(t), user.id));
        } else {
            if (outcome == HandoffOutcome::AcceptFrozen)
                user.state.stage = sched_.final_stage(u.cls);
            const ConnType fg = foreground_type(u.cls);
            user.connections.push_back(open(fg, Role::Foreground, cfg_.subchannels(fg), user.id));
            user.connections.push_back(open(background_type(u.cls), Role::Background,
                                            background_allocation(u.cls, user.state.stage),
                                            user.id));
        }
        users_.push_back(std::move(user));
        if (counting())
            ++(outcome == HandoffOutcome::AcceptFull ? stats_.handoff_full : stats_.handoff_frozen)[f];
        return outcome == HandoffOutcome::AcceptFull ? "handoff_full" : "handoff_frozen";
    }

    const char *complete(std::size_t ui, std::size_t ci) {
        SimUser &u = users_[ui];
        for (SimConnection &c : u.connections)
            advance(c);
        const SimConnection &done = u.connections[ci];
        if (!done.reduced && counting()) {
            ++stats_.conservation_checked;
            stats_.conservation_error = std::max(
                stats_.conservation_error, std::abs((now_ - done.started) - done.nominal));
        }

        if (u.connections.size() == 1) {
            users_.erase(users_.begin() + static_cast<std::ptrdiff_t>(ui));
            return "completion";
        }
        if (ci == 1) {
            u.connections.pop_back();
            u.state = UserState::single(u.connections[0].type);
            return "completion_background";
        }

        const MultiClass cls = u.state.cls;
        const bool ok = recovery_feasible(load_, cls, u.state.stage, cfg_, sched_);
        if (counting()) {
            ++stats_.recovery_attempts[index(cls)];
            if (!ok)
                ++stats_.recovery_failures[index(cls)];
        }
        if (!ok) {
            users_.erase(users_.begin() + static_cast<std::ptrdiff_t>(ui));
            return "recovery_failed";
        }
        SimConnection restored = u.connections[1];
        restored.allocated = cfg_.subchannels(restored.type);
        restored.role = Role::Foreground;
        if (restored.reduced && counting())
            stats_.post_recovery[index(restored.type)].push_back(restored.remaining_work(cfg_));
        u.connections.assign(1, restored);
        u.state = UserState::single(restored.type);
        return "completion_recovered";
    }

    void trace(const char *what) {
        std::string digest = std::to_string(state_.single_t1) + "," +
                             std::to_string(state_.single_t2);
        for (MultiClass c : kMultiClasses) {
            digest += "|";
            digest += to_string(c);
            digest += ":";
            const auto &v = state_.multi[index(c)];
            for (std::size_t i = 0; i < v.size(); ++i)
                digest += (i ? "," : "") + std::to_string(v[i]);
        }
        digest += "|load=" + std::to_string(load_);
        char t[32];
        std::snprintf(t, sizeof t, "%.9f", now_);
        *opts_.trace << t << ' ' << what << ' ' << digest << '\n';
    }

    const ModelConfig &cfg_;
    const WithdrawalSchedule &sched_;
    const RunOptions &opts_;
    std::vector<std::pair<UserState, double>> streams_;
    std::discrete_distribution<std::size_t> pick_stream_;
    double handoff_total_ = 0.0;
    std::array<std::mt19937_64, kStreamCount> rng_;

    double now_ = 0.0;
    double warmup_;
    double next_conversion_;
    std::uint64_t conversions_ = 0;
    Clock idle_calls_, single_calls_, departures_, handoffs_;

    std::vector<SimUser> users_;
    int next_id_ = 0;
    SystemState state_;
    int load_ = 0;
    SimStats stats_;
};

struct Pooled {
    double num = 0.0;
    double den = 0.0;
    std::vector<double> per_rep;
};

double t_quantile(std::size_t n) {
    boost::math::students_t dist(static_cast<double>(n - 1));
    return boost::math::quantile(boost::math::complement(dist, 0.025));
}

Estimate finish(const Pooled &p) {
    Estimate e;
    e.value = ratio(p.num, p.den);
    const std::size_t n = p.per_rep.size();
    if (e.value && n >= 2) {
        // Shifted by the first value so identical replications give exactly zero.
        const double shift = p.per_rep.front();
        double mean = 0.0;
        for (double v : p.per_rep)
            mean += v - shift;
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (double v : p.per_rep)
            ss += (v - shift - mean) * (v - shift - mean);
        const double sd = std::sqrt(ss / static_cast<double>(n - 1));
        e.half_width = t_quantile(n) * sd / std::sqrt(static_cast<double>(n));
    }
    return e;
}

void add(Pooled &p, double num, double den) {
    p.num += num;
    p.den += den;
    if (den > 0.0)
        p.per_rep.push_back(num / den);
}

} // namespace

SimStats run(const ModelConfig &cfg, const WithdrawalSchedule &sched, const HandoffRates &rates,
             const RunOptions &opts) {
    if (!(opts.horizon > 0.0))
        throw std::invalid_argument("simulation horizon must be positive");
    Simulator sim(cfg, sched, rates, opts);
    return sim.run();
}

std::uint64_t replication_seed(std::uint64_t master, std::size_t k) {
    return splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(k)));
}

std::vector<SimStats> run_replications(const ModelConfig &cfg, const WithdrawalSchedule &sched,
                                       const HandoffRates &rates, const ReplicationOptions &opts) {
    std::vector<SimStats> out(opts.replications);
    unsigned workers = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, opts.replications)));

    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(opts.replications);
    auto work = [&] {
        for (std::size_t k; (k = next.fetch_add(1)) < opts.replications;) {
            try {
                RunOptions ro;
                ro.horizon = opts.horizon;
                ro.seed = replication_seed(opts.master_seed, k);
                ro.warmup_fraction = opts.warmup_fraction;
                out[k] = run(cfg, sched, rates, ro);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back(work);
        for (auto &th : pool)
            th.join();
    }
    for (auto &e : errors)
        if (e)
            std::rethrow_exception(e);
    return out;
}

MetricsReport estimate(std::span<const SimStats> stats, const ModelConfig &cfg,
                       const MetricsOptions &opts) {
    if (stats.size() < 2)
        throw InsufficientData("at least two replications are required, got " +
                               std::to_string(stats.size()));

    std::array<Pooled, 2> blocking, first;
    std::array<Pooled, kArrivalFamilies> family, users;
    Pooled dropping, freeze, recovering, capped, utilization;

    for (const SimStats &s : stats) {
        for (std::size_t t = 0; t < 2; ++t) {
            add(blocking[t], static_cast<double>(s.new_blocked[t]), static_cast<double>(s.new_offered[t]));
            add(first[t], static_cast<double>(s.first_blocked[t]), static_cast<double>(s.first_offered[t]));
        }
        double dropped = 0.0, frozen = 0.0, admitted_pool = 0.0, cap = 0.0;
        for (std::size_t f = 0; f < kArrivalFamilies; ++f) {
            const double pool = static_cast<double>(s.handoff_offered[f] - s.handoff_capped[f]);
            add(family[f], static_cast<double>(s.handoff_dropped[f]), pool);
            dropped += static_cast<double>(s.handoff_dropped[f]);
            frozen += static_cast<double>(s.handoff_frozen[f]);
            cap += static_cast<double>(s.handoff_capped[f]);
            admitted_pool += pool;
            add(users[f], s.user_integral[f], s.observed_time);
        }
        if (opts.include_cap_rejections) {
            add(dropping, dropped + cap, admitted_pool + cap);
            add(freeze, frozen, admitted_pool + cap);
        } else {
            add(dropping, dropped, admitted_pool);
            add(freeze, frozen, admitted_pool);
        }
        const std::size_t two = index(MultiClass::II);
        add(recovering, static_cast<double>(s.recovery_failures[two]),
            static_cast<double>(s.recovery_attempts[two]));
        add(capped, cap, s.observed_time);
        add(utilization, s.load_integral, s.observed_time * cfg.channels);
    }

    MetricsReport r;
    r.provenance = Provenance::Simulated;
    r.replications = stats.size();
    for (std::size_t t = 0; t < 2; ++t) {
        r.blocking[t] = finish(blocking[t]);
        r.first_call_blocking[t] = finish(first[t]);
    }
    for (std::size_t f = 0; f < kArrivalFamilies; ++f) {
        r.family_dropping[f] = finish(family[f]);
        r.mean_users[f] = finish(users[f]);
    }
    r.handoff_dropping = finish(dropping);
    r.handoff_freeze = finish(freeze);
    r.recovering_dropping = finish(recovering);
    r.cap_rejection_rate = finish(capped);
    r.utilization = finish(utilization);
    return r;
}

double kolmogorov_tail(double x) {
    if (x < 0.2)
        return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * x * x);
        sum += (k % 2 ? term : -term);
        if (term < 1e-17)
            break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsReport ks_exponential(std::span<const double> samples, double rate, double alpha,
                        std::size_t min_samples) {
    if (samples.size() < min_samples)
        throw InsufficientData("KS test needs at least " + std::to_string(min_samples) +
                               " samples, got " + std::to_string(samples.size()));
    std::vector<double> x(samples.begin(), samples.end());
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = -std::expm1(-rate * x[i]);
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
    }
    KsReport r;
    r.samples = x.size();
    r.statistic = d;
    const double sn = std::sqrt(n);
    r.p_value = kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d);
    r.passed = r.p_value >= alpha;
    return r;
}

KsReport recovery_holding_test(const SimStats &stats, ConnType type, double rate, double alpha) {
    return ks_exponential(stats.post_recovery[index(type)], rate, alpha);
}

} // namespace tfrc::des
