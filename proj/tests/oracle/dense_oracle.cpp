#include "dense_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oracle {

namespace {

struct Layout {
    int mI, mII, mIII, mIV;
    int offI() const { return 2; }
    int offII() const { return offI() + mI + 1; }
    int offIII() const { return offII() + mII + 1; }
    int offIV() const { return offIII() + mIII + 1; }
    int size() const { return offIV() + mIV + 1; }
};

Layout layout_of(const Withdrawals &w) {
    return {static_cast<int>(w[0].size()) - 1, static_cast<int>(w[1].size()) - 1,
            static_cast<int>(w[2].size()) - 1, static_cast<int>(w[3].size()) - 1};
}

int load_of(const Counts &x, const tfrc::ModelConfig &cfg, const Withdrawals &w) {
    const int r1 = cfg.t1_subchannels, r2 = cfg.t2_subchannels;
    const Layout L = layout_of(w);
    int R = x[0] * r1 + x[1] * r2;
    for (int i = 0; i <= L.mI; ++i)
        R += x[L.offI() + i] * (2 * r1 - w[0][i]);
    for (int i = 0; i <= L.mII; ++i)
        R += x[L.offII() + i] * (r1 - w[1][i] + r2);
    for (int i = 0; i <= L.mIII; ++i)
        R += x[L.offIII() + i] * (r2 - w[2][i] + r1);
    for (int i = 0; i <= L.mIV; ++i)
        R += x[L.offIV() + i] * (2 * r2 - w[3][i]);
    return R;
}

int busy_of(const Counts &x) {
    int b = 0;
    for (int v : x)
        b += v;
    return b;
}

void recurse(std::size_t field, Counts &x, int busy, int users, std::vector<Counts> &out,
             const tfrc::ModelConfig &cfg, const Withdrawals &w) {
    if (field == x.size()) {
        if (busy_of(x) <= cfg.users && load_of(x, cfg, w) <= cfg.channels)
            out.push_back(x);
        return;
    }
    for (int v = 0; busy + v <= users; ++v) {
        x[field] = v;
        recurse(field + 1, x, busy + v, users, out, cfg, w);
    }
    x[field] = 0;
}

std::vector<bool> reach(const Matrix &q, std::size_t root) {
    const std::size_t n = q.size();
    std::vector<bool> seen(n, false);
    std::vector<std::size_t> todo{root};
    seen[root] = true;
    while (!todo.empty()) {
        std::size_t i = todo.back();
        todo.pop_back();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && q[i][j] > 0.0 && !seen[j]) {
                seen[j] = true;
                todo.push_back(j);
            }
    }
    return seen;
}

} // namespace

Withdrawals withdrawals(const tfrc::ModelConfig &cfg) {
    Withdrawals w;
    const int bg[4] = {cfg.t1_subchannels, cfg.t1_subchannels, cfg.t2_subchannels,
                       cfg.t2_subchannels};
    for (int j = 0; j < 4; ++j) {
        const int m = static_cast<int>(std::ceil(static_cast<double>(bg[j]) / cfg.withdrawal_step));
        for (int i = 0; i <= m; ++i)
            w[j].push_back(std::min(i * cfg.withdrawal_step, bg[j]));
    }
    return w;
}

std::vector<double> solve_dense(const Matrix &q, std::size_t root) {
    const std::size_t N = q.size();
    auto seen = reach(q, root);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < N; ++i)
        if (seen[i])
            keep.push_back(i);
    const std::size_t n = keep.size();

    // A = Q^T on the kept states, last equation replaced by sum(pi) = 1.
    Matrix a(n, std::vector<double>(n + 1, 0.0));
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c)
            a[r][c] = q[keep[c]][keep[r]];
    for (std::size_t c = 0; c < n; ++c)
        a[n - 1][c] = 1.0;
    a[n - 1][n] = 1.0;

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col]))
                piv = r;
        if (a[piv][col] == 0.0)
            throw std::runtime_error("oracle: singular system");
        std::swap(a[piv], a[col]);
        const double *prow = a[col].data();
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / prow[col];
            if (f == 0.0)
                continue;
            double *row = a[r].data();
            for (std::size_t c = col; c <= n; ++c)
                row[c] -= f * prow[c];
        }
    }
    std::vector<double> x(n);
    for (std::size_t r = n; r-- > 0;) {
        double s = a[r][n];
        for (std::size_t c = r + 1; c < n; ++c)
            s -= a[r][c] * x[c];
        x[r] = s / a[r][r];
    }

    std::vector<double> pi(N, 0.0);
    for (std::size_t k = 0; k < n; ++k)
        pi[keep[k]] = x[k];
    return pi;
}

UserResult user_chain(const tfrc::ModelConfig &cfg, const Withdrawals &w) {
    const Layout L = layout_of(w);
    const int nmacro = 3 + L.mI + 1 + L.mII + 1 + L.mIII + 1 + L.mIV + 1;
    const int M = cfg.stairs;
    const double lam = cfg.call_rate, P1 = cfg.t1_share, P2 = cfg.t2_share;
    const double mu1 = cfg.t1_service_rate, mu2 = cfg.t2_service_rate;
    const double r1 = cfg.t1_subchannels, r2 = cfg.t2_subchannels;
    const double step = M / cfg.feedback_period;

    const int IDLE = 0, R1 = 1, R2 = 2;
    auto I = [&](int i) { return 3 + i; };
    auto II = [&](int i) { return 3 + L.mI + 1 + i; };
    auto III = [&](int i) { return 3 + L.mI + 1 + L.mII + 1 + i; };
    auto IV = [&](int i) { return 3 + L.mI + 1 + L.mII + 1 + L.mIII + 1 + i; };

    const int n = nmacro * M;
    Matrix q(n, std::vector<double>(n, 0.0));
    auto at = [&](int macro, int m) { return macro * M + (m - 1); };
    auto put = [&](int a, int b, double rate) {
        if (a != b)
            q[a][b] += rate;
    };

    for (int m = 1; m <= M; ++m) {
        put(at(IDLE, m), at(R1, m), lam * P1);
        put(at(IDLE, m), at(R2, m), lam * P2);
        put(at(R1, m), at(I(0), m), lam * P1);
        put(at(R2, m), at(IV(0), m), lam * P2);
        put(at(R1, m), at(II(0), m), lam * P2);
        put(at(R2, m), at(III(0), m), lam * P1);
        put(at(R1, m), at(IDLE, m), mu1);
        put(at(R2, m), at(IDLE, m), mu2);
        for (int i = 0; i <= L.mI; ++i)
            put(at(I(i), m), at(R1, m), mu1 * (2.0 - w[0][i] / r1));
        for (int i = 0; i <= L.mII; ++i) {
            put(at(II(i), m), at(R1, m), mu2);
            put(at(II(i), m), at(R2, m), mu1 * (1.0 - w[1][i] / r1));
        }
        for (int i = 0; i <= L.mIII; ++i) {
            put(at(III(i), m), at(R2, m), mu1);
            put(at(III(i), m), at(R1, m), mu2 * (1.0 - w[2][i] / r2));
        }
        for (int i = 0; i <= L.mIV; ++i)
            put(at(IV(i), m), at(R2, m), mu2 * (2.0 - w[3][i] / r2));
    }
    // Inter-state at the period boundary.
    for (int i = 0; i < L.mI; ++i)
        put(at(I(i), M), at(I(i + 1), 1), step);
    for (int i = 0; i < L.mII; ++i)
        put(at(II(i), M), at(II(i + 1), 1), step);
    for (int i = 0; i < L.mIII; ++i)
        put(at(III(i), M), at(III(i + 1), 1), step);
    for (int i = 0; i < L.mIV; ++i)
        put(at(IV(i), M), at(IV(i + 1), 1), step);
    // Intra-state at the period boundary.
    for (int s : {IDLE, R1, R2, I(L.mI), II(L.mII), III(L.mIII), IV(L.mIV)})
        put(at(s, M), at(s, 1), step);
    // Within the period.
    for (int s = 0; s < nmacro; ++s)
        for (int m = 1; m < M; ++m)
            put(at(s, m), at(s, m + 1), step);

    for (int a = 0; a < n; ++a) {
        double out = 0.0;
        for (int b = 0; b < n; ++b)
            if (b != a)
                out += q[a][b];
        q[a][a] = -out;
    }
    auto pi = solve_dense(q, 0);
    UserResult res;
    res.pi.assign(nmacro, 0.0);
    for (int s = 0; s < nmacro; ++s)
        for (int m = 1; m <= M; ++m)
            res.pi[s] += pi[at(s, m)];
    return res;
}

Inflow inflow(const tfrc::ModelConfig &cfg, const Withdrawals &w, const UserResult &u) {
    const Layout L = layout_of(w);
    const double kn = cfg.users * cfg.mobility_rate;
    Inflow in;
    in.h1 = kn * u.pi[1];
    in.h2 = kn * u.pi[2];
    int k = 3;
    const int sizes[4] = {L.mI + 1, L.mII + 1, L.mIII + 1, L.mIV + 1};
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < sizes[j]; ++i)
            in.multi[j].push_back(kn * u.pi[k++]);
    return in;
}

std::vector<Counts> brute_force_states(const tfrc::ModelConfig &cfg, const Withdrawals &w) {
    const Layout L = layout_of(w);
    Counts x(L.size(), 0);
    std::vector<Counts> out;
    recurse(0, x, 0, cfg.users, out, cfg, w);
    std::sort(out.begin(), out.end());
    return out;
}

SystemResult system_chain(const tfrc::ModelConfig &cfg, const Withdrawals &w, const Inflow &in,
                          bool solve) {
    const Layout L = layout_of(w);
    const int C = cfg.channels, CR = cfg.recovery_reserve, CHR = cfg.handoff_reserve;
    const int r1 = cfg.t1_subchannels, r2 = cfg.t2_subchannels;
    const double lam = cfg.call_rate, P1 = cfg.t1_share, P2 = cfg.t2_share;
    const double mu1 = cfg.t1_service_rate, mu2 = cfg.t2_service_rate, eta = cfg.mobility_rate;
    const int M = cfg.stairs;
    const double step = M / cfg.feedback_period;

    SystemResult res;
    res.stairs = M;
    res.states = brute_force_states(cfg, w);
    for (std::size_t k = 0; k < res.states.size(); ++k)
        res.index[res.states[k]] = k;
    const std::size_t n = res.states.size() * M;
    res.q.assign(n, std::vector<double>(n, 0.0));

    auto NI = [&](int i) { return L.offI() + i; };
    auto NII = [&](int i) { return L.offII() + i; };
    auto NIII = [&](int i) { return L.offIII() + i; };
    auto NIV = [&](int i) { return L.offIV() + i; };

    for (std::size_t k = 0; k < res.states.size(); ++k) {
        const Counts &s = res.states[k];
        const int R = load_of(s, cfg, w);
        const int busy = busy_of(s);
        const int U = cfg.users - busy;
        const int n1 = s[0], n2 = s[1];

        for (int m = 1; m <= M; ++m) {
            const std::size_t from = k * M + (m - 1);
            auto go = [&](Counts t, double rate) {
                if (rate == 0.0)
                    return;
                auto it = res.index.find(t);
                if (it == res.index.end())
                    throw std::runtime_error("oracle: target outside state space");
                res.q[from][it->second * M + (m - 1)] += rate;
            };
            auto with = [&](std::initializer_list<std::pair<int, int>> d) {
                Counts t = s;
                for (auto [f, v] : d)
                    t[f] += v;
                return t;
            };

            // New T1 call.
            if (R + r1 <= C - CHR) {
                go(with({{0, +1}}), U * lam * P1);
                if (n1 > 0)
                    go(with({{0, -1}, {NI(0), +1}}), n1 * lam * P1);
                if (n2 > 0)
                    go(with({{1, -1}, {NIII(0), +1}}), n2 * lam * P1);
            }
            // New T2 call.
            if (R + r2 <= C - CHR) {
                go(with({{1, +1}}), U * lam * P2);
                if (n1 > 0)
                    go(with({{0, -1}, {NII(0), +1}}), n1 * lam * P2);
                if (n2 > 0)
                    go(with({{1, -1}, {NIV(0), +1}}), n2 * lam * P2);
            }

            // Handoff arrivals (population closure: none when nobody is idle).
            if (busy < cfg.users) {
                if (R + r1 <= C - CR)
                    go(with({{0, +1}}), in.h1);
                if (R + r2 <= C - CR)
                    go(with({{1, +1}}), in.h2);
                for (int i = 0; i <= L.mI; ++i) {
                    const double h = in.multi[0][i];
                    if (R + 2 * r1 - w[0][i] <= C - CR)
                        go(with({{NI(i), +1}}), h);
                    else if (R + r1 <= C - CR && i <= L.mI - 1)
                        go(with({{NI(L.mI), +1}}), h);
                }
                for (int i = 0; i <= L.mII; ++i) {
                    const double h = in.multi[1][i];
                    if (R + r1 - w[1][i] + r2 <= C - CR)
                        go(with({{NII(i), +1}}), h);
                    else if (R + r2 <= C - CR && i <= L.mII - 1)
                        go(with({{NII(L.mII), +1}}), h);
                }
                for (int i = 0; i <= L.mIII; ++i) {
                    const double h = in.multi[2][i];
                    if (R + r2 - w[2][i] + r1 <= C - CR)
                        go(with({{NIII(i), +1}}), h);
                    else if (R + r1 <= C - CR && i <= L.mIII - 1)
                        go(with({{NIII(L.mIII), +1}}), h);
                }
                for (int i = 0; i <= L.mIV; ++i) {
                    const double h = in.multi[3][i];
                    if (R + 2 * r2 - w[3][i] <= C - CR)
                        go(with({{NIV(i), +1}}), h);
                    else if (R + r2 <= C - CR && i <= L.mIV - 1)
                        go(with({{NIV(L.mIV), +1}}), h);
                }
            }

            // Handoff departures.
            for (int f = 0; f < L.size(); ++f)
                if (s[f] > 0)
                    go(with({{f, -1}}), s[f] * eta);

            // Terminations.
            if (n1 > 0)
                go(with({{0, -1}}), n1 * mu1);
            if (n2 > 0)
                go(with({{1, -1}}), n2 * mu2);
            for (int i = 0; i <= L.mI; ++i)
                if (s[NI(i)] > 0)
                    go(with({{NI(i), -1}, {0, +1}}),
                       s[NI(i)] * (mu1 * (1.0 - static_cast<double>(w[0][i]) / r1) + mu1));
            for (int i = 0; i <= L.mII; ++i)
                if (s[NII(i)] > 0) {
                    go(with({{NII(i), -1}, {1, +1}}),
                       s[NII(i)] * mu1 * (1.0 - static_cast<double>(w[1][i]) / r1));
                    if (R + w[1][i] - r2 > C)
                        go(with({{NII(i), -1}}), s[NII(i)] * mu2);
                    else
                        go(with({{NII(i), -1}, {0, +1}}), s[NII(i)] * mu2);
                }
            for (int i = 0; i <= L.mIII; ++i)
                if (s[NIII(i)] > 0) {
                    go(with({{NIII(i), -1}, {0, +1}}),
                       s[NIII(i)] * mu2 * (1.0 - static_cast<double>(w[2][i]) / r2));
                    go(with({{NIII(i), -1}, {1, +1}}), s[NIII(i)] * mu1);
                }
            for (int i = 0; i <= L.mIV; ++i)
                if (s[NIV(i)] > 0)
                    go(with({{NIV(i), -1}, {1, +1}}),
                       s[NIV(i)] * (mu2 * (1.0 - static_cast<double>(w[3][i]) / r2) + mu2));
        }

        // Periodic conversion: phases advance, the last one applies the shift.
        for (int m = 1; m < M; ++m)
            res.q[k * M + (m - 1)][k * M + m] += step;
        Counts shifted = s;
        const int offs[4] = {L.offI(), L.offII(), L.offIII(), L.offIV()};
        const int ms[4] = {L.mI, L.mII, L.mIII, L.mIV};
        for (int j = 0; j < 4; ++j) {
            const int o = offs[j], mj = ms[j];
            shifted[o + mj] = s[o + mj] + s[o + mj - 1];
            for (int i = mj - 1; i >= 1; --i)
                shifted[o + i] = s[o + i - 1];
            shifted[o] = 0;
        }
        const std::size_t to = res.index.at(shifted) * M;
        const std::size_t from = k * M + (M - 1);
        if (to != from)
            res.q[from][to] += step;
    }

    for (std::size_t a = 0; a < n; ++a) {
        double out = 0.0;
        for (std::size_t b = 0; b < n; ++b)
            if (b != a)
                out += res.q[a][b];
        res.q[a][a] = -out;
    }
    if (solve) {
        const std::size_t empty = res.index.at(Counts(L.size(), 0));
        res.pi = solve_dense(res.q, empty * M);
    }
    return res;
}

Metrics metrics(const tfrc::ModelConfig &cfg, const Withdrawals &w, const Inflow &in,
                const SystemResult &sys) {
    const Layout L = layout_of(w);
    const int C = cfg.channels, CR = cfg.recovery_reserve, CHR = cfg.handoff_reserve;
    const int r1 = cfg.t1_subchannels, r2 = cfg.t2_subchannels;
    const double lam = cfg.call_rate;

    double off1 = 0, blk1 = 0, off2 = 0, blk2 = 0, foff1 = 0, fblk1 = 0, foff2 = 0, fblk2 = 0;
    double hoff = 0, hdrop = 0, hfrz = 0, rec = 0, recfail = 0, util = 0, cap = 0;
    double total_in = in.h1 + in.h2;
    for (const auto &v : in.multi)
        for (double h : v)
            total_in += h;

    for (std::size_t k = 0; k < sys.states.size(); ++k) {
        double p = 0.0;
        for (int m = 0; m < sys.stairs; ++m)
            p += sys.pi[k * sys.stairs + m];
        const Counts &s = sys.states[k];
        const int R = load_of(s, cfg, w);
        const int busy = busy_of(s);
        const int U = cfg.users - busy;

        const double a1 = (U + s[0] + s[1]) * lam * cfg.t1_share;
        const double a2 = (U + s[0] + s[1]) * lam * cfg.t2_share;
        off1 += p * a1;
        off2 += p * a2;
        foff1 += p * U * lam * cfg.t1_share;
        foff2 += p * U * lam * cfg.t2_share;
        if (R + r1 > C - CHR) {
            blk1 += p * a1;
            fblk1 += p * U * lam * cfg.t1_share;
        }
        if (R + r2 > C - CHR) {
            blk2 += p * a2;
            fblk2 += p * U * lam * cfg.t2_share;
        }

        if (busy == cfg.users) {
            cap += p * total_in;
        } else {
            hoff += p * total_in;
            if (R + r1 > C - CR)
                hdrop += p * in.h1;
            if (R + r2 > C - CR)
                hdrop += p * in.h2;
            const int fg[4] = {r1, r2, r1, r2};
            const int bg[4] = {r1, r1, r2, r2};
            for (int j = 0; j < 4; ++j) {
                const int mj = static_cast<int>(w[j].size()) - 1;
                for (int i = 0; i <= mj; ++i) {
                    const double h = in.multi[j][i];
                    const bool both = R + fg[j] + bg[j] - w[j][i] <= C - CR;
                    const bool one = R + fg[j] <= C - CR;
                    if (both)
                        continue;
                    if (one && i < mj)
                        hfrz += p * h;
                    else
                        hdrop += p * h;
                }
            }
        }

        for (int i = 0; i <= L.mII; ++i) {
            const double r = p * s[L.offII() + i] * cfg.t2_service_rate;
            rec += r;
            if (R + w[1][i] - r2 > C)
                recfail += r;
        }
        util += p * R;
    }

    auto div = [](double a, double b) -> std::optional<double> {
        if (b == 0.0)
            return std::nullopt;
        return a / b;
    };
    Metrics out;
    out.blocking_t1 = div(blk1, off1);
    out.blocking_t2 = div(blk2, off2);
    out.first_blocking_t1 = div(fblk1, foff1);
    out.first_blocking_t2 = div(fblk2, foff2);
    out.handoff_dropping = div(hdrop, hoff);
    out.handoff_freeze = div(hfrz, hoff);
    out.recovering_dropping = div(recfail, rec);
    out.utilization = div(util, C);
    out.cap_rate = cap;
    return out;
}

Counts flatten(const tfrc::SystemState &s) {
    Counts x{s.single_t1, s.single_t2};
    for (const auto &v : s.multi)
        x.insert(x.end(), v.begin(), v.end());
    return x;
}

double engset(int sources, int servers, double a) {
    if (servers >= sources)
        return 0.0;
    // Terms C(sources-1, i) a^i built incrementally.
    double term = 1.0, denom = 1.0;
    for (int i = 1; i <= servers; ++i) {
        term *= static_cast<double>(sources - i) / i * a;
        denom += term;
    }
    return term / denom;
}

} // namespace oracle
