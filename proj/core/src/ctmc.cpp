#include "tfrc/ctmc.hpp"

#include "tfrc/errors.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace tfrc::ctmc {

namespace {

constexpr double kClampTolerance = 1e-12;

// Clamps tiny negatives to zero and renormalizes in place.
void clamp_and_normalize(std::vector<double> &pi) {
    double sum = 0.0;
    for (double &p : pi) {
        if (p < 0.0) {
            if (p < -kClampTolerance)
                throw SolverError("negative probability " + std::to_string(p) +
                                  " beyond clamping tolerance");
            p = 0.0;
        }
        sum += p;
    }
    if (!(sum > 0.0))
        throw SolverError("stationary vector has zero mass");
    for (double &p : pi)
        p /= sum;
}

// Indices outside the communicating class of state 0.
std::vector<std::size_t> outside_root_class(const SparseGenerator &gen) {
    const std::size_t n = gen.dimension();
    auto forward = reachable_from(gen, 0);

    std::vector<std::vector<std::size_t>> reverse(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j : gen.columns(i))
            reverse[j].push_back(i);
    std::vector<bool> backward(n, false);
    std::vector<std::size_t> stack{0};
    backward[0] = true;
    while (!stack.empty()) {
        std::size_t j = stack.back();
        stack.pop_back();
        for (std::size_t i : reverse[j])
            if (!backward[i]) {
                backward[i] = true;
                stack.push_back(i);
            }
    }

    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < n; ++i)
        if (!forward[i] || !backward[i])
            bad.push_back(i);
    return bad;
}

void require_irreducible(const SparseGenerator &gen) {
    if (gen.dimension() == 0)
        throw SolverError("empty generator");
    auto bad = outside_root_class(gen);
    if (!bad.empty())
        throw SingularSystem("reducible chain: " + std::to_string(bad.size()) +
                                 " states outside the class of state 0",
                             std::move(bad));
}

} // namespace

double SparseGenerator::max_exit_rate() const noexcept {
    double m = 0.0;
    for (double d : diagonal_)
        m = std::max(m, -d);
    return m;
}

double SparseGenerator::rate(std::size_t from, std::size_t to) const {
    auto cols = columns(from);
    auto it = std::lower_bound(cols.begin(), cols.end(), to);
    if (it == cols.end() || *it != to)
        return 0.0;
    return rates(from)[static_cast<std::size_t>(it - cols.begin())];
}

SparseGenerator SparseGenerator::restrict(std::span<const std::size_t> keep) const {
    constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);
    std::vector<std::size_t> position(dimension(), kAbsent);
    for (std::size_t k = 0; k < keep.size(); ++k)
        position.at(keep[k]) = k;

    GeneratorBuilder b(keep.size());
    for (std::size_t k = 0; k < keep.size(); ++k) {
        auto cols = columns(keep[k]);
        auto rs = rates(keep[k]);
        for (std::size_t e = 0; e < cols.size(); ++e)
            if (position[cols[e]] != kAbsent)
                b.add(k, position[cols[e]], rs[e]);
    }
    return std::move(b).finalize();
}

void SparseGenerator::dump(std::ostream &os) const {
    char buf[64];
    for (std::size_t i = 0; i < dimension(); ++i) {
        auto cols = columns(i);
        auto rs = rates(i);
        for (std::size_t e = 0; e < cols.size(); ++e) {
            std::snprintf(buf, sizeof buf, "%.17g", rs[e]);
            os << i << ' ' << cols[e] << ' ' << buf << '\n';
        }
    }
}

void GeneratorBuilder::add(std::size_t from, std::size_t to, double rate) {
    if (from >= dimension_ || to >= dimension_)
        throw std::out_of_range("transition " + std::to_string(from) + "->" + std::to_string(to) +
                                " outside dimension " + std::to_string(dimension_));
    if (from == to)
        throw std::invalid_argument("self-loop at state " + std::to_string(from));
    if (!std::isfinite(rate) || rate < 0.0)
        throw std::invalid_argument("invalid rate " + std::to_string(rate));
    if (rate == 0.0)
        return;
    entries_.push_back({from, to, rate});
}

SparseGenerator GeneratorBuilder::finalize() && {
    std::stable_sort(entries_.begin(), entries_.end(), [](const Entry &a, const Entry &b) {
        return a.from != b.from ? a.from < b.from : a.to < b.to;
    });

    SparseGenerator g;
    g.row_start_.assign(dimension_ + 1, 0);
    g.diagonal_.assign(dimension_, 0.0);
    for (std::size_t k = 0; k < entries_.size();) {
        const std::size_t from = entries_[k].from;
        const std::size_t to = entries_[k].to;
        double sum = 0.0;
        for (; k < entries_.size() && entries_[k].from == from && entries_[k].to == to; ++k)
            sum += entries_[k].rate;
        g.columns_.push_back(to);
        g.rates_.push_back(sum);
        ++g.row_start_[from + 1];
    }
    std::partial_sum(g.row_start_.begin(), g.row_start_.end(), g.row_start_.begin());
    for (std::size_t i = 0; i < dimension_; ++i) {
        double out = 0.0;
        for (double r : g.rates(i))
            out += r;
        g.diagonal_[i] = -out;
    }
    entries_.clear();
    return g;
}

double residual(const SparseGenerator &gen, std::span<const double> pi) {
    const std::size_t n = gen.dimension();
    if (pi.size() != n)
        throw std::invalid_argument("residual: vector size mismatch");
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += pi[i] * gen.diagonal(i);
        auto cols = gen.columns(i);
        auto rs = gen.rates(i);
        for (std::size_t e = 0; e < cols.size(); ++e)
            y[cols[e]] += pi[i] * rs[e];
    }
    double m = 0.0;
    for (double v : y)
        m = std::max(m, std::abs(v));
    return m;
}

std::vector<bool> reachable_from(const SparseGenerator &gen, std::size_t root) {
    std::vector<bool> seen(gen.dimension(), false);
    if (root >= gen.dimension())
        throw std::out_of_range("reachable_from: root out of range");
    std::vector<std::size_t> stack{root};
    seen[root] = true;
    while (!stack.empty()) {
        std::size_t i = stack.back();
        stack.pop_back();
        for (std::size_t j : gen.columns(i))
            if (!seen[j]) {
                seen[j] = true;
                stack.push_back(j);
            }
    }
    return seen;
}

SteadyStateDistribution steady_state_direct(const SparseGenerator &gen, const DirectOptions &opts) {
    const std::size_t n = gen.dimension();
    if (n > opts.max_dimension)
        throw SolverError("dimension " + std::to_string(n) + " exceeds direct-solve limit " +
                          std::to_string(opts.max_dimension));
    require_irreducible(gen);

    SteadyStateDistribution out;
    out.solver = SolverKind::Direct;
    if (n == 1) {
        out.probabilities = {1.0};
        return out;
    }

    // Transposed balance equations Q^T x = 0 with row `pin` replaced by x_pin = 1,
    // then normalized. Keeps the system as sparse as Q.
    using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
    const std::size_t pin = 0;
    std::vector<Eigen::Triplet<double, int>> triplets;
    triplets.reserve(gen.nonzeros() + n);
    for (std::size_t i = 0; i < n; ++i) {
        if (i != pin)
            triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), gen.diagonal(i));
        auto cols = gen.columns(i);
        auto rs = gen.rates(i);
        for (std::size_t e = 0; e < cols.size(); ++e)
            if (cols[e] != pin)
                triplets.emplace_back(static_cast<int>(cols[e]), static_cast<int>(i), rs[e]);
    }
    triplets.emplace_back(static_cast<int>(pin), static_cast<int>(pin), 1.0);
    SpMat a(static_cast<int>(n), static_cast<int>(n));
    a.setFromTriplets(triplets.begin(), triplets.end());
    a.makeCompressed();

    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success)
        throw SolverError("sparse LU factorization failed: " + lu.lastErrorMessage());
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    rhs[static_cast<Eigen::Index>(pin)] = 1.0;
    Eigen::VectorXd x = lu.solve(rhs);
    if (lu.info() != Eigen::Success)
        throw SolverError("sparse LU solve failed");

    out.probabilities.assign(x.data(), x.data() + n);
    clamp_and_normalize(out.probabilities);
    out.residual_norm = residual(gen, out.probabilities);
    const double bound = 1e-10 * gen.max_exit_rate();
    if (out.residual_norm > bound)
        throw SolverError("direct solve residual " + std::to_string(out.residual_norm) +
                          " above bound " + std::to_string(bound));
    return out;
}

SteadyStateDistribution steady_state_iterative(const SparseGenerator &gen,
                                               const IterativeOptions &opts) {
    const std::size_t n = gen.dimension();
    require_irreducible(gen);

    SteadyStateDistribution out;
    out.solver = SolverKind::Iterative;
    const double lambda = 1.01 * gen.max_exit_rate();
    if (n == 1 || lambda == 0.0) {
        out.probabilities.assign(n, 0.0);
        out.probabilities[0] = 1.0;
        return out;
    }

    std::vector<double> pi = opts.initial;
    if (pi.size() != n)
        pi.assign(n, 1.0 / static_cast<double>(n));
    else
        clamp_and_normalize(pi);

    std::vector<double> next(n);
    std::size_t it = 0;
    for (;;) {
        if (it >= opts.max_iterations)
            throw NonConvergence("power iteration did not converge in " +
                                 std::to_string(opts.max_iterations) + " iterations");
        ++it;
        for (std::size_t i = 0; i < n; ++i)
            next[i] = pi[i] * (1.0 + gen.diagonal(i) / lambda);
        for (std::size_t i = 0; i < n; ++i) {
            const double w = pi[i] / lambda;
            if (w == 0.0)
                continue;
            auto cols = gen.columns(i);
            auto rs = gen.rates(i);
            for (std::size_t e = 0; e < cols.size(); ++e)
                next[cols[e]] += w * rs[e];
        }
        double diff = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            diff = std::max(diff, std::abs(next[i] - pi[i]));
        pi.swap(next);
        if (diff < opts.tol)
            break;
    }

    out.iterations = it;
    out.probabilities = std::move(pi);
    clamp_and_normalize(out.probabilities);
    out.residual_norm = residual(gen, out.probabilities);
    const double bound = 10.0 * opts.tol * lambda;
    if (out.residual_norm > bound)
        throw NonConvergence("iterative residual " + std::to_string(out.residual_norm) +
                             " above bound " + std::to_string(bound));
    return out;
}

SteadyStateDistribution steady_state(const SparseGenerator &gen, const SolveOptions &opts) {
    switch (opts.choice) {
    case SolverChoice::Direct: return steady_state_direct(gen, opts.direct);
    case SolverChoice::Iterative: return steady_state_iterative(gen, opts.iterative);
    case SolverChoice::Auto: break;
    }
    if (gen.dimension() <= opts.direct.max_dimension)
        return steady_state_direct(gen, opts.direct);
    return steady_state_iterative(gen, opts.iterative);
}

SteadyStateDistribution steady_state_from(const SparseGenerator &gen, std::size_t root,
                                          const SolveOptions &opts) {
    auto seen = reachable_from(gen, root);
    std::vector<std::size_t> keep;
    keep.reserve(gen.dimension());
    // Root first so the irreducibility check is anchored at it.
    keep.push_back(root);
    for (std::size_t i = 0; i < gen.dimension(); ++i)
        if (seen[i] && i != root)
            keep.push_back(i);

    if (keep.size() == gen.dimension() && root == 0)
        return steady_state(gen, opts);

    SolveOptions sub = opts;
    if (!opts.iterative.initial.empty()) {
        sub.iterative.initial.clear();
        for (std::size_t k : keep)
            sub.iterative.initial.push_back(opts.iterative.initial.at(k));
    }
    auto reduced = steady_state(gen.restrict(keep), sub);

    SteadyStateDistribution out = reduced;
    out.probabilities.assign(gen.dimension(), 0.0);
    for (std::size_t k = 0; k < keep.size(); ++k)
        out.probabilities[keep[k]] = reduced.probabilities[k];
    return out;
}

} // namespace tfrc::ctmc
