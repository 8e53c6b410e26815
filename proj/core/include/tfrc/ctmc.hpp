#pragma once

// Finite continuous-time Markov chains: sparse generator assembly and
// stationary distributions.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace tfrc::ctmc {

class GeneratorBuilder;

/// Frozen infinitesimal generator in CSR form. Off-diagonal rates are
/// positive; the diagonal is the negated row sum, accumulated in column order.
class SparseGenerator {
  public:
    SparseGenerator() = default;

    std::size_t dimension() const noexcept { return diagonal_.size(); }
    std::size_t nonzeros() const noexcept { return rates_.size(); }

    std::span<const std::size_t> columns(std::size_t row) const {
        return {columns_.data() + row_start_[row], row_start_[row + 1] - row_start_[row]};
    }
    std::span<const double> rates(std::size_t row) const {
        return {rates_.data() + row_start_[row], row_start_[row + 1] - row_start_[row]};
    }

    double diagonal(std::size_t row) const { return diagonal_[row]; }
    double exit_rate(std::size_t row) const { return -diagonal_[row]; }
    double max_exit_rate() const noexcept;

    /// Off-diagonal rate from -> to (0 if absent).
    double rate(std::size_t from, std::size_t to) const;

    /// Sub-generator where new state k is old state keep[k]; transitions leaving the set are dropped.
    SparseGenerator restrict(std::span<const std::size_t> keep) const;

    /// "row column rate" lines, rate with 17 significant digits, sorted by (row, column).
    void dump(std::ostream &os) const;

  private:
    friend class GeneratorBuilder;

    std::vector<std::size_t> row_start_{0};
    std::vector<std::size_t> columns_;
    std::vector<double> rates_;
    std::vector<double> diagonal_;
};

class GeneratorBuilder {
  public:
    explicit GeneratorBuilder(std::size_t dimension) : dimension_(dimension) {}

    /// Records a transition. Zero rates are discarded; duplicates are summed at finalize().
    /// Throws std::out_of_range for bad indices and std::invalid_argument for
    /// self-loops or negative/non-finite rates.
    void add(std::size_t from, std::size_t to, double rate);

    std::size_t dimension() const noexcept { return dimension_; }

    SparseGenerator finalize() &&;

  private:
    struct Entry {
        std::size_t from;
        std::size_t to;
        double rate;
    };

    std::size_t dimension_;
    std::vector<Entry> entries_;
};

enum class SolverKind { Direct, Iterative };

struct SteadyStateDistribution {
    std::vector<double> probabilities;
    double residual_norm = 0.0;
    SolverKind solver = SolverKind::Direct;
    std::size_t iterations = 0;
};

inline constexpr std::size_t kDefaultDirectLimit = 20'000;

struct DirectOptions {
    std::size_t max_dimension = kDefaultDirectLimit;
};

struct IterativeOptions {
    double tol = 1e-13;
    std::size_t max_iterations = 2'000'000;
    /// Optional starting vector; uniform when empty.
    std::vector<double> initial;
};

/// Max-norm of pi * Q.
double residual(const SparseGenerator &gen, std::span<const double> pi);

/// States reachable from `root` along positive-rate transitions.
std::vector<bool> reachable_from(const SparseGenerator &gen, std::size_t root);

/// Solves pi Q = 0 with one balance equation replaced by a pinned component, then normalizes (sparse LU).
/// Throws SingularSystem for reducible chains, SolverError above the dimension limit.
SteadyStateDistribution steady_state_direct(const SparseGenerator &gen,
                                            const DirectOptions &opts = {});

/// Power iteration on the uniformized chain P = I + Q / L, L = 1.01 * max exit rate,
/// until successive iterates differ by less than `tol` in max-norm.
SteadyStateDistribution steady_state_iterative(const SparseGenerator &gen,
                                               const IterativeOptions &opts = {});

enum class SolverChoice { Auto, Direct, Iterative };

struct SolveOptions {
    SolverChoice choice = SolverChoice::Auto;
    DirectOptions direct;
    IterativeOptions iterative;
};

/// Auto picks the direct solver up to its dimension limit.
SteadyStateDistribution steady_state(const SparseGenerator &gen, const SolveOptions &opts = {});

/// Solves the chain restricted to states reachable from `root`; the result is
/// expanded back to full dimension with zeros for pruned states.
SteadyStateDistribution steady_state_from(const SparseGenerator &gen, std::size_t root,
                                          const SolveOptions &opts = {});

} // namespace tfrc::ctmc
