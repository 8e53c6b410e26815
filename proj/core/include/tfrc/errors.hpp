#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tfrc {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A configuration value violates a model invariant. `field()` names the offending key.
class ConfigError : public Error {
  public:
    ConfigError(std::string field, const std::string &what)
        : Error(field + ": " + what), field_(std::move(field)) {}

    const std::string &field() const noexcept { return field_; }

  private:
    std::string field_;
};

class InfeasibleState : public Error {
  public:
    using Error::Error;
};

class CapacityExplosion : public Error {
  public:
    CapacityExplosion(std::size_t states, std::size_t limit)
        : Error("state space exceeds limit: " + std::to_string(states) + " > " +
                std::to_string(limit)),
          states_(states), limit_(limit) {}

    std::size_t states() const noexcept { return states_; }
    std::size_t limit() const noexcept { return limit_; }

  private:
    std::size_t states_;
    std::size_t limit_;
};

class SolverError : public Error {
  public:
    using Error::Error;
};

/// The generator is not irreducible; `unreachable()` lists states outside the
/// communicating class of state 0.
class SingularSystem : public SolverError {
  public:
    SingularSystem(const std::string &what, std::vector<std::size_t> unreachable)
        : SolverError(what), unreachable_(std::move(unreachable)) {}

    const std::vector<std::size_t> &unreachable() const noexcept { return unreachable_; }

  private:
    std::vector<std::size_t> unreachable_;
};

class NonConvergence : public SolverError {
  public:
    using SolverError::SolverError;
};

class SimulationAssertion : public Error {
  public:
    using Error::Error;
};

class InsufficientData : public Error {
  public:
    using Error::Error;
};

} // namespace tfrc
