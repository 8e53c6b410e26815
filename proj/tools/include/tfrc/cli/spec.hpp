#pragma once

// Run configuration: model parameters plus solver, simulation and metric
// options, read from a JSON file with environment overrides.
//
// Environment overrides: TFRC_<SECTION>_<KEY>=value, e.g.
// TFRC_MODEL_CHANNELS=10 or TFRC_SIMULATION_REPLICATIONS=40. Values are parsed
// as JSON when possible (numbers, booleans, arrays) and as strings otherwise.

#include "tfrc/ctmc.hpp"
#include "tfrc/model.hpp"
#include "tfrc/system_chain.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tfrc::cli {

using json = nlohmann::ordered_json;

struct SolverSettings {
    ctmc::SolverChoice method = ctmc::SolverChoice::Auto;
    double tol = 1e-13;
    std::size_t max_iterations = 2'000'000;
    std::size_t direct_limit = ctmc::kDefaultDirectLimit;
    std::size_t state_limit = kDefaultStairStateLimit;
    std::vector<int> stairs{16};

    bool operator==(const SolverSettings &) const = default;
};

struct SimulationSettings {
    std::size_t replications = 20;
    double horizon = 5e4;
    std::uint64_t seed = 1;
    double warmup_fraction = 0.1;
    int handoff_stairs = 64;
    unsigned threads = 0;

    bool operator==(const SimulationSettings &) const = default;
};

struct RunSpec {
    ModelConfig model;
    std::optional<std::array<std::vector<int>, 4>> schedule; ///< per-class override
    SolverSettings solver;
    SimulationSettings simulation;
    MetricsOptions metrics;

    /// Override when given, default schedule otherwise.
    WithdrawalSchedule resolved_schedule() const;

    /// Throws ConfigError naming the offending field.
    void validate() const;

    bool operator==(const RunSpec &o) const;
};

/// Parses and validates. Unknown sections or keys are rejected.
RunSpec parse_spec(const json &j);

/// Serializes every field, including defaults.
json to_json(const RunSpec &spec);

/// Applies TFRC_<SECTION>_<KEY> overrides from `env` onto `j` (missing sections are created).
void apply_env(json &j, const std::map<std::string, std::string> &env);

/// Snapshot of the process environment restricted to the TFRC_ prefix.
std::map<std::string, std::string> environment_overrides();

/// Reads a config file (empty path = defaults), applies environment overrides, parses.
RunSpec load_spec(const std::string &path,
                  const std::map<std::string, std::string> &env = environment_overrides());

/// Lowercase hex SHA-256 of `text`.
std::string sha256_hex(const std::string &text);

/// Hash of the full resolved configuration.
std::string config_hash(const RunSpec &spec);

/// Hash of the model and resolved schedule only; two reports are comparable iff equal.
std::string model_hash(const RunSpec &spec);

/// Rounds to 12 significant digits for output.
double round12(double v);

/// Names of numeric model fields accepted by sweep.
const std::vector<std::string> &numeric_model_fields();

/// Copy of `spec` with model field `field` set to `value` (integers must be integral).
RunSpec with_model_field(const RunSpec &spec, const std::string &field, double value);

} // namespace tfrc::cli
