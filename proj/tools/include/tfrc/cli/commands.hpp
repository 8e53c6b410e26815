#pragma once

// Subcommands of the tfrc tool. Each builds a self-describing JSON report that
// embeds the resolved configuration and its hashes.

#include "tfrc/cli/spec.hpp"
#include "tfrc/metrics.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace tfrc::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kConfigInvalid = 2,
    kCapacityExplosion = 3,
    kSolverFailure = 4,
    kSimulationAssertion = 5,
};

/// Maps the in-flight exception to an exit code and writes a one-line message to `err`.
int exit_code_for_current_exception(std::ostream &err);

/// Metric table as {name: {"value": v|null[, "half_width": h|null]}}.
json metrics_json(const MetricsReport &r);

/// Analytic solve at every requested stair count.
json solve_report(const RunSpec &spec);

/// Replicated simulation; writes replication 0's event trace to `trace` when given.
json simulate_report(const RunSpec &spec, std::ostream *trace = nullptr);

/// Side-by-side table of two reports. Throws ConfigError if their model hashes differ.
json compare_report(const json &analytic, const json &simulated);

/// Analytic solve (largest requested stair count) for each value of a numeric model field.
/// Per-row failures are recorded inline.
json sweep_report(const RunSpec &spec, const std::string &field, const std::vector<double> &values);

/// Flat CSV rendering of any report produced above.
void write_csv(const json &report, std::ostream &os);

/// Human-readable compare table.
void print_compare(const json &report, std::ostream &os);

/// Entry point of the tfrc executable.
int run_cli(int argc, char **argv, std::ostream &out, std::ostream &err);

} // namespace tfrc::cli
