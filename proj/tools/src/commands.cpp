#include "tfrc/cli/commands.hpp"

#include "tfrc/des.hpp"
#include "tfrc/errors.hpp"
#include "tfrc/system_chain.hpp"

#include "CLI11.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

namespace tfrc::cli {

namespace {

constexpr const char *kVersion = "0.1.0";

json number(double v) { return std::isfinite(v) ? json(round12(v)) : json(nullptr); }

json optional_number(const std::optional<double> &v) { return v ? number(*v) : json(nullptr); }

json header(const char *command, const RunSpec &spec) {
    json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["config"] = to_json(spec);
    j["config_hash"] = config_hash(spec);
    j["model_hash"] = model_hash(spec);
    return j;
}

ctmc::SolveOptions solve_options(const RunSpec &spec) {
    ctmc::SolveOptions o;
    o.choice = spec.solver.method;
    o.direct.max_dimension = spec.solver.direct_limit;
    o.iterative.tol = spec.solver.tol;
    o.iterative.max_iterations = spec.solver.max_iterations;
    return o;
}

json user_json(const UserDistribution &u) {
    json j;
    j["idle"] = number(u.idle);
    j["single_t1"] = number(u.single_t1);
    j["single_t2"] = number(u.single_t2);
    for (MultiClass c : kMultiClasses) {
        json v = json::array();
        for (double p : u.multi[index(c)])
            v.push_back(number(p));
        j[std::string(to_string(c))] = v;
    }
    return j;
}

json rates_json(const HandoffRates &r) {
    json j;
    j["single_t1"] = number(r.single_t1);
    j["single_t2"] = number(r.single_t2);
    for (MultiClass c : kMultiClasses) {
        json v = json::array();
        for (double p : r.multi[index(c)])
            v.push_back(number(p));
        j[std::string(to_string(c))] = v;
    }
    return j;
}

HandoffRates simulator_inflow(const RunSpec &spec, const WithdrawalSchedule &sched) {
    ModelConfig inflow = spec.model;
    inflow.stairs = spec.simulation.handoff_stairs;
    return handoff_rates(spec.model,
                         user_steady_state(build_user_chain(inflow, sched), solve_options(spec)));
}

std::string csv_cell(const json &v) {
    if (v.is_null())
        return "";
    if (v.is_string())
        return v.get<std::string>();
    return v.dump();
}

} // namespace

int exit_code_for_current_exception(std::ostream &err) {
    try {
        throw;
    } catch (const ConfigError &e) {
        err << "config error: " << e.what() << '\n';
        return kConfigInvalid;
    } catch (const CapacityExplosion &e) {
        err << "capacity error: " << e.what() << '\n';
        return kCapacityExplosion;
    } catch (const SolverError &e) {
        err << "solver error: " << e.what() << '\n';
        return kSolverFailure;
    } catch (const SimulationAssertion &e) {
        err << "simulation assertion: " << e.what() << '\n';
        return kSimulationAssertion;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }
}

json metrics_json(const MetricsReport &r) {
    json j = json::object();
    for (const auto &[name, e] : metric_table(r)) {
        json m;
        m["value"] = optional_number(e.value);
        if (r.provenance == Provenance::Simulated)
            m["half_width"] = optional_number(e.half_width);
        j[name] = m;
    }
    return j;
}

json solve_report(const RunSpec &spec) {
    json out = header("solve", spec);
    const WithdrawalSchedule sched = spec.resolved_schedule();
    json results = json::array();
    for (int m : spec.solver.stairs) {
        ModelConfig cfg = spec.model;
        cfg.stairs = m;
        const auto user = user_steady_state(build_user_chain(cfg, sched), solve_options(spec));
        const auto rates = handoff_rates(cfg, user);
        const auto chain = build_system_chain(cfg, sched, rates, spec.solver.state_limit);
        const auto pi = solve_system(chain, solve_options(spec));
        const auto metrics = compute_metrics(chain, pi, spec.metrics);

        std::vector<double> by_load(static_cast<std::size_t>(cfg.channels) + 1, 0.0);
        const auto macro = macro_distribution(chain, pi);
        double empty = 0.0;
        for (std::size_t k = 0; k < macro.size(); ++k) {
            by_load[static_cast<std::size_t>(cell_load(chain.states[k], cfg, sched))] += macro[k];
            if (busy_users(chain.states[k]) == 0)
                empty += macro[k];
        }
        json loads = json::array();
        for (double p : by_load)
            loads.push_back(number(p));

        json r;
        r["stairs"] = m;
        r["macro_states"] = chain.states.size();
        r["stair_states"] = chain.dimension();
        r["solver"] = {{"kind", pi.solver == ctmc::SolverKind::Direct ? "direct" : "iterative"},
                       {"residual", number(pi.residual_norm)},
                       {"iterations", pi.iterations}};
        r["metrics"] = metrics_json(metrics);
        r["user_distribution"] = user_json(user);
        r["handoff_rates"] = rates_json(rates);
        r["empty_cell_probability"] = number(empty);
        r["load_distribution"] = loads;
        results.push_back(r);
    }
    out["results"] = results;
    return out;
}

json simulate_report(const RunSpec &spec, std::ostream *trace) {
    json out = header("simulate", spec);
    const WithdrawalSchedule sched = spec.resolved_schedule();
    const HandoffRates rates = simulator_inflow(spec, sched);

    des::ReplicationOptions o;
    o.replications = spec.simulation.replications;
    o.horizon = spec.simulation.horizon;
    o.master_seed = spec.simulation.seed;
    o.warmup_fraction = spec.simulation.warmup_fraction;
    o.threads = spec.simulation.threads;
    const auto stats = des::run_replications(spec.model, sched, rates, o);
    if (trace) {
        des::RunOptions ro;
        ro.horizon = o.horizon;
        ro.seed = des::replication_seed(o.master_seed, 0);
        ro.warmup_fraction = o.warmup_fraction;
        ro.trace = trace;
        des::run(spec.model, sched, rates, ro);
    }
    const auto report = des::estimate(stats, spec.model, spec.metrics);

    json seeds = json::array();
    std::uint64_t events = 0;
    int peak = 0;
    for (const auto &s : stats) {
        seeds.push_back(s.seed);
        events += s.events;
        peak = std::max(peak, s.peak_load);
    }
    out["replications"] = stats.size();
    out["seeds"] = seeds;
    out["events"] = events;
    out["peak_load"] = peak;
    out["handoff_rates"] = rates_json(rates);
    out["metrics"] = metrics_json(report);
    return out;
}

json compare_report(const json &analytic, const json &simulated) {
    if (analytic.value("command", "") != "solve")
        throw ConfigError("compare.analytic", "not a solve report");
    if (simulated.value("command", "") != "simulate")
        throw ConfigError("compare.simulated", "not a simulate report");
    if (analytic.at("model_hash") != simulated.at("model_hash"))
        throw ConfigError("compare", "config-hash mismatch: the reports describe different models (" +
                                         analytic.at("model_hash").get<std::string>() + " vs " +
                                         simulated.at("model_hash").get<std::string>() + ")");

    json out;
    out["command"] = "compare";
    out["version"] = kVersion;
    out["config"] = analytic.at("config");
    out["config_hash"] = analytic.at("config_hash");
    out["model_hash"] = analytic.at("model_hash");
    out["simulation_config"] = simulated.at("config");

    const json &results = analytic.at("results");
    int m_max = 0;
    std::size_t i_max = 0;
    json stairs = json::array();
    for (std::size_t k = 0; k < results.size(); ++k) {
        const int m = results[k].at("stairs").get<int>();
        stairs.push_back(m);
        if (m > m_max) {
            m_max = m;
            i_max = k;
        }
    }
    out["stairs"] = stairs;

    json rows = json::array();
    int flags = 0;
    for (const auto &[name, sim] : simulated.at("metrics").items()) {
        json row;
        row["metric"] = name;
        json per_m = json::object();
        for (const auto &r : results)
            per_m[std::to_string(r.at("stairs").get<int>())] = r.at("metrics").at(name).at("value");
        row["analytic"] = per_m;
        row["simulated"] = sim.at("value");
        row["half_width"] = sim.at("half_width");
        const json &a = results.empty() ? json(nullptr) : results[i_max].at("metrics").at(name).at("value");
        bool flag = false;
        if (!a.is_null() && !sim.at("value").is_null() && !sim.at("half_width").is_null())
            flag = std::abs(a.get<double>() - sim.at("value").get<double>()) >
                   sim.at("half_width").get<double>();
        row["flag"] = flag;
        row["headline"] = std::find(kHeadlineMetrics.begin(), kHeadlineMetrics.end(), name) !=
                          kHeadlineMetrics.end();
        flags += flag;
        rows.push_back(row);
    }
    out["rows"] = rows;
    out["flags"] = flags;
    return out;
}

json sweep_report(const RunSpec &spec, const std::string &field, const std::vector<double> &values) {
    const auto &fields = numeric_model_fields();
    if (std::find(fields.begin(), fields.end(), field) == fields.end())
        throw ConfigError("sweep.field", "'" + field + "' is not a numeric model field");

    json out = header("sweep", spec);
    out["field"] = field;
    out["values"] = values;
    std::vector<json> groups(values.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t k; (k = next.fetch_add(1)) < values.size();) {
            json g;
            try {
                RunSpec row = with_model_field(spec, field, values[k]);
                row.solver.stairs = {spec.solver.stairs.back()};
                row.model.stairs = row.solver.stairs.back();
                const json r = solve_report(row);
                g["metrics"] = r.at("results").at(0).at("metrics");
            } catch (...) {
                std::ostringstream err;
                g["exit_code"] = exit_code_for_current_exception(err);
                std::string msg = err.str();
                if (!msg.empty() && msg.back() == '\n')
                    msg.pop_back();
                g["error"] = msg;
            }
            groups[k] = std::move(g);
        }
    };
    unsigned workers = spec.simulation.threads ? spec.simulation.threads
                                               : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, values.size()));
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < workers; ++w)
        pool.emplace_back(work);
    work();
    for (auto &t : pool)
        t.join();

    json rows = json::array();
    for (std::size_t k = 0; k < values.size(); ++k) {
        const json &g = groups[k];
        if (g.contains("error")) {
            rows.push_back({{"index", k},
                            {"value", values[k]},
                            {"metric", nullptr},
                            {"result", nullptr},
                            {"error", g.at("error")},
                            {"exit_code", g.at("exit_code")}});
            continue;
        }
        for (const auto &[name, m] : g.at("metrics").items())
            rows.push_back({{"index", k},
                            {"value", values[k]},
                            {"metric", name},
                            {"result", m.at("value")},
                            {"error", nullptr},
                            {"exit_code", 0}});
    }
    out["rows"] = rows;
    return out;
}

void write_csv(const json &report, std::ostream &os) {
    const std::string cmd = report.value("command", "");
    if (cmd == "solve") {
        os << "stairs,metric,value\n";
        for (const auto &r : report.at("results"))
            for (const auto &[name, m] : r.at("metrics").items())
                os << r.at("stairs").get<int>() << ',' << name << ',' << csv_cell(m.at("value"))
                   << '\n';
    } else if (cmd == "simulate") {
        os << "metric,value,half_width\n";
        for (const auto &[name, m] : report.at("metrics").items())
            os << name << ',' << csv_cell(m.at("value")) << ',' << csv_cell(m.at("half_width"))
               << '\n';
    } else if (cmd == "compare") {
        os << "metric";
        for (const auto &m : report.at("stairs"))
            os << ",analytic_m" << m.get<int>();
        os << ",simulated,half_width,flag\n";
        for (const auto &row : report.at("rows")) {
            os << row.at("metric").get<std::string>();
            for (const auto &m : report.at("stairs"))
                os << ',' << csv_cell(row.at("analytic").at(std::to_string(m.get<int>())));
            os << ',' << csv_cell(row.at("simulated")) << ',' << csv_cell(row.at("half_width"))
               << ',' << (row.at("flag").get<bool>() ? 1 : 0) << '\n';
        }
    } else if (cmd == "sweep") {
        os << "index,field,value,metric,result,error\n";
        for (const auto &row : report.at("rows")) {
            std::string err = csv_cell(row.at("error"));
            std::replace(err.begin(), err.end(), ',', ';');
            os << row.at("index").get<std::size_t>() << ',' << report.at("field").get<std::string>()
               << ',' << csv_cell(row.at("value")) << ',' << csv_cell(row.at("metric")) << ','
               << csv_cell(row.at("result")) << ',' << err << '\n';
        }
    }
}

void print_compare(const json &report, std::ostream &os) {
    os << std::left << std::setw(28) << "metric";
    for (const auto &m : report.at("stairs"))
        os << std::setw(16) << ("M=" + std::to_string(m.get<int>()));
    os << std::setw(16) << "simulated" << std::setw(14) << "+/-" << "flag\n";
    auto cell = [](const json &v) {
        if (v.is_null())
            return std::string("undefined");
        std::ostringstream s;
        s << std::setprecision(6) << v.get<double>();
        return s.str();
    };
    for (const auto &row : report.at("rows")) {
        if (!row.at("headline").get<bool>())
            continue;
        os << std::setw(28) << row.at("metric").get<std::string>();
        for (const auto &m : report.at("stairs"))
            os << std::setw(16) << cell(row.at("analytic").at(std::to_string(m.get<int>())));
        os << std::setw(16) << cell(row.at("simulated")) << std::setw(14)
           << cell(row.at("half_width")) << (row.at("flag").get<bool>() ? "OUTSIDE CI" : "") << '\n';
    }
    os << report.at("flags").get<int>() << " flagged metric(s)\n";
}

int run_cli(int argc, char **argv, std::ostream &out, std::ostream &err) {
    CLI::App app{"Single-cell admission control with time-frequency resource conversion: "
                 "analytic Markov solver and event simulator"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    struct Common {
        std::string config, out_path, csv_path, trace_path, solver;
        std::optional<std::uint64_t> seed;
        std::optional<std::size_t> replications;
        std::optional<double> horizon, tol;
        std::vector<int> stairs;
    };
    Common c;
    std::string analytic_path, simulated_path, field, values_text;

    auto add_common = [&](CLI::App *sub, bool sim) {
        sub->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--out", c.out_path, "write the JSON report here (default stdout)");
        sub->add_option("--csv", c.csv_path, "also write a flat CSV table");
        sub->add_option("--stairs", c.stairs, "stair counts M[,M...]")->delimiter(',');
        sub->add_option("--tol", c.tol, "iterative solver tolerance");
        sub->add_option("--solver", c.solver, "direct or iterative")
            ->check(CLI::IsMember({"auto", "direct", "iterative"}));
        if (sim) {
            sub->add_option("--seed", c.seed, "master seed");
            sub->add_option("--replications", c.replications, "independent replications");
            sub->add_option("--horizon", c.horizon, "simulated time per replication");
        }
    };

    CLI::App *solve = app.add_subcommand("solve", "steady-state metrics from the Markov chain");
    add_common(solve, false);
    CLI::App *simulate = app.add_subcommand("simulate", "replicated event simulation");
    add_common(simulate, true);
    simulate->add_option("--trace", c.trace_path, "event trace of replication 0");
    CLI::App *compare = app.add_subcommand("compare", "analytic values against simulation CIs");
    add_common(compare, true);
    compare->add_option("--analytic", analytic_path, "existing solve report");
    compare->add_option("--simulated", simulated_path, "existing simulate report");
    CLI::App *sweep = app.add_subcommand("sweep", "analytic metrics over a model field");
    add_common(sweep, false);
    sweep->add_option("--field", field, "numeric model field")->required();
    sweep->add_option("--values", values_text, "comma-separated values (may be empty)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        auto spec_json = [&] {
            json j = json::object();
            if (!c.config.empty()) {
                std::ifstream in(c.config);
                try {
                    j = json::parse(in, nullptr, true, true);
                } catch (const json::parse_error &e) {
                    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
                }
            }
            apply_env(j, environment_overrides());
            if (!c.stairs.empty())
                j["solver"]["stairs"] = c.stairs;
            if (c.tol)
                j["solver"]["tol"] = *c.tol;
            if (!c.solver.empty())
                j["solver"]["method"] = c.solver;
            if (c.seed)
                j["simulation"]["seed"] = *c.seed;
            if (c.replications)
                j["simulation"]["replications"] = *c.replications;
            if (c.horizon)
                j["simulation"]["horizon"] = *c.horizon;
            return j;
        };

        json report;
        if (solve->parsed()) {
            report = solve_report(parse_spec(spec_json()));
        } else if (simulate->parsed()) {
            const RunSpec spec = parse_spec(spec_json());
            std::ofstream trace;
            if (!c.trace_path.empty()) {
                trace.open(c.trace_path);
                if (!trace)
                    throw std::runtime_error("cannot write " + c.trace_path);
            }
            report = simulate_report(spec, trace.is_open() ? &trace : nullptr);
        } else if (compare->parsed()) {
            auto read = [](const std::string &path, const char *which) {
                std::ifstream in(path);
                if (!in)
                    throw ConfigError(which, "cannot open " + path);
                try {
                    return json::parse(in);
                } catch (const json::parse_error &e) {
                    throw ConfigError(which, std::string("invalid JSON: ") + e.what());
                }
            };
            json a, s;
            if (!analytic_path.empty() || !simulated_path.empty()) {
                if (analytic_path.empty() || simulated_path.empty())
                    throw ConfigError("compare", "--analytic and --simulated go together");
                a = read(analytic_path, "compare.analytic");
                s = read(simulated_path, "compare.simulated");
            } else {
                const RunSpec spec = parse_spec(spec_json());
                a = solve_report(spec);
                s = simulate_report(spec);
            }
            report = compare_report(a, s);
            print_compare(report, err);
        } else {
            const RunSpec spec = parse_spec(spec_json());
            std::vector<double> values;
            std::stringstream ss(values_text);
            for (std::string tok; std::getline(ss, tok, ',');) {
                if (tok.find_first_not_of(" \t") == std::string::npos)
                    continue;
                std::size_t used = 0;
                double v = 0.0;
                try {
                    v = std::stod(tok, &used);
                } catch (const std::exception &) {
                    used = 0;
                }
                if (used == 0 || tok.find_first_not_of(" \t", used) != std::string::npos)
                    throw ConfigError("sweep.values", "'" + tok + "' is not a number");
                values.push_back(v);
            }
            report = sweep_report(spec, field, values);
        }

        if (c.out_path.empty()) {
            out << report.dump(2) << '\n';
        } else {
            std::ofstream f(c.out_path);
            if (!f)
                throw std::runtime_error("cannot write " + c.out_path);
            f << report.dump(2) << '\n';
        }
        if (!c.csv_path.empty()) {
            std::ofstream f(c.csv_path);
            if (!f)
                throw std::runtime_error("cannot write " + c.csv_path);
            write_csv(report, f);
        }
        return kOk;
    } catch (...) {
        return exit_code_for_current_exception(err);
    }
}

} // namespace tfrc::cli
