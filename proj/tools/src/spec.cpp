#include "tfrc/cli/spec.hpp"

#include "tfrc/errors.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <variant>

extern char **environ;

namespace tfrc::cli {

namespace {

using IntField = int ModelConfig::*;
using RealField = double ModelConfig::*;

struct ModelField {
    const char *name;
    std::variant<IntField, RealField> member;
};

// Serialization order of the model section. `stairs` lives in the solver section.
const std::vector<ModelField> &model_fields() {
    static const std::vector<ModelField> fields{
        {"channels", &ModelConfig::channels},
        {"recovery_reserve", &ModelConfig::recovery_reserve},
        {"handoff_reserve", &ModelConfig::handoff_reserve},
        {"t1_subchannels", &ModelConfig::t1_subchannels},
        {"t2_subchannels", &ModelConfig::t2_subchannels},
        {"call_rate", &ModelConfig::call_rate},
        {"t1_share", &ModelConfig::t1_share},
        {"t2_share", &ModelConfig::t2_share},
        {"t1_service_rate", &ModelConfig::t1_service_rate},
        {"t2_service_rate", &ModelConfig::t2_service_rate},
        {"mobility_rate", &ModelConfig::mobility_rate},
        {"users", &ModelConfig::users},
        {"feedback_period", &ModelConfig::feedback_period},
        {"withdrawal_step", &ModelConfig::withdrawal_step},
        {"subchannel_bitrate", &ModelConfig::subchannel_bitrate},
    };
    return fields;
}

const char *const kClassKeys[4] = {"I", "II", "III", "IV"};

[[noreturn]] void fail(const std::string &field, const std::string &why) {
    throw ConfigError(field, why);
}

void reject_unknown(const json &obj, const std::string &section,
                    const std::vector<std::string> &known) {
    if (!obj.is_object())
        fail(section, "must be an object");
    for (const auto &[k, v] : obj.items())
        if (std::find(known.begin(), known.end(), k) == known.end())
            fail(section + "." + k, "unknown key");
}

int as_int(const json &v, const std::string &field) {
    if (v.is_number_integer())
        return v.get<int>();
    if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>())
        return static_cast<int>(v.get<double>());
    fail(field, "must be an integer");
}

std::uint64_t as_u64(const json &v, const std::string &field) {
    if (v.is_number_unsigned())
        return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    fail(field, "must be a nonnegative integer");
}

double as_real(const json &v, const std::string &field) {
    if (!v.is_number())
        fail(field, "must be a number");
    return v.get<double>();
}

const char *method_name(ctmc::SolverChoice c) {
    switch (c) {
    case ctmc::SolverChoice::Direct: return "direct";
    case ctmc::SolverChoice::Iterative: return "iterative";
    case ctmc::SolverChoice::Auto: break;
    }
    return "auto";
}

json schedule_json(const std::array<std::vector<int>, 4> &s) {
    json j = json::object();
    for (int c = 0; c < 4; ++c)
        j[kClassKeys[c]] = s[c];
    return j;
}

std::string upper(std::string s) {
    for (char &ch : s)
        ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return s;
}

std::string lower(std::string s) {
    for (char &ch : s)
        ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

} // namespace

WithdrawalSchedule RunSpec::resolved_schedule() const {
    if (schedule)
        return WithdrawalSchedule(*schedule, model);
    return default_schedule(model);
}

void RunSpec::validate() const {
    try {
        model.validate();
    } catch (const ConfigError &e) {
        const std::string what = e.what();
        throw ConfigError("model." + e.field(), what.substr(what.find(": ") + 2));
    }
    (void)resolved_schedule();
    if (!(solver.tol > 0.0))
        fail("solver.tol", "must be > 0");
    if (solver.stairs.empty())
        fail("solver.stairs", "needs at least one stair count");
    for (int m : solver.stairs)
        if (m < 1)
            fail("solver.stairs", "stair counts must be >= 1");
    if (solver.max_iterations == 0)
        fail("solver.max_iterations", "must be >= 1");
    if (simulation.replications < 2)
        fail("simulation.replications", "must be >= 2");
    if (!(simulation.horizon > 0.0) || !std::isfinite(simulation.horizon))
        fail("simulation.horizon", "must be > 0");
    if (!(simulation.warmup_fraction >= 0.0 && simulation.warmup_fraction < 1.0))
        fail("simulation.warmup_fraction", "must be in [0, 1)");
    if (simulation.handoff_stairs < 1)
        fail("simulation.handoff_stairs", "must be >= 1");
}

bool RunSpec::operator==(const RunSpec &o) const {
    return model == o.model && schedule == o.schedule && solver == o.solver &&
           simulation == o.simulation &&
           metrics.include_cap_rejections == o.metrics.include_cap_rejections;
}

RunSpec parse_spec(const json &j) {
    RunSpec spec;
    if (!j.is_object())
        fail("config", "top level must be an object");
    reject_unknown(j, "config", {"model", "schedule", "solver", "simulation", "metrics"});

    if (j.contains("model")) {
        const json &m = j.at("model");
        std::vector<std::string> known;
        for (const auto &f : model_fields())
            known.emplace_back(f.name);
        reject_unknown(m, "model", known);
        for (const auto &f : model_fields()) {
            if (!m.contains(f.name))
                continue;
            const std::string field = std::string("model.") + f.name;
            std::visit(
                [&](auto member) {
                    using T = std::remove_reference_t<decltype(spec.model.*member)>;
                    if constexpr (std::is_same_v<T, int>)
                        spec.model.*member = as_int(m.at(f.name), field);
                    else
                        spec.model.*member = as_real(m.at(f.name), field);
                },
                f.member);
        }
    }

    if (j.contains("solver")) {
        const json &s = j.at("solver");
        reject_unknown(s, "solver",
                       {"method", "tol", "max_iterations", "direct_limit", "state_limit", "stairs"});
        if (s.contains("method")) {
            const json &v = s.at("method");
            const std::string name = v.is_string() ? v.get<std::string>() : "";
            if (name == "auto")
                spec.solver.method = ctmc::SolverChoice::Auto;
            else if (name == "direct")
                spec.solver.method = ctmc::SolverChoice::Direct;
            else if (name == "iterative")
                spec.solver.method = ctmc::SolverChoice::Iterative;
            else
                fail("solver.method", "must be auto, direct or iterative");
        }
        if (s.contains("tol"))
            spec.solver.tol = as_real(s.at("tol"), "solver.tol");
        if (s.contains("max_iterations"))
            spec.solver.max_iterations = as_u64(s.at("max_iterations"), "solver.max_iterations");
        if (s.contains("direct_limit"))
            spec.solver.direct_limit = as_u64(s.at("direct_limit"), "solver.direct_limit");
        if (s.contains("state_limit"))
            spec.solver.state_limit = as_u64(s.at("state_limit"), "solver.state_limit");
        if (s.contains("stairs")) {
            const json &v = s.at("stairs");
            spec.solver.stairs.clear();
            if (v.is_array()) {
                for (const auto &e : v)
                    spec.solver.stairs.push_back(as_int(e, "solver.stairs"));
            } else {
                spec.solver.stairs.push_back(as_int(v, "solver.stairs"));
            }
        }
    }

    if (j.contains("simulation")) {
        const json &s = j.at("simulation");
        reject_unknown(s, "simulation",
                       {"replications", "horizon", "seed", "warmup_fraction", "handoff_stairs",
                        "threads"});
        if (s.contains("replications"))
            spec.simulation.replications = as_u64(s.at("replications"), "simulation.replications");
        if (s.contains("horizon"))
            spec.simulation.horizon = as_real(s.at("horizon"), "simulation.horizon");
        if (s.contains("seed"))
            spec.simulation.seed = as_u64(s.at("seed"), "simulation.seed");
        if (s.contains("warmup_fraction"))
            spec.simulation.warmup_fraction =
                as_real(s.at("warmup_fraction"), "simulation.warmup_fraction");
        if (s.contains("handoff_stairs"))
            spec.simulation.handoff_stairs = as_int(s.at("handoff_stairs"), "simulation.handoff_stairs");
        if (s.contains("threads"))
            spec.simulation.threads =
                static_cast<unsigned>(as_u64(s.at("threads"), "simulation.threads"));
    }

    if (j.contains("metrics")) {
        const json &s = j.at("metrics");
        reject_unknown(s, "metrics", {"include_cap_rejections"});
        if (s.contains("include_cap_rejections")) {
            if (!s.at("include_cap_rejections").is_boolean())
                fail("metrics.include_cap_rejections", "must be true or false");
            spec.metrics.include_cap_rejections = s.at("include_cap_rejections").get<bool>();
        }
    }

    if (j.contains("schedule") && !j.at("schedule").is_null()) {
        const json &s = j.at("schedule");
        reject_unknown(s, "schedule", {"I", "II", "III", "IV"});
        // Classes left out take their default stages.
        ModelConfig probe = spec.model;
        std::array<std::vector<int>, 4> stages;
        bool defaults_ok = true;
        try {
            stages = default_schedule(probe).all();
        } catch (const ConfigError &) {
            defaults_ok = false;
        }
        for (int c = 0; c < 4; ++c) {
            const std::string field = std::string("schedule.") + kClassKeys[c];
            if (!s.contains(kClassKeys[c])) {
                if (!defaults_ok)
                    fail(field, "missing and no default is available");
                continue;
            }
            const json &v = s.at(kClassKeys[c]);
            if (!v.is_array())
                fail(field, "must be a list of withdrawn amounts");
            stages[c].clear();
            for (const auto &e : v)
                stages[c].push_back(as_int(e, field));
        }
        spec.schedule = stages;
    }

    spec.model.stairs = spec.solver.stairs.empty() ? 1 : spec.solver.stairs.back();
    spec.validate();
    return spec;
}

json to_json(const RunSpec &spec) {
    json j;
    json &m = j["model"];
    for (const auto &f : model_fields())
        std::visit([&](auto member) { m[f.name] = spec.model.*member; }, f.member);
    j["schedule"] = spec.schedule ? schedule_json(*spec.schedule) : json(nullptr);
    j["solver"] = {{"method", method_name(spec.solver.method)},
                   {"tol", spec.solver.tol},
                   {"max_iterations", spec.solver.max_iterations},
                   {"direct_limit", spec.solver.direct_limit},
                   {"state_limit", spec.solver.state_limit},
                   {"stairs", spec.solver.stairs}};
    j["simulation"] = {{"replications", spec.simulation.replications},
                       {"horizon", spec.simulation.horizon},
                       {"seed", spec.simulation.seed},
                       {"warmup_fraction", spec.simulation.warmup_fraction},
                       {"handoff_stairs", spec.simulation.handoff_stairs},
                       {"threads", spec.simulation.threads}};
    j["metrics"] = {{"include_cap_rejections", spec.metrics.include_cap_rejections}};
    return j;
}

void apply_env(json &j, const std::map<std::string, std::string> &env) {
    static const std::vector<std::string> sections{"model", "schedule", "solver", "simulation",
                                                   "metrics"};
    if (j.is_null())
        j = json::object();
    for (const auto &[name, raw] : env) {
        if (name.rfind("TFRC_", 0) != 0)
            continue;
        const std::string rest = name.substr(5);
        std::string section, key;
        for (const auto &s : sections) {
            const std::string prefix = upper(s) + "_";
            if (rest.rfind(prefix, 0) == 0 && rest.size() > prefix.size()) {
                section = s;
                key = rest.substr(prefix.size());
                break;
            }
        }
        if (section.empty())
            fail("env." + name, "does not name a config section");
        key = section == "schedule" ? upper(key) : lower(key);
        json value;
        try {
            value = json::parse(raw);
        } catch (const json::parse_error &) {
            value = raw;
        }
        if (!j.contains(section) || j[section].is_null())
            j[section] = json::object();
        j[section][key] = value;
    }
}

std::map<std::string, std::string> environment_overrides() {
    std::map<std::string, std::string> out;
    for (char **e = environ; e && *e; ++e) {
        const std::string kv = *e;
        const auto eq = kv.find('=');
        if (eq != std::string::npos && kv.rfind("TFRC_", 0) == 0)
            out[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return out;
}

RunSpec load_spec(const std::string &path, const std::map<std::string, std::string> &env) {
    json j = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in)
            fail("config", "cannot open " + path);
        try {
            j = json::parse(in, nullptr, true, true);
        } catch (const json::parse_error &e) {
            fail("config", std::string("invalid JSON: ") + e.what());
        }
    }
    apply_env(j, env);
    return parse_spec(j);
}

std::string sha256_hex(const std::string &text) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr);
    std::string out;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        out += buf;
    }
    return out;
}

std::string config_hash(const RunSpec &spec) { return sha256_hex(to_json(spec).dump()); }

std::string model_hash(const RunSpec &spec) {
    json j;
    j["model"] = to_json(spec).at("model");
    j["schedule"] = schedule_json(spec.resolved_schedule().all());
    return sha256_hex(j.dump());
}

double round12(double v) {
    if (!std::isfinite(v) || v == 0.0)
        return v;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return std::strtod(buf, nullptr);
}

const std::vector<std::string> &numeric_model_fields() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto &f : model_fields())
            n.emplace_back(f.name);
        return n;
    }();
    return names;
}

RunSpec with_model_field(const RunSpec &spec, const std::string &field, double value) {
    json j = to_json(spec);
    if (!j.at("model").contains(field))
        fail("sweep.field", "'" + field + "' is not a numeric model field");
    if (j.at("model").at(field).is_number_integer()) {
        if (std::floor(value) != value)
            fail("model." + field, "must be an integer");
        j["model"][field] = static_cast<int>(value);
    } else {
        j["model"][field] = value;
    }
    // Keep the share pair consistent when one side is swept.
    if (field == "t1_share")
        j["model"]["t2_share"] = 1.0 - value;
    else if (field == "t2_share")
        j["model"]["t1_share"] = 1.0 - value;
    return parse_spec(j);
}

} // namespace tfrc::cli
