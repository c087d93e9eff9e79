#include "config.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "qtrajgeom/constants.hpp"
#include "qtrajgeom/error.hpp"

namespace qtrajgeom::cli {

namespace {

Field number(std::string name, double fallback, double lo = -1e300, double hi = 1e300,
             bool lo_open = false) {
    return {std::move(name), Kind::Number, fallback, lo, hi, lo_open, {}};
}
Field positive(std::string name, double fallback) { return number(std::move(name), fallback, 0.0, 1e300, true); }
Field integer(std::string name, long fallback, double lo = -1e300, double hi = 1e300) {
    return {std::move(name), Kind::Integer, fallback, lo, hi, false, {}};
}
Field flag(std::string name, bool fallback) { return {std::move(name), Kind::Bool, fallback, 0, 0, false, {}}; }
Field choice(std::string name, std::vector<std::string> choices) {
    Field f{std::move(name), Kind::Choice, choices.front(), 0, 0, false, {}};
    f.choices = std::move(choices);
    return f;
}
Field list(std::string name, std::vector<double> fallback, double lo = -1e300, double hi = 1e300,
           bool lo_open = false) {
    return {std::move(name), Kind::NumberList, fallback, lo, hi, lo_open, {}};
}

std::vector<double> tau_range(double lo, double hi, double step) {
    std::vector<double> out;
    for (int i = 0; lo + i * step <= hi + 1e-12; ++i) out.push_back(lo + i * step);
    return out;
}

std::map<std::string, Schema> build_schemas() {
    const double half = 0.5 * kPi;
    std::map<std::string, Schema> s;
    s["simulate"] = {
        number("Theta", half, 0.0, kPi),
        positive("tau", 0.1),
        positive("T", 1.0),
        integer("N", 100, 2, 1e7),
        choice("model", {"gaussian", "null"}),
        number("c", 1.0, 0.0),
        integer("n_traj", 500, 1, 1e9),
        integer("seed", 1, 0, 1.8e19),
        choice("init", {"equilibrium", "on_axis", "custom"}),
        number("theta0", half, 0.0, kPi),
        number("phi0", 0.0),
        positive("bin_width", 0.1),
        integer("winding", 1, -100, 100),
        integer("dump_trajectories", 20, 0, 1e9),
    };
    s["optimal"] = {
        choice("mode", {"branches", "theta_scan", "equilibrium"}),
        list("Theta_list", {half}, 0.0, kPi),
        list("tau_list", {0.1}, 0.0, 1e300, true),
        integer("n_theta", 128, 3, 1e6),
        number("theta_lo", 0.05, 0.0, half, true),
        integer("steps", 2000, 100, 1e7),
        positive("tol", 1e-9),
        flag("write_paths", false),
    };
    s["transition"] = {
        flag("equator", true),
        flag("open", true),
        flag("equilibrium_open", true),
        flag("theta_c", false),
        flag("tau_c_eff", true),
        list("open_tau_grid", {0.05, 0.075, 0.1, 0.125, 0.15}, 0.0, 1e300, true),
        list("equilibrium_open_tau_grid", {0.15, 0.2, 0.25, 0.3}, 0.0, 1e300, true),
        integer("n_theta", 64, 3, 1e6),
        integer("steps", 256, 2, 1e7),
        positive("tol", 1e-4),
        list("theta_c_taus", tau_range(0.10, 0.20, 0.01), 0.0, 1e300, true),
        integer("theta_c_n_theta", 128, 3, 1e6),
    };
    s["chern"] = {
        list("tau_list", {0.02, 0.05, 0.2, 0.5}, 0.0, 1e300, true),
        choice("init", {"on_axis", "equilibrium"}),
        choice("record", {"greedy", "unit"}),
        integer("n_theta", 128, 3, 1e6),
        integer("steps", 256, 2, 1e7),
        number("eps", 1e-3, 0.0, half, true),
    };
    s["corrections"] = {
        list("tau_list", {0.3, 0.2, 0.1, 0.07, 0.045, 0.03, 0.02}, 0.0, 1e300, true),
        flag("find_tau_c_eff", true),
        number("tau_lo", 0.02, 0.0, 1e300, true),
        number("tau_hi", 0.3, 0.0, 1e300, true),
        flag("monte_carlo", false),
        integer("n_traj", 500, 1, 1e9),
        integer("N", 100, 2, 1e7),
        positive("bin_width", 0.1),
        integer("seed", 1, 0, 1.8e19),
    };
    return s;
}

const std::map<std::string, Schema>& schemas() {
    static const std::map<std::string, Schema> s = build_schemas();
    return s;
}

[[noreturn]] void fail(const std::string& field, const std::string& what) {
    throw Error(ErrorCode::ConfigError, "field '" + field + "': " + what);
}

void check_range(const Field& f, double v) {
    const bool below = f.lo_open ? !(v > f.lo) : !(v >= f.lo);
    if (!std::isfinite(v) || below || v > f.hi) {
        std::ostringstream msg;
        msg << v << " outside " << (f.lo_open ? "(" : "[") << f.lo << ", " << f.hi << "]";
        fail(f.name, msg.str());
    }
}

}  // namespace

const Schema& schema_for(const std::string& command) {
    const auto it = schemas().find(command);
    if (it == schemas().end()) throw Error(ErrorCode::ConfigError, "unknown command '" + command + "'");
    return it->second;
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = {"simulate", "optimal", "transition", "chern",
                                                   "corrections"};
    return names;
}

Json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path);
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::ConfigError, path + ": " + e.what());
    }
}

void apply_override(Json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw Error(ErrorCode::ConfigError, "--set expects key=value, got '" + assignment + "'");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    Json parsed = Json::parse(value, nullptr, false);
    config[key] = parsed.is_discarded() ? Json(value) : parsed;
}

Json validate(const Json& config, const std::string& command) {
    if (!config.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
    const Schema& schema = schema_for(command);
    std::set<std::string> known;
    for (const Field& f : schema) known.insert(f.name);

    for (const auto& [key, value] : config.items()) {
        if (key == "command") {
            if (!value.is_string() || value.get<std::string>() != command) {
                fail(key, "config is for '" + value.dump() + "', not '" + command + "'");
            }
            continue;
        }
        if (!known.count(key)) fail(key, "unknown key for '" + command + "'");
    }

    Json out = Json::object();
    for (const Field& f : schema) {
        const Json v = config.contains(f.name) ? config.at(f.name) : f.fallback;
        switch (f.kind) {
            case Kind::Number:
                if (!v.is_number()) fail(f.name, "expected a number");
                check_range(f, v.get<double>());
                out[f.name] = v.get<double>();
                break;
            case Kind::Integer: {
                if (!v.is_number_integer()) fail(f.name, "expected an integer");
                check_range(f, v.get<double>());
                if (v.is_number_unsigned()) {
                    out[f.name] = v.get<std::uint64_t>();
                } else {
                    out[f.name] = v.get<std::int64_t>();
                }
                break;
            }
            case Kind::Bool:
                if (!v.is_boolean()) fail(f.name, "expected true or false");
                out[f.name] = v;
                break;
            case Kind::Choice: {
                if (!v.is_string()) fail(f.name, "expected a string");
                const auto s = v.get<std::string>();
                bool ok = false;
                for (const auto& c : f.choices) ok = ok || c == s;
                if (!ok) {
                    std::string all;
                    for (const auto& c : f.choices) all += (all.empty() ? "" : ", ") + c;
                    fail(f.name, "'" + s + "' is not one of " + all);
                }
                out[f.name] = s;
                break;
            }
            case Kind::NumberList: {
                if (!v.is_array() || v.empty()) fail(f.name, "expected a non-empty array of numbers");
                Json arr = Json::array();
                for (const auto& x : v) {
                    if (!x.is_number()) fail(f.name, "expected a non-empty array of numbers");
                    check_range(f, x.get<double>());
                    arr.push_back(x.get<double>());
                }
                out[f.name] = arr;
                break;
            }
        }
    }
    return out;
}

std::string config_hash(const Json& config) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : config.dump()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    std::ostringstream out;
    out << std::hex;
    out.width(16);
    out.fill('0');
    out << h;
    return out.str();
}

}  // namespace qtrajgeom::cli
