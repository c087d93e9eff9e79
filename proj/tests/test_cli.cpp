#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "config.hpp"
#include "qtrajgeom/error.hpp"

using namespace qtrajgeom;
using cli::Json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string error_of(const Json& config, const std::string& command) {
    try {
        cli::validate(config, command);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ConfigError);
        return e.what();
    }
    return {};
}

int run(const std::string& args) {
    const char* bin = std::getenv("QTRAJGEOM_BIN");
    REQUIRE(bin != nullptr);
    const int status = std::system((std::string(bin) + " " + args + " 2>/dev/null").c_str());
    return WEXITSTATUS(status);
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("qtrajgeom_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("validation") {
    CHECK(error_of({{"Theta", 4.0}}, "simulate").find("'Theta'") != std::string::npos);
    CHECK(error_of({{"bogus", 1}}, "simulate").find("bogus") != std::string::npos);
    CHECK(error_of({{"command", "chern"}}, "simulate") != "");
    CHECK(error_of({{"model", "poisson"}}, "simulate").find("'model'") != std::string::npos);
    CHECK(error_of({{"n_traj", 2.5}}, "simulate").find("'n_traj'") != std::string::npos);
    CHECK(error_of({{"tau", 0.0}}, "simulate").find("'tau'") != std::string::npos);

    const Json full = cli::validate(Json::object(), "simulate");
    CHECK(full.at("Theta").get<double>() == doctest::Approx(1.5707963267948966));
    CHECK(full.at("n_traj").get<int>() == 500);
}

TEST_CASE("overrides") {
    Json c = Json::object();
    cli::apply_override(c, "tau=0.25");
    cli::apply_override(c, "init=on_axis");
    cli::apply_override(c, "tau_list=[0.1,0.2]");
    CHECK(c.at("tau").get<double>() == 0.25);
    CHECK(c.at("init").get<std::string>() == "on_axis");
    CHECK(c.at("tau_list").size() == 2);
    CHECK_THROWS_AS(cli::apply_override(c, "novalue"), Error);
}

TEST_CASE("config hash") {
    const Json a = cli::validate({{"tau", 0.2}}, "simulate");
    const Json b = cli::validate({{"tau", 0.2}, {"n_traj", 500}}, "simulate");
    const Json c = cli::validate({{"tau", 0.3}}, "simulate");
    CHECK(cli::config_hash(a) == cli::config_hash(b));
    CHECK(cli::config_hash(a) != cli::config_hash(c));
    CHECK(cli::config_hash(a).size() == 16);
}

TEST_CASE("every shipped config validates") {
    const char* dir = std::getenv("QTRAJGEOM_CONFIGS");
    REQUIRE(dir != nullptr);
    int seen = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const Json c = cli::load_config_file(entry.path().string());
        CHECK_NOTHROW(cli::validate(c, c.at("command").get<std::string>()));
        ++seen;
    }
    CHECK(seen >= 7);
}

TEST_CASE("simulate runs are reproducible") {
    const fs::path dir = scratch("sim");
    std::ofstream(dir / "cfg.json") << R"({"command": "simulate", "tau": 0.1, "n_traj": 40, "N": 50})";
    const std::string base = "simulate --config " + (dir / "cfg.json").string() + " --seed 3 --out ";
    REQUIRE(run(base + (dir / "a").string() + " --threads 1") == 0);
    REQUIRE(run(base + (dir / "b").string() + " --threads 3") == 0);
    for (const char* name : {"ensemble.csv", "trajectories.csv"}) {
        const std::string a = slurp(dir / "a" / name), b = slurp(dir / "b" / name);
        CHECK(!a.empty());
        CHECK(a == b);
        CHECK(a.find('\r') == std::string::npos);
        CHECK(a.rfind("# qtrajgeom ", 0) == 0);
    }
    const Json summary = Json::parse(slurp(dir / "a" / "summary.json"));
    CHECK(summary.at("config").at("seed").get<int>() == 3);
}

TEST_CASE("exit codes") {
    const fs::path dir = scratch("codes");
    std::ofstream(dir / "bad.json") << R"({"command": "simulate", "Theta": 9})";
    CHECK(run("simulate --config " + (dir / "bad.json").string() + " --out " + dir.string()) == 2);

    // A tau grid that never changes winding leaves the open scan without a
    // flip, which must surface as a nonzero status.
    std::ofstream(dir / "flat.json") << R"({"command": "transition", "equator": false,
        "equilibrium_open": false, "tau_c_eff": false, "open_tau_grid": [0.3, 0.4], "n_theta": 16, "steps": 64})";
    CHECK(run("transition --config " + (dir / "flat.json").string() + " --out " + dir.string()) == 1);
    const Json out = Json::parse(slurp(dir / "transitions.json"));
    CHECK(out.at("tau_c_open").is_null());
}
