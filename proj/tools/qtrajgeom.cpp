#include <cstdlib>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "commands.hpp"
#include "config.hpp"
#include "qtrajgeom/error.hpp"

#ifndef QTRAJGEOM_VERSION
#define QTRAJGEOM_VERSION "unknown"
#endif

int main(int argc, char** argv) {
    using namespace qtrajgeom;

    CLI::App app{"Monitored-qubit trajectories, optimal paths and geometric phases"};
    app.require_subcommand(1, 1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    long long seed = -1;

    for (const std::string& name : cli::command_names()) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--set", overrides, "override a config key, key=value");
        sub->add_option("--out", out_dir, "output directory (default $QTRAJGEOM_OUT or .)");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--seed", seed, "random seed")->check(CLI::NonNegativeNumber);
    }
    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        cli::Json config = cli::load_config_file(config_path);
        for (const auto& kv : overrides) cli::apply_override(config, kv);
        if (seed >= 0) {
            bool takes_seed = false;
            for (const auto& f : cli::schema_for(command)) takes_seed = takes_seed || f.name == "seed";
            if (takes_seed) {
                config["seed"] = seed;
            } else {
                std::cerr << "qtrajgeom: " << command << " is deterministic; --seed ignored\n";
            }
        }
        config = cli::validate(config, command);

        cli::RunContext ctx;
        if (out_dir.empty()) {
            const char* env = std::getenv("QTRAJGEOM_OUT");
            out_dir = env && *env ? env : ".";
        }
        ctx.out_dir = out_dir;
        ctx.threads = threads;
        ctx.version = QTRAJGEOM_VERSION;
        ctx.hash = cli::config_hash(config);
        ctx.log = &std::cerr;
        return cli::run_command(command, config, ctx);
    } catch (const Error& e) {
        std::cerr << "qtrajgeom: " << e.what() << '\n';
        return e.code() == ErrorCode::ConfigError ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "qtrajgeom: " << e.what() << '\n';
        return 1;
    }
}
