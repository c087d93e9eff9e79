#pragma once

#include <filesystem>
#include <ostream>
#include <string>

#include "config.hpp"

namespace qtrajgeom::cli {

struct RunContext {
    std::filesystem::path out_dir;
    int threads = 1;
    std::string version;
    std::string hash;
    std::ostream* log = nullptr;
};

// Runs a validated config and writes its outputs. Returns 0 when every
// requested point completed and 1 otherwise; completed rows are written either
// way.
int run_command(const std::string& command, const Json& config, const RunContext& ctx);

}  // namespace qtrajgeom::cli
