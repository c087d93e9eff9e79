#pragma once

// Experiment configuration: a flat JSON object per command, validated against a
// schema before anything runs.

#include <string>
#include <vector>

#include <json.hpp>

namespace qtrajgeom::cli {

using Json = nlohmann::json;

enum class Kind { Number, Integer, Bool, Choice, NumberList };

struct Field {
    std::string name;
    Kind kind = Kind::Number;
    Json fallback;
    double lo = -1e300;
    double hi = 1e300;
    bool lo_open = false;  // value must exceed lo strictly
    std::vector<std::string> choices;
};

using Schema = std::vector<Field>;

const Schema& schema_for(const std::string& command);
const std::vector<std::string>& command_names();

Json load_config_file(const std::string& path);

// Applies "key=value"; the value is parsed as JSON and kept as a string when
// that fails.
void apply_override(Json& config, const std::string& assignment);

// Fills defaults and checks types, ranges and choices. Unknown keys and a
// "command" entry that names another command are rejected with ConfigError.
Json validate(const Json& config, const std::string& command);

// FNV-1a of the compact dump of a validated config, as 16 hex digits.
std::string config_hash(const Json& config);

}  // namespace qtrajgeom::cli
