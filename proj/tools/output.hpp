#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace qtrajgeom::cli {

// One CSV cell. Doubles are written with 17 significant digits.
std::string cell(double v);
std::string cell(long long v);
std::string cell(int v);
std::string cell(std::size_t v);
std::string cell(const std::string& v);
std::string cell(const char* v);

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    template <class... Ts>
    void row(const Ts&... values) {
        rows_.push_back({cell(values)...});
    }
    std::size_t size() const { return rows_.size(); }

    // The first line is a comment carrying the version and config hash, then
    // the header row; LF line endings throughout.
    void write(const std::filesystem::path& path, const std::string& version,
               const std::string& hash) const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace qtrajgeom::cli
