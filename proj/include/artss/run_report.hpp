#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace artss {

using Json = nlohmann::ordered_json;

// Serializable experiment output: per-row table plus aggregates, with the
// resolved config and seeds echoed so the run can be reproduced.
struct RunReport {
    using Cell = std::variant<std::string, std::int64_t, double>;

    std::string experiment;
    Json config = Json::object();
    Json aggregates = Json::object();
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    // Throws InvalidArgument when the row width differs from `columns`.
    void add_row(std::vector<Cell> row);

    Json to_json() const;  // everything except the rows
    void write_csv(std::ostream& out) const;
    // Writes report.json and trials.csv into `dir` (created if missing).
    void save(const std::filesystem::path& dir) const;
};

std::string format_cell(const RunReport::Cell& cell);

// Writes `text` to `path`, throwing Io on failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace artss
