#include "artss/run_report.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "artss/error.hpp"
#include "artss/latent_store.hpp"

namespace artss {

void RunReport::add_row(std::vector<Cell> row) {
    if (row.size() != columns.size()) {
        fail(ErrorCode::InvalidArgument, "report row has " + std::to_string(row.size()) +
                                             " cells, expected " + std::to_string(columns.size()));
    }
    rows.push_back(std::move(row));
}

Json RunReport::to_json() const {
    Json j;
    j["experiment"] = experiment;
    j["config"] = config;
    j["seeds"] = seeds;
    j["aggregates"] = aggregates;
    j["rows"] = rows.size();
    return j;
}

std::string format_cell(const RunReport::Cell& cell) {
    if (const auto* s = std::get_if<std::string>(&cell)) return *s;
    if (const auto* i = std::get_if<std::int64_t>(&cell)) return std::to_string(*i);
    return latent::format_double(std::get<double>(cell));
}

void RunReport::write_csv(std::ostream& out) const {
    for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
    out << '\n';
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_cell(row[c]);
        out << '\n';
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out << text;
    if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

void RunReport::save(const std::filesystem::path& dir) const {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
    write_text_file(dir / "report.json", to_json().dump(2) + "\n");
    std::ostringstream csv;
    write_csv(csv);
    write_text_file(dir / "trials.csv", csv.str());
}

}  // namespace artss
