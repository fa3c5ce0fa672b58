#include "casp/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "casp/error.hpp"

namespace casp {

namespace {

nlohmann::ordered_json cell_to_json(const Cell& cell) {
    return std::visit(
        [](const auto& v) -> nlohmann::ordered_json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return nullptr;
            } else if constexpr (std::is_same_v<T, double>) {
                if (!std::isfinite(v)) return nullptr;
                return v;
            } else {
                return v;
            }
        },
        cell);
}

Cell cell_from_json(const nlohmann::ordered_json& j) {
    if (j.is_null()) return std::monostate{};
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    throw FormatError("report cell must be a scalar");
}

std::string csv_field(const Cell& cell) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return {};
            } else if constexpr (std::is_same_v<T, double>) {
                if (!std::isfinite(v)) return {};
                char buf[32];
                const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
                return std::string(buf, ptr);
            } else if constexpr (std::is_same_v<T, bool>) {
                return v ? "true" : "false";
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
                return std::to_string(v);
            } else {
                if (v.find_first_of(",\"\n\r") == std::string::npos) return v;
                std::string quoted = "\"";
                for (char c : v) {
                    if (c == '"') quoted += '"';
                    quoted += c;
                }
                return quoted + '"';
            }
        },
        cell);
}

}  // namespace

void Table::add_row(std::vector<Cell> row) {
    if (row.size() != columns.size()) {
        throw ArgumentError("table '" + name + "': row has " + std::to_string(row.size()) + " cells, expected " +
                            std::to_string(columns.size()));
    }
    rows.push_back(std::move(row));
}

const Table& Report::table(std::string_view name) const {
    for (const auto& t : tables) {
        if (t.name == name) return t;
    }
    throw ArgumentError("report has no table '" + std::string(name) + "'");
}

nlohmann::ordered_json to_json(const Report& report) {
    nlohmann::ordered_json j;
    j["schema"] = kReportSchema;
    j["version"] = kArtifactVersion;
    j["experiment"] = report.experiment;
    j["parameters"] = report.parameters;
    j["notes"] = report.notes;
    auto& tables = j["tables"] = nlohmann::ordered_json::array();
    for (const auto& t : report.tables) {
        auto rows = nlohmann::ordered_json::array();
        for (const auto& row : t.rows) {
            nlohmann::ordered_json obj = nlohmann::ordered_json::object();
            for (std::size_t c = 0; c < t.columns.size(); ++c) obj[t.columns[c]] = cell_to_json(row[c]);
            rows.push_back(std::move(obj));
        }
        nlohmann::ordered_json entry;
        entry["name"] = t.name;
        entry["columns"] = t.columns;
        entry["rows"] = std::move(rows);
        tables.push_back(std::move(entry));
    }
    for (const auto& [key, value] : report.extra.items()) j[key] = value;
    return j;
}

Report report_from_json(const nlohmann::ordered_json& doc) {
    if (doc.value("schema", "") != kReportSchema) throw FormatError("not a report document");
    Report r;
    r.experiment = doc.at("experiment").get<std::string>();
    r.parameters = doc.at("parameters");
    r.notes = doc.at("notes").get<std::vector<std::string>>();
    for (const auto& body : doc.at("tables")) {
        Table t;
        t.name = body.at("name").get<std::string>();
        t.columns = body.at("columns").get<std::vector<std::string>>();
        for (const auto& row : body.at("rows")) {
            std::vector<Cell> cells;
            for (const auto& col : t.columns) cells.push_back(cell_from_json(row.at(col)));
            t.rows.push_back(std::move(cells));
        }
        r.tables.push_back(std::move(t));
    }
    for (const auto& [key, value] : doc.items()) {
        if (key != "schema" && key != "version" && key != "experiment" && key != "parameters" && key != "notes" &&
            key != "tables") {
            r.extra[key] = value;
        }
    }
    return r;
}

void write_csv(std::ostream& out, const Table& table) {
    for (std::size_t c = 0; c < table.columns.size(); ++c) out << (c ? "," : "") << csv_field(table.columns[c]);
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << csv_field(row[c]);
        out << '\n';
    }
}

ReportFormat parse_report_format(std::string_view text) {
    if (text == "json") return ReportFormat::Json;
    if (text == "csv") return ReportFormat::Csv;
    if (text == "both") return ReportFormat::Both;
    throw ConfigError("report format must be json, csv or both");
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::filesystem::path> emit_report(const Report& report, ReportFormat format,
                                               const std::filesystem::path& dir, const std::string& stamp) {
    std::vector<std::filesystem::path> written;
    const std::string base = report.experiment + "-" + stamp;
    if (format != ReportFormat::Csv) {
        const auto path = dir / (base + ".json");
        write_text_file(path, to_json(report).dump(2) + "\n");
        written.push_back(path);
    }
    if (format != ReportFormat::Json) {
        for (std::size_t i = 0; i < report.tables.size(); ++i) {
            const auto& t = report.tables[i];
            const auto path = dir / (i == 0 ? base + ".csv" : base + "." + t.name + ".csv");
            std::ostringstream text;
            write_csv(text, t);
            write_text_file(path, text.str());
            written.push_back(path);
        }
    }
    for (const auto& [suffix, text] : report.attachments) {
        const auto path = dir / (base + "." + suffix);
        write_text_file(path, text);
        written.push_back(path);
    }
    return written;
}

}  // namespace casp
