#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

namespace casp {

inline constexpr std::string_view kReportSchema = "casp-report/1";
inline constexpr std::string_view kManifestSchema = "casp-manifest/1";
inline constexpr std::string_view kArtifactVersion = "1.0.0";

/// A table cell. Monostate is a missing value: null in JSON, empty in CSV.
using Cell = std::variant<std::monostate, std::string, std::int64_t, double, bool>;

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add_row(std::vector<Cell> row);
};

/// Result of one experiment. The first table is the primary one; `extra`
/// carries JSON-only payloads such as serialized archives.
struct Report {
    std::string experiment;
    nlohmann::ordered_json parameters = nlohmann::ordered_json::object();
    std::vector<std::string> notes;
    std::vector<Table> tables;
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();
    /// Side files written next to the report as `<experiment>-<stamp>.<suffix>`.
    std::vector<std::pair<std::string, std::string>> attachments;

    const Table& table(std::string_view name) const;
};

nlohmann::ordered_json to_json(const Report& report);
Report report_from_json(const nlohmann::ordered_json& doc);

/// RFC 4180 style: header row, comma separated, quotes only where needed,
/// doubles with round-trip precision.
void write_csv(std::ostream& out, const Table& table);

enum class ReportFormat { Json, Csv, Both };

ReportFormat parse_report_format(std::string_view text);

/// Writes `<dir>/<experiment>-<stamp>.json` and/or `.csv` (primary table),
/// with the remaining tables as `<experiment>-<stamp>.<table>.csv`, then the
/// attachments.
/// Returns the written paths in order. Throws IoError.
std::vector<std::filesystem::path> emit_report(const Report& report, ReportFormat format,
                                               const std::filesystem::path& dir, const std::string& stamp);

/// Writes the text to a file, creating parent directories. Throws IoError.
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace casp
