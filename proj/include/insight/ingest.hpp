#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "insight/datamodel.hpp"

namespace insight {

struct IngestConfig {
    std::string date_column = "date";
    std::vector<std::string> dimension_columns;
    std::string registry_path;
    char delimiter = ',';
};

struct IngestSummary {
    std::size_t rows = 0;
    /// Cells stored as explicit missing markers (empty or unparseable numerics).
    std::size_t missing_count = 0;
};

struct IngestResult {
    Dataset dataset;
    IngestSummary summary;
};

/// Parse and canonically sort without enforcing dataset validity — the
/// `validate` command's path. load_csv/load_json wrap this and reject any
/// dataset that carries violations.
IngestResult parse_csv_file(const std::filesystem::path& path, const IngestConfig& cfg);
IngestResult parse_json_file(const std::filesystem::path& path, const IngestConfig& cfg);

MetricRegistry load_registry(const std::filesystem::path& path);

/// Parse a CSV file into a validated, canonically sorted Dataset.
/// Unparseable numeric cells degrade to missing markers (counted in the
/// summary); structural problems raise Error{io|schema|parse|data}.
IngestResult load_csv(const std::filesystem::path& path, const IngestConfig& cfg);

/// Same contract for a JSON array of flat objects.
IngestResult load_json(const std::filesystem::path& path, const IngestConfig& cfg);

/// Canonical CSV export: date, dimension columns, additive metric columns in
/// registry order; missing values as empty cells; doubles in shortest
/// round-trip form. load_csv(write_csv(d)) == d for any valid dataset.
void write_csv(const Dataset& d, std::ostream& out, char delimiter = ',');
void write_csv(const Dataset& d, const std::filesystem::path& path, char delimiter = ',');

/// RFC-4180-style CSV: quoted fields may contain delimiters, quotes ("") and
/// newlines. Throws Error{parse} on unterminated quotes or ragged rows.
std::vector<std::vector<std::string>> parse_csv(const std::string& text, char delimiter = ',');

} // namespace insight
