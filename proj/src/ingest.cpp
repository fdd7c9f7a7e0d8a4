#include "insight/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "insight/error.hpp"

namespace insight {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot read file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::optional<double> parse_numeric_cell(const std::string& cell) {
    if (cell.empty()) return std::nullopt;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    // Tolerate surrounding spaces.
    while (first < last && *first == ' ') ++first;
    while (last > first && *(last - 1) == ' ') --last;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || !std::isfinite(value)) return std::nullopt;
    return value;
}

void check_config(const IngestConfig& cfg) {
    for (const auto& dim : cfg.dimension_columns) {
        if (dim == cfg.date_column) {
            fail(ErrorKind::config,
                 "date column '" + cfg.date_column + "' also listed as a dimension");
        }
    }
}

IngestResult finalize(Dataset dataset, IngestSummary summary) {
    sort_canonical(dataset);
    summary.rows = dataset.rows.size();
    return IngestResult{std::move(dataset), summary};
}

IngestResult enforce_valid(IngestResult result) {
    const auto violations = validate_dataset(result.dataset);
    if (!violations.empty()) {
        std::string msg = "dataset fails validation: ";
        msg += violations.front().rule;
        if (violations.front().row) {
            msg += " at row " + std::to_string(*violations.front().row);
        }
        msg += " (" + std::to_string(violations.size()) + " violation(s) total)";
        fail(ErrorKind::data, msg);
    }
    return result;
}

} // namespace

MetricRegistry load_registry(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const ordered_json::exception& e) {
        fail(ErrorKind::parse, "registry '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return registry_from_json(j);
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text, char delimiter) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;

    std::size_t i = 0;
    const std::size_t n = text.size();
    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(row));
        row.clear();
    };

    while (i < n) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < n && text[i + 1] == '"') {
                    field += '"';
                    i += 2;
                    continue;
                }
                in_quotes = false;
                ++i;
                continue;
            }
            field += c;
            ++i;
            continue;
        }
        if (c == '"') {
            if (!field.empty() || field_was_quoted) {
                fail(ErrorKind::parse, "unexpected quote inside unquoted CSV field");
            }
            in_quotes = true;
            field_was_quoted = true;
            ++i;
            continue;
        }
        if (c == delimiter) {
            end_field();
            ++i;
            continue;
        }
        if (c == '\r') {
            if (i + 1 < n && text[i + 1] == '\n') ++i;
            end_row();
            ++i;
            continue;
        }
        if (c == '\n') {
            end_row();
            ++i;
            continue;
        }
        field += c;
        ++i;
    }
    if (in_quotes) fail(ErrorKind::parse, "unterminated quoted CSV field");
    if (!field.empty() || !row.empty() || field_was_quoted) end_row();

    if (!rows.empty()) {
        const std::size_t width = rows.front().size();
        for (std::size_t r = 1; r < rows.size(); ++r) {
            if (rows[r].size() != width) {
                fail(ErrorKind::parse, "CSV row " + std::to_string(r) + " has " +
                                           std::to_string(rows[r].size()) + " fields, expected " +
                                           std::to_string(width));
            }
        }
    }
    return rows;
}

IngestResult parse_csv_file(const std::filesystem::path& path, const IngestConfig& cfg) {
    check_config(cfg);
    const std::string text = read_file(path);
    const auto cells = parse_csv(text, cfg.delimiter);
    if (cells.empty()) fail(ErrorKind::parse, "CSV file has no header row: " + path.string());

    const auto& header = cells.front();
    auto column_of = [&header](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        return std::nullopt;
    };

    const auto date_col = column_of(cfg.date_column);
    if (!date_col) fail(ErrorKind::schema, "date column '" + cfg.date_column + "' absent");

    std::vector<std::size_t> dim_cols;
    for (const auto& dim : cfg.dimension_columns) {
        const auto col = column_of(dim);
        if (!col) fail(ErrorKind::schema, "dimension column '" + dim + "' absent");
        dim_cols.push_back(*col);
    }

    Dataset dataset;
    dataset.metrics = load_registry(cfg.registry_path);
    dataset.dimensions = cfg.dimension_columns;

    // Every remaining column is a metric column and must be a registered
    // additive metric; every additive metric must have a column.
    std::vector<std::pair<std::size_t, std::string>> metric_cols;
    std::set<std::string> present;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i == *date_col) continue;
        if (std::find(dim_cols.begin(), dim_cols.end(), i) != dim_cols.end()) continue;
        metric_cols.emplace_back(i, header[i]);
        if (!present.insert(header[i]).second) {
            fail(ErrorKind::schema, "duplicate CSV column '" + header[i] + "'");
        }
        const MetricSpec* spec = dataset.metrics.find(header[i]);
        if (spec == nullptr) {
            fail(ErrorKind::schema, "column '" + header[i] + "' is not in the metric registry");
        }
        if (spec->kind != MetricKind::additive) {
            fail(ErrorKind::schema, "column '" + header[i] +
                                        "' is a ratio metric; ratio values are derived, not stored");
        }
    }
    for (const auto& name : dataset.metrics.additive_names()) {
        if (present.count(name) == 0) {
            fail(ErrorKind::schema, "registry metric '" + name + "' has no CSV column");
        }
    }

    IngestSummary summary;
    for (std::size_t r = 1; r < cells.size(); ++r) {
        const auto& line = cells[r];
        Record row;
        const auto date = Date::try_parse(line[*date_col]);
        if (!date) {
            fail(ErrorKind::parse, "row " + std::to_string(r) + ": bad date '" +
                                       line[*date_col] + "'");
        }
        row.date = *date;
        for (std::size_t k = 0; k < dim_cols.size(); ++k) {
            row.dims[cfg.dimension_columns[k]] = line[dim_cols[k]];
        }
        for (const auto& [col, name] : metric_cols) {
            auto value = parse_numeric_cell(line[col]);
            if (!value) ++summary.missing_count;
            row.values[name] = value;
        }
        dataset.rows.push_back(std::move(row));
    }
    return finalize(std::move(dataset), summary);
}

IngestResult parse_json_file(const std::filesystem::path& path, const IngestConfig& cfg) {
    check_config(cfg);
    const std::string text = read_file(path);
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const ordered_json::exception& e) {
        fail(ErrorKind::parse, "input '" + path.string() + "' is not valid JSON: " + e.what());
    }
    if (!j.is_array()) fail(ErrorKind::schema, "JSON input must be an array of flat objects");

    Dataset dataset;
    dataset.metrics = load_registry(cfg.registry_path);
    dataset.dimensions = cfg.dimension_columns;
    const auto metric_names = dataset.metrics.additive_names();

    IngestSummary summary;
    std::size_t index = 0;
    for (const auto& item : j) {
        if (!item.is_object()) {
            fail(ErrorKind::schema, "element " + std::to_string(index) + " is not an object");
        }
        if (!item.contains(cfg.date_column)) {
            fail(ErrorKind::schema,
                 "element " + std::to_string(index) + " lacks '" + cfg.date_column + "'");
        }
        Record row;
        row.date = Date::parse(item.at(cfg.date_column).get<std::string>());
        for (const auto& dim : cfg.dimension_columns) {
            if (!item.contains(dim)) {
                fail(ErrorKind::schema,
                     "element " + std::to_string(index) + " lacks dimension '" + dim + "'");
            }
            const auto& v = item.at(dim);
            row.dims[dim] = v.is_string() ? v.get<std::string>() : v.dump();
        }
        for (const auto& name : metric_names) {
            std::optional<double> value;
            if (item.contains(name) && item.at(name).is_number()) {
                const double x = item.at(name).get<double>();
                if (std::isfinite(x)) value = x;
            }
            if (!value) ++summary.missing_count;
            row.values[name] = value;
        }
        dataset.rows.push_back(std::move(row));
        ++index;
    }
    return finalize(std::move(dataset), summary);
}

IngestResult load_csv(const std::filesystem::path& path, const IngestConfig& cfg) {
    return enforce_valid(parse_csv_file(path, cfg));
}

IngestResult load_json(const std::filesystem::path& path, const IngestConfig& cfg) {
    return enforce_valid(parse_json_file(path, cfg));
}

namespace {

bool needs_quoting(const std::string& field, char delimiter) {
    return field.find_first_of(std::string{delimiter} + "\"\n\r") != std::string::npos;
}

void write_field(std::ostream& out, const std::string& field, char delimiter) {
    if (!needs_quoting(field, delimiter)) {
        out << field;
        return;
    }
    out << '"';
    for (char c : field) {
        if (c == '"') out << '"';
        out << c;
    }
    out << '"';
}

} // namespace

void write_csv(const Dataset& d, std::ostream& out, char delimiter) {
    const auto metric_names = d.metrics.additive_names();
    out << "date";
    for (const auto& dim : d.dimensions) {
        out << delimiter;
        write_field(out, dim, delimiter);
    }
    for (const auto& name : metric_names) {
        out << delimiter;
        write_field(out, name, delimiter);
    }
    out << '\n';
    for (const auto& row : d.rows) {
        out << row.date.to_string();
        for (const auto& dim : d.dimensions) {
            out << delimiter;
            auto it = row.dims.find(dim);
            write_field(out, it == row.dims.end() ? std::string{} : it->second, delimiter);
        }
        for (const auto& name : metric_names) {
            out << delimiter;
            auto it = row.values.find(name);
            if (it != row.values.end() && it->second) {
                out << double_to_string(*it->second);
            }
        }
        out << '\n';
    }
}

void write_csv(const Dataset& d, const std::filesystem::path& path, char delimiter) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write file: " + path.string());
    write_csv(d, out, delimiter);
}

} // namespace insight
