#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "insight/date.hpp"

namespace insight {

using ordered_json = nlohmann::ordered_json;

enum class MetricKind { additive, ratio };
enum class Direction { higher_is_better, lower_is_better, neutral };

/// Per-metric metadata. The additive-vs-ratio distinction drives every
/// aggregation in the engine: a ratio metric has no data column of its own
/// and its average is always sum(numerator)/sum(denominator).
struct MetricSpec {
    std::string name;
    MetricKind kind = MetricKind::additive;
    std::string numerator;   // ratio only
    std::string denominator; // ratio only
    std::string unit;
    Direction direction = Direction::neutral;

    bool operator==(const MetricSpec&) const = default;
};

struct MetricRegistry {
    std::vector<MetricSpec> specs;

    const MetricSpec* find(const std::string& name) const;
    bool contains(const std::string& name) const { return find(name) != nullptr; }
    /// Names of additive metrics, in registry order. These are exactly the
    /// metric columns a dataset carries.
    std::vector<std::string> additive_names() const;

    bool operator==(const MetricRegistry&) const = default;
};

/// One observation: a date, a value per dimension column, and a value (or an
/// explicit missing marker) per additive metric column.
struct Record {
    Date date;
    std::map<std::string, std::string> dims;
    std::map<std::string, std::optional<double>> values;

    bool operator==(const Record&) const = default;
};

struct Dataset {
    std::vector<Record> rows;
    MetricRegistry metrics;
    std::vector<std::string> dimensions;

    /// Dimension tuple of a row, in `dimensions` order (absent -> "").
    std::vector<std::string> dim_key(const Record& row) const;
    /// Distinct dates in ascending order.
    std::vector<Date> distinct_dates() const;

    bool operator==(const Dataset&) const = default;
};

/// Sort rows ascending by (date, dimension tuple). This is the canonical row
/// order every other stage assumes.
void sort_canonical(Dataset& d);

struct Violation {
    std::optional<std::size_t> row; // absent for registry-level rules
    std::string column;
    std::string rule;
    std::string message;
};

/// Structural validation. Side-effect free; an empty list means every
/// Dataset/Record/MetricSpec invariant holds.
std::vector<Violation> validate_dataset(const Dataset& d);

// ---------------------------------------------------------------------------
// Insights

enum class InsightKind {
    anomalous_shift,
    dimension_anomaly,
    spike,
    all_time_high,
    top_dimension,
    dimension_comparison,
};

const char* to_string(InsightKind kind);
std::optional<InsightKind> insight_kind_from_string(const std::string& s);

/// One detected finding. `dims` empty means the whole dataset.
struct AtomicInsight {
    InsightKind kind = InsightKind::anomalous_shift;
    std::string metric;
    std::map<std::string, std::string> dims;
    Date period_start;
    Date period_end;
    double value = 0.0;
    double baseline = 0.0;
    double score = 0.0;
    std::string description;

    /// Canonical identity string: kind/metric/dims/period. Used as the
    /// stable insight id, for dedup and for report source references.
    std::string key() const;

    bool operator==(const AtomicInsight&) const = default;
};

/// Sort by (period_start, kind, metric, dims, period_end).
void sort_insights(std::vector<AtomicInsight>& insights);

/// Inclusive [start, end] day range.
struct Period {
    Date start;
    Date end;

    bool contains(Date d) const { return start <= d && d <= end; }
    bool operator==(const Period&) const = default;
};

// ---------------------------------------------------------------------------
// Transform plans (declarative preprocessing steps; the LLM emits these as
// JSON, never executable code)

struct DedupStep {
    bool operator==(const DedupStep&) const = default;
};
struct FillMissingStep {
    std::string strategy; // drop | median | zero
    bool operator==(const FillMissingStep&) const = default;
};
struct CapOutliersStep {
    double k = 3.0;
    bool operator==(const CapOutliersStep&) const = default;
};
struct RenameStep {
    std::map<std::string, std::string> mapping;
    bool operator==(const RenameStep&) const = default;
};
struct ScaleStep {
    std::string metric;
    double factor = 1.0;
    bool operator==(const ScaleStep&) const = default;
};
struct DropColumnStep {
    std::string name;
    bool operator==(const DropColumnStep&) const = default;
};

using TransformStep =
    std::variant<DedupStep, FillMissingStep, CapOutliersStep, RenameStep, ScaleStep, DropColumnStep>;

struct TransformPlan {
    std::vector<TransformStep> steps;
    bool operator==(const TransformPlan&) const = default;
};

// ---------------------------------------------------------------------------
// JSON interchange.  All serializers use ordered_json so file output is
// byte-stable.

ordered_json registry_to_json(const MetricRegistry& registry);
MetricRegistry registry_from_json(const ordered_json& j); // throws Error{schema}

ordered_json insight_to_json(const AtomicInsight& insight);
AtomicInsight insight_from_json(const ordered_json& j); // throws Error{parse}
ordered_json insights_to_json(const std::vector<AtomicInsight>& insights);
std::vector<AtomicInsight> insights_from_json(const ordered_json& j);

ordered_json plan_to_json(const TransformPlan& plan);
TransformPlan plan_from_json(const ordered_json& j); // throws Error{plan_invalid}

/// Rows as an array of flat objects ({"date":..., dims..., metrics...});
/// the load_json input format and the prompt serialization format.
ordered_json rows_to_json(const Dataset& d, const std::vector<std::size_t>& indices);
ordered_json rows_to_json(const Dataset& d);

/// Shortest round-trip decimal text for a double (no exponent for typical
/// magnitudes; exact re-parse guaranteed).
std::string double_to_string(double v);

} // namespace insight
