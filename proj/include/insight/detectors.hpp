#pragma once

#include <map>
#include <string>
#include <vector>

#include "insight/datamodel.hpp"

namespace insight {

using DimFilter = std::map<std::string, std::string>;

/// Detection thresholds. Defaults are stated, configurable choices for a
/// deterministic, scale-free rule engine; they make no claim about any
/// production system's tuning.
struct DetectorConfig {
    int window = 28;
    double z_threshold = 3.0;
    double spike_ratio = 2.0;
    double spike_recovery_ratio = 1.5;
    int spike_recovery_span = 3;
    int min_history = 30;
    int top_n = 3;
    double comparison_delta = 0.25;

    void validate() const; // throws Error{invalid_argument}
};

ordered_json detector_to_json(const DetectorConfig& cfg);
DetectorConfig detector_from_json(const ordered_json& j); // throws Error{config}

struct SeriesPoint {
    Date date;
    double value = 0.0;
};

/// Per-date aggregate series for one metric, optionally restricted to a
/// dimension slice. Additive metrics sum across rows per date; ratio metrics
/// use sum(numerator)/sum(denominator) per date. Missing values are ignored.
std::vector<SeriesPoint> metric_series(const Dataset& d, const std::string& metric,
                                       const DimFilter& slice = {});

/// Robust z at each point against the median/MAD of the window ending just
/// before it (MAD scaled by 1.4826; degenerate MAD=0 collapses to a relative
/// epsilon so constant windows flag any deviation).
std::vector<AtomicInsight> detect_anomalous_shifts(const Dataset& d, const DetectorConfig& cfg);

/// detect_anomalous_shifts applied per (dimension column, value) slice.
std::vector<AtomicInsight> detect_dimension_anomalies(const Dataset& d, const DetectorConfig& cfg);

/// x_t >= spike_ratio * median(window) with a recovery to
/// <= spike_recovery_ratio * that median within spike_recovery_span points.
std::vector<AtomicInsight> detect_spikes(const Dataset& d, const DetectorConfig& cfg);

/// Strict new prefix maximum at t >= min_history.
std::vector<AtomicInsight> detect_all_time_highs(const Dataset& d, const DetectorConfig& cfg);

/// Rank dimension values per (metric, dimension column) by period aggregate;
/// emit top_n. Additive score = share of period total; ratio score = 1/rank.
/// Ties break lexicographically by dimension value.
std::vector<AtomicInsight> detect_top_dimensions(const Dataset& d, const DetectorConfig& cfg,
                                                 const Period& period);

struct ComparisonResult {
    std::vector<AtomicInsight> insights;
    /// Slices with a zero period-a aggregate, skipped rather than divided by.
    std::size_t skipped_slices = 0;
};

/// Slice growth vs overall growth between two periods; emit where the
/// difference reaches comparison_delta.
ComparisonResult detect_dimension_comparison(const Dataset& d, const DetectorConfig& cfg,
                                             const Period& period_a, const Period& period_b);

/// Union of all six detectors over canonical periods (full range for top
/// dimensions; last window vs the window before it for comparisons), sorted
/// canonically. Deterministic; an empty dataset yields an empty list.
std::vector<AtomicInsight> detect_all(const Dataset& d, const DetectorConfig& cfg);

} // namespace insight
