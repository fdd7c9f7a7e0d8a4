#include "insight/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "insight/error.hpp"

namespace insight {

namespace {

constexpr double kMadScale = 1.4826;
constexpr double kRelativeEpsilon = 1e-9;

std::string fmt2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string dims_label(const DimFilter& dims) {
    if (dims.empty()) return "overall";
    std::string out;
    for (const auto& [k, v] : dims) {
        if (!out.empty()) out += ", ";
        out += k + "=" + v;
    }
    return out;
}

double median_of(std::vector<double> values) {
    const std::size_t n = values.size();
    std::sort(values.begin(), values.end());
    if (n == 0) return 0.0;
    if (n % 2 == 1) return values[n / 2];
    return (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

/// Scaled MAD with the degenerate-zero rule: a constant window gets a spread
/// of kRelativeEpsilon * |median| (floored at the epsilon itself) so any
/// deviation from it is flagged.
double robust_spread(const std::vector<double>& window, double median) {
    std::vector<double> deviations;
    deviations.reserve(window.size());
    for (double v : window) deviations.push_back(std::fabs(v - median));
    double spread = kMadScale * median_of(std::move(deviations));
    if (spread == 0.0) {
        spread = kRelativeEpsilon * std::fabs(median);
        if (spread == 0.0) spread = kRelativeEpsilon;
    }
    return spread;
}

bool row_in_slice(const Record& row, const DimFilter& slice) {
    for (const auto& [dim, value] : slice) {
        auto it = row.dims.find(dim);
        if (it == row.dims.end() || it->second != value) return false;
    }
    return true;
}

/// Sum of an additive metric over matching rows; nullopt-valued cells are
/// skipped (detectors expect cleaned input anyway).
struct Totals {
    double sum = 0.0;
    std::size_t count = 0;
};

Totals slice_totals(const Dataset& d, const std::string& metric, const DimFilter& slice,
                    const Period& period) {
    Totals t;
    for (const auto& row : d.rows) {
        if (!period.contains(row.date) || !row_in_slice(row, slice)) continue;
        auto it = row.values.find(metric);
        if (it == row.values.end() || !it->second) continue;
        t.sum += *it->second;
        ++t.count;
    }
    return t;
}

/// Additive: period total. Ratio: sum(numerator)/sum(denominator), 0 when the
/// denominator sums to zero. Count is the number of matching rows.
struct Aggregate {
    double value = 0.0;
    std::size_t count = 0;
};

Aggregate aggregate_over(const Dataset& d, const MetricSpec& spec, const DimFilter& slice,
                         const Period& period) {
    if (spec.kind == MetricKind::additive) {
        Totals t = slice_totals(d, spec.name, slice, period);
        return {t.sum, t.count};
    }
    Totals num = slice_totals(d, spec.numerator, slice, period);
    Totals den = slice_totals(d, spec.denominator, slice, period);
    const double value = den.sum == 0.0 ? 0.0 : num.sum / den.sum;
    return {value, std::max(num.count, den.count)};
}

std::vector<std::pair<std::string, std::vector<std::string>>> dimension_values(const Dataset& d) {
    std::vector<std::pair<std::string, std::vector<std::string>>> out;
    for (const auto& dim : d.dimensions) {
        std::set<std::string> values;
        for (const auto& row : d.rows) {
            auto it = row.dims.find(dim);
            if (it != row.dims.end()) values.insert(it->second);
        }
        out.emplace_back(dim, std::vector<std::string>(values.begin(), values.end()));
    }
    return out;
}

/// Robust-z scan of one series; shared by the aggregate and per-slice
/// detectors.
std::vector<AtomicInsight> scan_shifts(const std::vector<SeriesPoint>& series,
                                       const DetectorConfig& cfg, InsightKind kind,
                                       const std::string& metric, const DimFilter& dims) {
    std::vector<AtomicInsight> out;
    const int n = static_cast<int>(series.size());
    if (n < cfg.window + 1) return out;
    for (int t = cfg.window; t < n; ++t) {
        std::vector<double> window;
        window.reserve(cfg.window);
        for (int i = t - cfg.window; i < t; ++i) window.push_back(series[i].value);
        const double med = median_of(window);
        const double spread = robust_spread(window, med);
        const double z = (series[t].value - med) / spread;
        if (std::fabs(z) < cfg.z_threshold) continue;
        AtomicInsight insight;
        insight.kind = kind;
        insight.metric = metric;
        insight.dims = dims;
        insight.period_start = insight.period_end = series[t].date;
        insight.value = series[t].value;
        insight.baseline = med;
        insight.score = z;
        insight.description = metric + " (" + dims_label(dims) + ") deviated to " +
                              fmt2(series[t].value) + " against a window median of " + fmt2(med);
        out.push_back(std::move(insight));
    }
    return out;
}

} // namespace

void DetectorConfig::validate() const {
    if (window < 3) fail(ErrorKind::invalid_argument, "detector window must be >= 3");
    if (z_threshold <= 0) fail(ErrorKind::invalid_argument, "z_threshold must be > 0");
    if (spike_ratio <= 1 || spike_recovery_ratio <= 1) {
        fail(ErrorKind::invalid_argument, "spike ratios must be > 1");
    }
    if (spike_recovery_span < 1) fail(ErrorKind::invalid_argument, "spike_recovery_span must be >= 1");
    if (min_history < 0) fail(ErrorKind::invalid_argument, "min_history must be >= 0");
    if (top_n < 1) fail(ErrorKind::invalid_argument, "top_n must be >= 1");
    if (comparison_delta <= 0) fail(ErrorKind::invalid_argument, "comparison_delta must be > 0");
}

ordered_json detector_to_json(const DetectorConfig& cfg) {
    ordered_json j;
    j["window"] = cfg.window;
    j["z_threshold"] = cfg.z_threshold;
    j["spike_ratio"] = cfg.spike_ratio;
    j["spike_recovery_ratio"] = cfg.spike_recovery_ratio;
    j["spike_recovery_span"] = cfg.spike_recovery_span;
    j["min_history"] = cfg.min_history;
    j["top_n"] = cfg.top_n;
    j["comparison_delta"] = cfg.comparison_delta;
    return j;
}

DetectorConfig detector_from_json(const ordered_json& j) {
    DetectorConfig cfg;
    if (!j.is_object()) fail(ErrorKind::config, "detector config must be a JSON object");
    static const std::set<std::string> known = {
        "window",      "z_threshold", "spike_ratio", "spike_recovery_ratio",
        "spike_recovery_span", "min_history", "top_n",       "comparison_delta"};
    for (const auto& [key, _] : j.items()) {
        if (known.count(key) == 0) fail(ErrorKind::config, "unknown detector key '" + key + "'");
    }
    cfg.window = j.value("window", cfg.window);
    cfg.z_threshold = j.value("z_threshold", cfg.z_threshold);
    cfg.spike_ratio = j.value("spike_ratio", cfg.spike_ratio);
    cfg.spike_recovery_ratio = j.value("spike_recovery_ratio", cfg.spike_recovery_ratio);
    cfg.spike_recovery_span = j.value("spike_recovery_span", cfg.spike_recovery_span);
    cfg.min_history = j.value("min_history", cfg.min_history);
    cfg.top_n = j.value("top_n", cfg.top_n);
    cfg.comparison_delta = j.value("comparison_delta", cfg.comparison_delta);
    cfg.validate();
    return cfg;
}

std::vector<SeriesPoint> metric_series(const Dataset& d, const std::string& metric,
                                       const DimFilter& slice) {
    const MetricSpec* spec = d.metrics.find(metric);
    if (spec == nullptr) fail(ErrorKind::invalid_argument, "unknown metric '" + metric + "'");

    // Gather per-date sums in one pass; rows are canonically sorted but the
    // map keeps this correct for any order.
    std::map<Date, std::pair<double, double>> per_date; // value sums (num, den)
    std::map<Date, bool> seen;
    for (const auto& row : d.rows) {
        if (!row_in_slice(row, slice)) continue;
        auto& cell = per_date[row.date];
        if (spec->kind == MetricKind::additive) {
            auto it = row.values.find(metric);
            if (it != row.values.end() && it->second) cell.first += *it->second;
        } else {
            auto num = row.values.find(spec->numerator);
            auto den = row.values.find(spec->denominator);
            if (num != row.values.end() && num->second) cell.first += *num->second;
            if (den != row.values.end() && den->second) cell.second += *den->second;
        }
        seen[row.date] = true;
    }
    std::vector<SeriesPoint> series;
    series.reserve(per_date.size());
    for (const auto& [date, sums] : per_date) {
        double value = sums.first;
        if (spec->kind == MetricKind::ratio) {
            value = sums.second == 0.0 ? 0.0 : sums.first / sums.second;
        }
        series.push_back({date, value});
    }
    return series;
}

std::vector<AtomicInsight> detect_anomalous_shifts(const Dataset& d, const DetectorConfig& cfg) {
    cfg.validate();
    std::vector<AtomicInsight> out;
    for (const auto& spec : d.metrics.specs) {
        auto found = scan_shifts(metric_series(d, spec.name), cfg, InsightKind::anomalous_shift,
                                 spec.name, {});
        out.insert(out.end(), found.begin(), found.end());
    }
    sort_insights(out);
    return out;
}

std::vector<AtomicInsight> detect_dimension_anomalies(const Dataset& d, const DetectorConfig& cfg) {
    cfg.validate();
    std::vector<AtomicInsight> out;
    for (const auto& spec : d.metrics.specs) {
        for (const auto& [dim, values] : dimension_values(d)) {
            for (const auto& value : values) {
                const DimFilter slice{{dim, value}};
                auto found = scan_shifts(metric_series(d, spec.name, slice), cfg,
                                         InsightKind::dimension_anomaly, spec.name, slice);
                out.insert(out.end(), found.begin(), found.end());
            }
        }
    }
    sort_insights(out);
    return out;
}

std::vector<AtomicInsight> detect_spikes(const Dataset& d, const DetectorConfig& cfg) {
    cfg.validate();
    std::vector<AtomicInsight> out;
    for (const auto& spec : d.metrics.specs) {
        const auto series = metric_series(d, spec.name);
        const int n = static_cast<int>(series.size());
        if (n < cfg.window + cfg.spike_recovery_span) continue;
        for (int t = cfg.window; t < n; ++t) {
            std::vector<double> window;
            window.reserve(cfg.window);
            for (int i = t - cfg.window; i < t; ++i) window.push_back(series[i].value);
            const double med = median_of(window);
            if (series[t].value < cfg.spike_ratio * med) continue;
            bool recovered = false;
            for (int s = t + 1; s <= t + cfg.spike_recovery_span && s < n; ++s) {
                if (series[s].value <= cfg.spike_recovery_ratio * med) {
                    recovered = true;
                    break;
                }
            }
            if (!recovered) continue;
            AtomicInsight insight;
            insight.kind = InsightKind::spike;
            insight.metric = spec.name;
            insight.period_start = insight.period_end = series[t].date;
            insight.value = series[t].value;
            insight.baseline = med;
            insight.score = series[t].value / (med > 0.0 ? med : kRelativeEpsilon);
            insight.description = spec.name + " spiked to " + fmt2(series[t].value) +
                                  " before recovering (window median " + fmt2(med) + ")";
            out.push_back(std::move(insight));
        }
    }
    sort_insights(out);
    return out;
}

std::vector<AtomicInsight> detect_all_time_highs(const Dataset& d, const DetectorConfig& cfg) {
    cfg.validate();
    std::vector<AtomicInsight> out;
    for (const auto& spec : d.metrics.specs) {
        const auto series = metric_series(d, spec.name);
        const int n = static_cast<int>(series.size());
        if (n == 0) continue;
        double prefix_max = series[0].value;
        for (int t = 1; t < n; ++t) {
            const double x = series[t].value;
            if (t >= cfg.min_history && x > prefix_max) {
                AtomicInsight insight;
                insight.kind = InsightKind::all_time_high;
                insight.metric = spec.name;
                insight.period_start = insight.period_end = series[t].date;
                insight.value = x;
                insight.baseline = prefix_max;
                const double denom =
                    std::fabs(prefix_max) > 0.0 ? std::fabs(prefix_max) : kRelativeEpsilon;
                insight.score = (x - prefix_max) / denom;
                insight.description = spec.name + " reached an all-time high of " + fmt2(x) +
                                      ", beating the previous maximum " + fmt2(prefix_max);
                out.push_back(std::move(insight));
            }
            prefix_max = std::max(prefix_max, x);
        }
    }
    sort_insights(out);
    return out;
}

std::vector<AtomicInsight> detect_top_dimensions(const Dataset& d, const DetectorConfig& cfg,
                                                 const Period& period) {
    cfg.validate();
    bool any_rows = false;
    for (const auto& row : d.rows) {
        if (period.contains(row.date)) {
            any_rows = true;
            break;
        }
    }
    if (!any_rows) fail(ErrorKind::empty_period, "period has no rows");

    std::vector<AtomicInsight> out;
    for (const auto& spec : d.metrics.specs) {
        for (const auto& [dim, values] : dimension_values(d)) {
            struct Ranked {
                std::string value;
                double aggregate = 0.0;
            };
            std::vector<Ranked> ranking;
            double total = 0.0;
            for (const auto& value : values) {
                Aggregate agg = aggregate_over(d, spec, {{dim, value}}, period);
                if (agg.count == 0) continue;
                ranking.push_back({value, agg.value});
                total += agg.value;
            }
            if (ranking.empty()) continue;
            std::sort(ranking.begin(), ranking.end(), [](const Ranked& a, const Ranked& b) {
                if (a.aggregate != b.aggregate) return a.aggregate > b.aggregate;
                return a.value < b.value;
            });
            // Ratio metrics rank by the ratio; "share of total" is only
            // meaningful for additive metrics.
            const double overall = aggregate_over(d, spec, {}, period).value;
            const int limit = std::min<int>(cfg.top_n, static_cast<int>(ranking.size()));
            for (int rank = 0; rank < limit; ++rank) {
                const auto& entry = ranking[rank];
                AtomicInsight insight;
                insight.kind = InsightKind::top_dimension;
                insight.metric = spec.name;
                insight.dims = {{dim, entry.value}};
                insight.period_start = period.start;
                insight.period_end = period.end;
                insight.value = entry.aggregate;
                if (spec.kind == MetricKind::additive) {
                    insight.baseline = total;
                    insight.score = total != 0.0 ? entry.aggregate / total : 0.0;
                    insight.description = dim + "=" + entry.value + " led " + spec.name +
                                          " with " + fmt2(insight.score * 100.0) +
                                          "% of the period total";
                } else {
                    insight.baseline = overall;
                    insight.score = 1.0 / static_cast<double>(rank + 1);
                    insight.description = dim + "=" + entry.value + " ranked #" +
                                          std::to_string(rank + 1) + " for " + spec.name;
                }
                out.push_back(std::move(insight));
            }
        }
    }
    sort_insights(out);
    return out;
}

ComparisonResult detect_dimension_comparison(const Dataset& d, const DetectorConfig& cfg,
                                             const Period& period_a, const Period& period_b) {
    cfg.validate();
    auto has_rows = [&d](const Period& p) {
        for (const auto& row : d.rows) {
            if (p.contains(row.date)) return true;
        }
        return false;
    };
    if (!has_rows(period_a) || !has_rows(period_b)) {
        fail(ErrorKind::empty_period, "comparison period has no rows");
    }

    ComparisonResult result;
    for (const auto& spec : d.metrics.specs) {
        const double agg_a = aggregate_over(d, spec, {}, period_a).value;
        const double agg_b = aggregate_over(d, spec, {}, period_b).value;
        if (agg_a == 0.0) {
            ++result.skipped_slices;
            continue;
        }
        const double g = (agg_b - agg_a) / agg_a;
        for (const auto& [dim, values] : dimension_values(d)) {
            for (const auto& value : values) {
                const DimFilter slice{{dim, value}};
                const double slice_a = aggregate_over(d, spec, slice, period_a).value;
                const double slice_b = aggregate_over(d, spec, slice, period_b).value;
                if (slice_a == 0.0) {
                    ++result.skipped_slices;
                    continue;
                }
                const double g_s = (slice_b - slice_a) / slice_a;
                if (std::fabs(g_s - g) < cfg.comparison_delta) continue;
                AtomicInsight insight;
                insight.kind = InsightKind::dimension_comparison;
                insight.metric = spec.name;
                insight.dims = slice;
                insight.period_start = period_a.start;
                insight.period_end = period_b.end;
                insight.value = g_s;
                insight.baseline = g;
                insight.score = g_s - g;
                insight.description = dim + "=" + value + " moved " + fmt2(g_s * 100.0) +
                                      "% on " + spec.name + " while the business moved " +
                                      fmt2(g * 100.0) + "%";
                result.insights.push_back(std::move(insight));
            }
        }
    }
    sort_insights(result.insights);
    return result;
}

std::vector<AtomicInsight> detect_all(const Dataset& d, const DetectorConfig& cfg) {
    cfg.validate();
    if (d.rows.empty()) return {};

    const auto dates = d.distinct_dates();
    const Period full{dates.front(), dates.back()};

    std::vector<AtomicInsight> out;
    auto append = [&out](std::vector<AtomicInsight> found) {
        out.insert(out.end(), std::make_move_iterator(found.begin()),
                   std::make_move_iterator(found.end()));
    };
    append(detect_anomalous_shifts(d, cfg));
    append(detect_dimension_anomalies(d, cfg));
    append(detect_spikes(d, cfg));
    append(detect_all_time_highs(d, cfg));
    append(detect_top_dimensions(d, cfg, full));

    const int n = static_cast<int>(dates.size());
    if (n >= 2 * cfg.window) {
        const Period prev{dates[n - 2 * cfg.window], dates[n - cfg.window - 1]};
        const Period last{dates[n - cfg.window], dates[n - 1]};
        append(detect_dimension_comparison(d, cfg, prev, last).insights);
    }

    sort_insights(out);
    return out;
}

} // namespace insight
