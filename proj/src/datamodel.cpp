#include "insight/datamodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "insight/error.hpp"

namespace insight {

const MetricSpec* MetricRegistry::find(const std::string& name) const {
    for (const auto& spec : specs) {
        if (spec.name == name) return &spec;
    }
    return nullptr;
}

std::vector<std::string> MetricRegistry::additive_names() const {
    std::vector<std::string> names;
    for (const auto& spec : specs) {
        if (spec.kind == MetricKind::additive) names.push_back(spec.name);
    }
    return names;
}

std::vector<std::string> Dataset::dim_key(const Record& row) const {
    std::vector<std::string> key;
    key.reserve(dimensions.size());
    for (const auto& dim : dimensions) {
        auto it = row.dims.find(dim);
        key.push_back(it == row.dims.end() ? std::string{} : it->second);
    }
    return key;
}

std::vector<Date> Dataset::distinct_dates() const {
    std::vector<Date> dates;
    for (const auto& row : rows) dates.push_back(row.date);
    std::sort(dates.begin(), dates.end());
    dates.erase(std::unique(dates.begin(), dates.end()), dates.end());
    return dates;
}

void sort_canonical(Dataset& d) {
    std::stable_sort(d.rows.begin(), d.rows.end(), [&d](const Record& a, const Record& b) {
        if (a.date != b.date) return a.date < b.date;
        return d.dim_key(a) < d.dim_key(b);
    });
}

namespace {

std::string join_key(Date date, const std::vector<std::string>& dims) {
    std::string key = date.to_string();
    for (const auto& v : dims) {
        key += '\x1f';
        key += v;
    }
    return key;
}

} // namespace

std::vector<Violation> validate_dataset(const Dataset& d) {
    std::vector<Violation> out;

    // Registry-level rules.
    std::set<std::string> seen_names;
    for (const auto& spec : d.metrics.specs) {
        if (!seen_names.insert(spec.name).second) {
            out.push_back({std::nullopt, spec.name, "duplicate_metric",
                           "metric '" + spec.name + "' declared twice"});
        }
        if (spec.kind == MetricKind::ratio) {
            for (const std::string& ref : {spec.numerator, spec.denominator}) {
                const MetricSpec* target = d.metrics.find(ref);
                if (ref.empty() || target == nullptr || target->kind != MetricKind::additive) {
                    out.push_back({std::nullopt, spec.name, "dangling_ratio_ref",
                                   "ratio metric '" + spec.name + "' references '" + ref +
                                       "', which is not an additive metric in the registry"});
                }
            }
        } else {
            if (!spec.numerator.empty() || !spec.denominator.empty()) {
                out.push_back({std::nullopt, spec.name, "ratio_fields_on_additive",
                               "additive metric '" + spec.name +
                                   "' must not declare numerator/denominator"});
            }
        }
    }

    const std::vector<std::string> columns = d.metrics.additive_names();
    const std::set<std::string> column_set(columns.begin(), columns.end());

    std::unordered_set<std::string> seen_keys;
    std::string prev_key;
    for (std::size_t i = 0; i < d.rows.size(); ++i) {
        const Record& row = d.rows[i];
        const std::string key = join_key(row.date, d.dim_key(row));
        if (!seen_keys.insert(key).second) {
            out.push_back({i, "", "duplicate_key",
                           "row " + std::to_string(i) + " repeats (date, dims) key"});
        } else if (i > 0 && key < prev_key) {
            out.push_back({i, "", "unsorted_rows",
                           "row " + std::to_string(i) + " is out of canonical order"});
        }
        prev_key = key;

        for (const auto& [name, value] : row.values) {
            if (column_set.count(name) == 0) {
                out.push_back({i, name, "metric_not_in_registry",
                               "column '" + name + "' has no additive registry entry"});
            }
            if (value && !std::isfinite(*value)) {
                out.push_back({i, name, "non_finite_value",
                               "column '" + name + "' holds a non-finite number"});
            }
        }
        for (const auto& name : columns) {
            if (row.values.find(name) == row.values.end()) {
                out.push_back({i, name, "missing_metric_column",
                               "registry metric '" + name + "' absent from row"});
            }
        }
        for (const auto& [dim, _] : row.dims) {
            if (std::find(d.dimensions.begin(), d.dimensions.end(), dim) == d.dimensions.end()) {
                out.push_back({i, dim, "unknown_dimension",
                               "dimension '" + dim + "' not declared by the dataset"});
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

const char* to_string(InsightKind kind) {
    switch (kind) {
        case InsightKind::anomalous_shift: return "anomalous_shift";
        case InsightKind::dimension_anomaly: return "dimension_anomaly";
        case InsightKind::spike: return "spike";
        case InsightKind::all_time_high: return "all_time_high";
        case InsightKind::top_dimension: return "top_dimension";
        case InsightKind::dimension_comparison: return "dimension_comparison";
    }
    return "unknown";
}

std::optional<InsightKind> insight_kind_from_string(const std::string& s) {
    static const std::pair<const char*, InsightKind> table[] = {
        {"anomalous_shift", InsightKind::anomalous_shift},
        {"dimension_anomaly", InsightKind::dimension_anomaly},
        {"spike", InsightKind::spike},
        {"all_time_high", InsightKind::all_time_high},
        {"top_dimension", InsightKind::top_dimension},
        {"dimension_comparison", InsightKind::dimension_comparison},
    };
    for (const auto& [name, kind] : table) {
        if (s == name) return kind;
    }
    return std::nullopt;
}

std::string AtomicInsight::key() const {
    std::string k = to_string(kind);
    k += '/';
    k += metric;
    for (const auto& [dim, value] : dims) {
        k += '/';
        k += dim;
        k += '=';
        k += value;
    }
    k += '/';
    k += period_start.to_string();
    k += "..";
    k += period_end.to_string();
    return k;
}

void sort_insights(std::vector<AtomicInsight>& insights) {
    std::stable_sort(insights.begin(), insights.end(),
                     [](const AtomicInsight& a, const AtomicInsight& b) {
                         if (a.period_start != b.period_start) return a.period_start < b.period_start;
                         if (a.kind != b.kind) return a.kind < b.kind;
                         if (a.metric != b.metric) return a.metric < b.metric;
                         if (a.dims != b.dims) return a.dims < b.dims;
                         return a.period_end < b.period_end;
                     });
}

// ---------------------------------------------------------------------------
// JSON

std::string double_to_string(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

namespace {

const char* to_string(MetricKind kind) {
    return kind == MetricKind::additive ? "additive" : "ratio";
}

const char* to_string(Direction dir) {
    switch (dir) {
        case Direction::higher_is_better: return "higher_is_better";
        case Direction::lower_is_better: return "lower_is_better";
        case Direction::neutral: return "neutral";
    }
    return "neutral";
}

MetricKind metric_kind_from_string(const std::string& s) {
    if (s == "additive") return MetricKind::additive;
    if (s == "ratio") return MetricKind::ratio;
    fail(ErrorKind::schema, "unknown metric kind '" + s + "'");
}

Direction direction_from_string(const std::string& s) {
    if (s == "higher_is_better") return Direction::higher_is_better;
    if (s == "lower_is_better") return Direction::lower_is_better;
    if (s == "neutral") return Direction::neutral;
    fail(ErrorKind::schema, "unknown direction '" + s + "'");
}

} // namespace

ordered_json registry_to_json(const MetricRegistry& registry) {
    ordered_json arr = ordered_json::array();
    for (const auto& spec : registry.specs) {
        ordered_json j;
        j["name"] = spec.name;
        j["kind"] = to_string(spec.kind);
        if (spec.kind == MetricKind::ratio) {
            j["numerator"] = spec.numerator;
            j["denominator"] = spec.denominator;
        }
        j["unit"] = spec.unit;
        j["direction"] = to_string(spec.direction);
        arr.push_back(std::move(j));
    }
    return arr;
}

MetricRegistry registry_from_json(const ordered_json& j) {
    if (!j.is_array()) fail(ErrorKind::schema, "metric registry must be a JSON array");
    MetricRegistry registry;
    for (const auto& item : j) {
        if (!item.is_object() || !item.contains("name") || !item.contains("kind")) {
            fail(ErrorKind::schema, "registry entry needs 'name' and 'kind'");
        }
        MetricSpec spec;
        spec.name = item.at("name").get<std::string>();
        spec.kind = metric_kind_from_string(item.at("kind").get<std::string>());
        if (item.contains("numerator")) spec.numerator = item.at("numerator").get<std::string>();
        if (item.contains("denominator"))
            spec.denominator = item.at("denominator").get<std::string>();
        if (item.contains("unit")) spec.unit = item.at("unit").get<std::string>();
        if (item.contains("direction"))
            spec.direction = direction_from_string(item.at("direction").get<std::string>());
        registry.specs.push_back(std::move(spec));
    }
    return registry;
}

ordered_json insight_to_json(const AtomicInsight& insight) {
    ordered_json j;
    j["kind"] = to_string(insight.kind);
    j["metric"] = insight.metric;
    j["dims"] = insight.dims;
    j["period_start"] = insight.period_start.to_string();
    j["period_end"] = insight.period_end.to_string();
    j["value"] = insight.value;
    j["baseline"] = insight.baseline;
    j["score"] = insight.score;
    j["description"] = insight.description;
    return j;
}

AtomicInsight insight_from_json(const ordered_json& j) {
    if (!j.is_object()) fail(ErrorKind::parse, "insight must be a JSON object");
    AtomicInsight insight;
    auto kind = insight_kind_from_string(j.value("kind", std::string{}));
    if (!kind) fail(ErrorKind::parse, "insight has unknown kind");
    insight.kind = *kind;
    insight.metric = j.value("metric", std::string{});
    if (j.contains("dims")) {
        for (const auto& [k, v] : j.at("dims").items()) {
            insight.dims[k] = v.get<std::string>();
        }
    }
    insight.period_start = Date::parse(j.value("period_start", std::string{}));
    insight.period_end = Date::parse(j.value("period_end", std::string{}));
    insight.value = j.value("value", 0.0);
    insight.baseline = j.value("baseline", 0.0);
    insight.score = j.value("score", 0.0);
    insight.description = j.value("description", std::string{});
    return insight;
}

ordered_json insights_to_json(const std::vector<AtomicInsight>& insights) {
    ordered_json arr = ordered_json::array();
    for (const auto& insight : insights) arr.push_back(insight_to_json(insight));
    return arr;
}

std::vector<AtomicInsight> insights_from_json(const ordered_json& j) {
    if (!j.is_array()) fail(ErrorKind::parse, "insight list must be a JSON array");
    std::vector<AtomicInsight> out;
    for (const auto& item : j) out.push_back(insight_from_json(item));
    return out;
}

ordered_json plan_to_json(const TransformPlan& plan) {
    ordered_json arr = ordered_json::array();
    for (const auto& step : plan.steps) {
        ordered_json j;
        std::visit(
            [&j](const auto& s) {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, DedupStep>) {
                    j["op"] = "dedup";
                } else if constexpr (std::is_same_v<T, FillMissingStep>) {
                    j["op"] = "fill_missing";
                    j["args"]["strategy"] = s.strategy;
                } else if constexpr (std::is_same_v<T, CapOutliersStep>) {
                    j["op"] = "cap_outliers";
                    j["args"]["k"] = s.k;
                } else if constexpr (std::is_same_v<T, RenameStep>) {
                    j["op"] = "rename";
                    j["args"]["map"] = s.mapping;
                } else if constexpr (std::is_same_v<T, ScaleStep>) {
                    j["op"] = "scale";
                    j["args"]["metric"] = s.metric;
                    j["args"]["factor"] = s.factor;
                } else if constexpr (std::is_same_v<T, DropColumnStep>) {
                    j["op"] = "drop_column";
                    j["args"]["name"] = s.name;
                }
            },
            step);
        arr.push_back(std::move(j));
    }
    return arr;
}

TransformPlan plan_from_json(const ordered_json& j) {
    if (!j.is_array()) fail(ErrorKind::plan_invalid, "transform plan must be a JSON array");
    TransformPlan plan;
    for (const auto& item : j) {
        if (!item.is_object() || !item.contains("op")) {
            fail(ErrorKind::plan_invalid, "plan step needs an 'op' field");
        }
        const std::string op = item.at("op").get<std::string>();
        const ordered_json args = item.value("args", ordered_json::object());
        try {
            if (op == "dedup") {
                plan.steps.emplace_back(DedupStep{});
            } else if (op == "fill_missing") {
                FillMissingStep s;
                s.strategy = args.at("strategy").get<std::string>();
                if (s.strategy != "drop" && s.strategy != "median" && s.strategy != "zero") {
                    fail(ErrorKind::plan_invalid, "unknown fill strategy '" + s.strategy + "'");
                }
                plan.steps.emplace_back(std::move(s));
            } else if (op == "cap_outliers") {
                CapOutliersStep s;
                s.k = args.at("k").get<double>();
                plan.steps.emplace_back(s);
            } else if (op == "rename") {
                RenameStep s;
                for (const auto& [k, v] : args.at("map").items()) {
                    s.mapping[k] = v.get<std::string>();
                }
                plan.steps.emplace_back(std::move(s));
            } else if (op == "scale") {
                ScaleStep s;
                s.metric = args.at("metric").get<std::string>();
                s.factor = args.at("factor").get<double>();
                plan.steps.emplace_back(std::move(s));
            } else if (op == "drop_column") {
                DropColumnStep s;
                s.name = args.at("name").get<std::string>();
                plan.steps.emplace_back(std::move(s));
            } else {
                fail(ErrorKind::plan_invalid, "unknown plan op '" + op + "'");
            }
        } catch (const ordered_json::exception& e) {
            fail(ErrorKind::plan_invalid, "malformed args for op '" + op + "': " + e.what());
        }
    }
    return plan;
}

ordered_json rows_to_json(const Dataset& d, const std::vector<std::size_t>& indices) {
    ordered_json arr = ordered_json::array();
    for (std::size_t idx : indices) {
        const Record& row = d.rows.at(idx);
        ordered_json j;
        j["date"] = row.date.to_string();
        for (const auto& dim : d.dimensions) {
            auto it = row.dims.find(dim);
            j[dim] = it == row.dims.end() ? std::string{} : it->second;
        }
        for (const auto& [name, value] : row.values) {
            if (value) {
                j[name] = *value;
            } else {
                j[name] = nullptr;
            }
        }
        arr.push_back(std::move(j));
    }
    return arr;
}

ordered_json rows_to_json(const Dataset& d) {
    std::vector<std::size_t> all(d.rows.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return rows_to_json(d, all);
}

} // namespace insight
