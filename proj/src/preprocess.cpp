#include "insight/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "insight/error.hpp"

namespace insight {

const char* to_string(FillStrategy strategy) {
    switch (strategy) {
        case FillStrategy::drop: return "drop";
        case FillStrategy::median: return "median";
        case FillStrategy::zero: return "zero";
    }
    return "median";
}

FillStrategy fill_strategy_from_string(const std::string& s) {
    if (s == "drop") return FillStrategy::drop;
    if (s == "median") return FillStrategy::median;
    if (s == "zero") return FillStrategy::zero;
    fail(ErrorKind::config, "unknown fill strategy '" + s + "'");
}

namespace {

double median_of(std::vector<double> values) {
    const std::size_t n = values.size();
    std::sort(values.begin(), values.end());
    if (n == 0) return 0.0;
    if (n % 2 == 1) return values[n / 2];
    return (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

std::vector<double> present_values(const Dataset& d, const std::string& metric) {
    std::vector<double> out;
    for (const auto& row : d.rows) {
        auto it = row.values.find(metric);
        if (it != row.values.end() && it->second) out.push_back(*it->second);
    }
    return out;
}

std::size_t dedup_rows(Dataset& d) {
    sort_canonical(d);
    std::size_t removed = 0;
    std::vector<Record> kept;
    kept.reserve(d.rows.size());
    std::set<std::pair<std::string, std::vector<std::string>>> seen;
    for (auto& row : d.rows) {
        auto key = std::make_pair(row.date.to_string(), d.dim_key(row));
        if (seen.insert(std::move(key)).second) {
            kept.push_back(std::move(row));
        } else {
            ++removed;
        }
    }
    d.rows = std::move(kept);
    return removed;
}

std::size_t fill_missing(Dataset& d, FillStrategy strategy) {
    std::size_t handled = 0;
    const auto columns = d.metrics.additive_names();
    if (strategy == FillStrategy::drop) {
        std::vector<Record> kept;
        kept.reserve(d.rows.size());
        for (auto& row : d.rows) {
            std::size_t missing = 0;
            for (const auto& name : columns) {
                auto it = row.values.find(name);
                if (it == row.values.end() || !it->second) ++missing;
            }
            if (missing == 0) {
                kept.push_back(std::move(row));
            } else {
                handled += missing;
            }
        }
        d.rows = std::move(kept);
        return handled;
    }

    std::map<std::string, double> fill_value;
    for (const auto& name : columns) {
        if (strategy == FillStrategy::zero) {
            fill_value[name] = 0.0;
            continue;
        }
        auto values = present_values(d, name);
        bool any_missing = false;
        for (const auto& row : d.rows) {
            auto it = row.values.find(name);
            if (it == row.values.end() || !it->second) {
                any_missing = true;
                break;
            }
        }
        if (values.empty() && any_missing) {
            fail(ErrorKind::empty_metric,
                 "metric '" + name + "' is entirely missing; median imputation impossible");
        }
        fill_value[name] = median_of(std::move(values));
    }
    for (auto& row : d.rows) {
        for (const auto& name : columns) {
            auto it = row.values.find(name);
            if (it == row.values.end() || !it->second) {
                row.values[name] = fill_value[name];
                ++handled;
            }
        }
    }
    return handled;
}

std::size_t cap_outliers(Dataset& d, double cap_k) {
    std::size_t capped = 0;
    for (const auto& name : d.metrics.additive_names()) {
        auto values = present_values(d, name);
        if (values.empty()) continue;
        const double med = median_of(values);
        std::vector<double> deviations;
        deviations.reserve(values.size());
        for (double v : values) deviations.push_back(std::fabs(v - med));
        const double mad = median_of(std::move(deviations));
        const double lo = med - cap_k * mad;
        const double hi = med + cap_k * mad;
        for (auto& row : d.rows) {
            auto it = row.values.find(name);
            if (it == row.values.end() || !it->second) continue;
            double v = *it->second;
            if (v < lo) {
                it->second = lo;
                ++capped;
            } else if (v > hi) {
                it->second = hi;
                ++capped;
            }
        }
    }
    return capped;
}

} // namespace

CleanResult clean(const Dataset& d, FillStrategy strategy, double cap_k) {
    if (cap_k <= 0) fail(ErrorKind::invalid_argument, "cap_k must be > 0");
    CleanResult result;
    result.dataset = d;
    result.report.duplicates_removed = dedup_rows(result.dataset);
    result.report.values_imputed = fill_missing(result.dataset, strategy);
    result.report.outliers_capped = cap_outliers(result.dataset, cap_k);
    return result;
}

Dataset reduce(const Dataset& d, double min_variance) {
    if (min_variance < 0) fail(ErrorKind::invalid_argument, "min_variance must be >= 0");
    std::set<std::string> dropped;
    for (const auto& name : d.metrics.additive_names()) {
        const auto values = present_values(d, name);
        double variance = 0.0;
        if (values.size() >= 2) {
            double mean = 0.0;
            for (double v : values) mean += v;
            mean /= static_cast<double>(values.size());
            double ss = 0.0;
            for (double v : values) ss += (v - mean) * (v - mean);
            variance = ss / static_cast<double>(values.size() - 1);
        }
        if (variance < min_variance) dropped.insert(name);
    }
    if (dropped.empty()) return d;

    Dataset out = d;
    out.metrics.specs.clear();
    for (const auto& spec : d.metrics.specs) {
        if (spec.kind == MetricKind::additive && dropped.count(spec.name)) continue;
        if (spec.kind == MetricKind::ratio &&
            (dropped.count(spec.numerator) || dropped.count(spec.denominator))) {
            continue;
        }
        out.metrics.specs.push_back(spec);
    }
    for (auto& row : out.rows) {
        for (const auto& name : dropped) row.values.erase(name);
    }
    return out;
}

PrecalcTable precalculate(const Dataset& d, const std::vector<Period>& periods,
                          const std::vector<DimFilter>& slices) {
    for (const auto& row : d.rows) {
        for (const auto& [name, value] : row.values) {
            if (!value) {
                fail(ErrorKind::invalid_argument,
                     "precalculate needs a clean dataset; '" + name + "' has missing values");
            }
        }
    }

    auto row_matches = [](const Record& row, const DimFilter& slice) {
        for (const auto& [dim, value] : slice) {
            auto it = row.dims.find(dim);
            if (it == row.dims.end() || it->second != value) return false;
        }
        return true;
    };

    PrecalcTable table;
    for (const auto& spec : d.metrics.specs) {
        for (const auto& slice : slices) {
            for (const auto& period : periods) {
                double sum = 0.0;
                double num_sum = 0.0;
                double den_sum = 0.0;
                std::size_t count = 0;
                for (const auto& row : d.rows) {
                    if (!period.contains(row.date) || !row_matches(row, slice)) continue;
                    ++count;
                    if (spec.kind == MetricKind::additive) {
                        sum += *row.values.at(spec.name);
                    } else {
                        num_sum += *row.values.at(spec.numerator);
                        den_sum += *row.values.at(spec.denominator);
                    }
                }
                if (count == 0) {
                    fail(ErrorKind::empty_period,
                         "no rows for metric '" + spec.name + "' in the requested slice/period");
                }
                PrecalcEntry entry;
                entry.metric = spec.name;
                entry.slice = slice;
                entry.period = period;
                entry.count = count;
                if (spec.kind == MetricKind::additive) {
                    entry.total = sum;
                    entry.average = sum / static_cast<double>(count);
                } else {
                    entry.average = den_sum == 0.0 ? 0.0 : num_sum / den_sum;
                }
                table.entries.push_back(std::move(entry));
            }
        }
    }
    return table;
}

ordered_json precalc_to_json(const PrecalcTable& table) {
    ordered_json arr = ordered_json::array();
    for (const auto& entry : table.entries) {
        ordered_json j;
        j["metric"] = entry.metric;
        j["slice"] = entry.slice;
        j["period_start"] = entry.period.start.to_string();
        j["period_end"] = entry.period.end.to_string();
        if (entry.total) j["total"] = *entry.total;
        j["average"] = entry.average;
        j["count"] = entry.count;
        arr.push_back(std::move(j));
    }
    return arr;
}

namespace {

bool column_exists(const Dataset& d, const std::string& name) {
    return d.metrics.contains(name) ||
           std::find(d.dimensions.begin(), d.dimensions.end(), name) != d.dimensions.end();
}

void apply_rename(Dataset& d, const std::map<std::string, std::string>& mapping,
                  std::size_t step_index) {
    for (const auto& [from, to] : mapping) {
        if (!column_exists(d, from)) {
            fail(ErrorKind::bad_step,
                 "step " + std::to_string(step_index) + ": rename source '" + from + "' not found");
        }
        if (column_exists(d, to)) {
            fail(ErrorKind::bad_step,
                 "step " + std::to_string(step_index) + ": rename target '" + to + "' exists");
        }
        for (auto& spec : d.metrics.specs) {
            if (spec.name == from) spec.name = to;
            if (spec.numerator == from) spec.numerator = to;
            if (spec.denominator == from) spec.denominator = to;
        }
        for (auto& dim : d.dimensions) {
            if (dim == from) dim = to;
        }
        for (auto& row : d.rows) {
            auto vit = row.values.find(from);
            if (vit != row.values.end()) {
                auto value = vit->second;
                row.values.erase(vit);
                row.values[to] = value;
            }
            auto dit = row.dims.find(from);
            if (dit != row.dims.end()) {
                auto value = dit->second;
                row.dims.erase(dit);
                row.dims[to] = value;
            }
        }
    }
}

void apply_drop(Dataset& d, const std::string& name, std::size_t step_index) {
    if (!d.metrics.contains(name)) {
        fail(ErrorKind::bad_step,
             "step " + std::to_string(step_index) + ": column '" + name + "' not found");
    }
    std::set<std::string> removed{name};
    std::vector<MetricSpec> kept;
    for (const auto& spec : d.metrics.specs) {
        if (spec.name == name) continue;
        if (spec.kind == MetricKind::ratio &&
            (removed.count(spec.numerator) || removed.count(spec.denominator))) {
            removed.insert(spec.name);
            continue;
        }
        kept.push_back(spec);
    }
    d.metrics.specs = std::move(kept);
    for (auto& row : d.rows) {
        for (const auto& r : removed) row.values.erase(r);
    }
}

} // namespace

Dataset apply_plan(const Dataset& d, const TransformPlan& plan) {
    Dataset work = d;
    for (std::size_t i = 0; i < plan.steps.size(); ++i) {
        const auto& step = plan.steps[i];
        std::visit(
            [&](const auto& s) {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, DedupStep>) {
                    dedup_rows(work);
                } else if constexpr (std::is_same_v<T, FillMissingStep>) {
                    fill_missing(work, fill_strategy_from_string(s.strategy));
                } else if constexpr (std::is_same_v<T, CapOutliersStep>) {
                    if (s.k <= 0) {
                        fail(ErrorKind::bad_step,
                             "step " + std::to_string(i) + ": cap_outliers k must be > 0");
                    }
                    cap_outliers(work, s.k);
                } else if constexpr (std::is_same_v<T, RenameStep>) {
                    apply_rename(work, s.mapping, i);
                } else if constexpr (std::is_same_v<T, ScaleStep>) {
                    const MetricSpec* spec = work.metrics.find(s.metric);
                    if (spec == nullptr || spec->kind != MetricKind::additive) {
                        fail(ErrorKind::bad_step, "step " + std::to_string(i) +
                                                      ": scale target '" + s.metric +
                                                      "' is not an additive column");
                    }
                    for (auto& row : work.rows) {
                        auto it = row.values.find(s.metric);
                        if (it != row.values.end() && it->second) {
                            it->second = *it->second * s.factor;
                        }
                    }
                } else if constexpr (std::is_same_v<T, DropColumnStep>) {
                    apply_drop(work, s.name, i);
                }
            },
            step);
    }
    return work;
}

TransformPlan infer_transform_plan(const Dataset& input_sample, const Dataset& output_sample,
                                   LlmHandle& llm, const InferOptions& options) {
    // The samples must be about the same data: require a shared column name.
    bool shared = false;
    for (const auto& spec : input_sample.metrics.specs) {
        if (output_sample.metrics.contains(spec.name)) {
            shared = true;
            break;
        }
    }
    for (const auto& dim : input_sample.dimensions) {
        if (std::find(output_sample.dimensions.begin(), output_sample.dimensions.end(), dim) !=
            output_sample.dimensions.end()) {
            shared = true;
        }
    }
    if (!shared) {
        fail(ErrorKind::invalid_argument, "input and output samples share no column name");
    }

    std::string feedback;
    std::string last_failure = "no attempts made";
    for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
        const LlmRequest request =
            make_infer_plan_request(input_sample, output_sample, feedback, attempt);
        const LlmResponse response = llm.complete(request);
        const auto block = extract_json_block(response.text);
        if (!block) {
            last_failure = "response was not parseable as a plan";
            feedback = "The previous response contained no JSON plan. " + last_failure;
            continue;
        }
        TransformPlan plan;
        try {
            plan = plan_from_json(*block);
        } catch (const Error& e) {
            last_failure = e.what();
            feedback = std::string("The previous plan did not parse: ") + e.what();
            continue;
        }
        try {
            if (apply_plan(input_sample, plan) == output_sample) return plan;
            last_failure = "plan applied cleanly but did not reproduce the output sample";
        } catch (const Error& e) {
            last_failure = e.what();
        }
        feedback = "The previous plan failed verification: " + last_failure;
    }
    fail(ErrorKind::plan_rejected, "no plan reproduced the output sample within " +
                                       std::to_string(options.max_attempts) +
                                       " attempts; last failure: " + last_failure);
}

} // namespace insight
