#pragma once

#include <optional>
#include <string>
#include <vector>

#include "insight/datamodel.hpp"
#include "insight/detectors.hpp"
#include "insight/llm.hpp"

namespace insight {

enum class FillStrategy { drop, median, zero };

const char* to_string(FillStrategy strategy);
FillStrategy fill_strategy_from_string(const std::string& s); // throws Error{config}

struct CleanReport {
    std::size_t duplicates_removed = 0;
    /// Missing cells eliminated, whether imputed or removed with their row.
    std::size_t values_imputed = 0;
    std::size_t outliers_capped = 0;
};

struct CleanResult {
    Dataset dataset;
    CleanReport report;
};

/// Dedup, impute (or drop) missing values, then cap values beyond
/// median +/- cap_k * MAD per metric column to the boundary. A zero MAD
/// collapses the boundary to the median, so any deviating value is capped.
CleanResult clean(const Dataset& d, FillStrategy strategy, double cap_k);

/// Drop metric columns whose sample variance falls below min_variance, plus
/// any ratio metric referencing a dropped column.
Dataset reduce(const Dataset& d, double min_variance);

struct PrecalcEntry {
    std::string metric;
    DimFilter slice;
    Period period;
    /// Additive metrics only; a ratio has no meaningful total.
    std::optional<double> total;
    double average = 0.0;
    std::size_t count = 0;
};

/// Rule-based precomputation of totals and averages per (metric, slice,
/// period). Ratio averages are always sum(numerator)/sum(denominator) — the
/// weighted-average schema — never a mean of per-row ratios.
struct PrecalcTable {
    std::vector<PrecalcEntry> entries;
};

PrecalcTable precalculate(const Dataset& d, const std::vector<Period>& periods,
                          const std::vector<DimFilter>& slices);

ordered_json precalc_to_json(const PrecalcTable& table);

/// Execute plan steps in order. Throws Error{bad_step} naming the step index
/// when a step references a column that does not exist at that point.
Dataset apply_plan(const Dataset& d, const TransformPlan& plan);

struct InferOptions {
    /// Total attempts including the first (the refinement retry budget).
    int max_attempts = 3;
};

/// Ask the model for a declarative plan turning input_sample into
/// output_sample, verify by applying it, and retry with feedback on failure.
/// Throws Error{plan_rejected} once the attempt budget is exhausted.
TransformPlan infer_transform_plan(const Dataset& input_sample, const Dataset& output_sample,
                                   LlmHandle& llm, const InferOptions& options = {});

} // namespace insight
