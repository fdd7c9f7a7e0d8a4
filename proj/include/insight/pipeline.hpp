#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "insight/anonymize.hpp"
#include "insight/chunk.hpp"
#include "insight/datamodel.hpp"
#include "insight/detectors.hpp"
#include "insight/llm.hpp"
#include "insight/narrative.hpp"

namespace insight {

enum class PipelineMode { rule_only, llm_only, llm_chunked, sequential, hybrid };

const char* to_string(PipelineMode mode);
PipelineMode pipeline_mode_from_string(const std::string& s); // throws Error{config}

struct PipelineConfig {
    PipelineMode mode = PipelineMode::rule_only;
    DetectorConfig detector;
    ChunkSpec chunk; // chunking strategy and the analysis token budget
    std::optional<LlmHandle> llm;
    /// Mask proper names before provider calls (hybrid default).
    bool anonymize = true;
    /// Attach rule-precomputed facts and mark them as such (hybrid default).
    bool precalc = true;
    ordered_json prompt_overrides = nullptr; // expert notes, keyed by audience
    std::vector<std::string> protected_names; // joined with dimension values
    std::size_t summarize_budget_tokens = 16384;
    int jobs = 0; // worker bound for chunk fan-out; 0 = hardware parallelism
    std::uint64_t vault_salt = 0;
    LocaleConfig locale;

    void validate() const; // throws Error{config}
};

struct RunResult {
    ReportDoc report;
    std::vector<AtomicInsight> insights;
    /// Rule-engine recomputation on exactly the data the provider saw; the
    /// math-precision reference for this run.
    std::vector<AtomicInsight> reference_insights;
    std::size_t leak_count = 0;
    std::size_t facts_sent = 0;
    std::size_t rows_processed = 0;
    /// Wall-clock diagnostics; never serialized (outputs stay byte-stable).
    std::map<std::string, double> timings_ms;
    NameVault vault;
    bool decoded = false; // true when a decode pass ran (leak_count is live)
};

/// Execute one pipeline architecture end to end on a validated, cleaned
/// dataset. Errors are annotated with the failing stage (and chunk index).
RunResult run(const Dataset& d, const PipelineConfig& cfg);

/// Concatenate per-chunk findings in chunk order, canonically sort, and drop
/// exact duplicates (same kind/metric/dims/period), keeping the first.
std::vector<AtomicInsight> merge_chunk_results(const std::vector<std::vector<AtomicInsight>>& parts);

} // namespace insight
