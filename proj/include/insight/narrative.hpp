#pragma once

#include <optional>
#include <string>
#include <vector>

#include "insight/anonymize.hpp"
#include "insight/datamodel.hpp"
#include "insight/llm.hpp"

namespace insight {

struct LocaleConfig {
    std::string title = "Business insight report";
    /// Canonical numeric format for generated text: fixed decimals, no
    /// thousands separators, so fidelity extraction is a regular scan.
    int decimals = 2;
};

struct ReportSection {
    std::string heading;
    std::vector<std::string> paragraphs;
};

struct ReportDoc {
    std::string title;
    Period period;
    std::vector<ReportSection> sections;
    std::vector<std::string> source_insights; // insight keys
    std::string generator;                    // "template" | "llm_summarized"
    /// Reserved reader-feedback counters (reports are consumed after the
    /// fact; no collection mechanism ships with the engine).
    int likes = 0;
    int dislikes = 0;
};

/// One deterministic sentence per insight from a fixed per-kind template,
/// grouped into per-kind sections. Rule-based text cannot misstate its own
/// numbers: check_fidelity of the result is always exactly 1.0.
ReportDoc render_template(const std::vector<AtomicInsight>& insights,
                          const LocaleConfig& locale = {});

struct SummarizeOptions {
    /// Marks the fact block as rule-precomputed in the prompt; the values
    /// are then quoted rather than recomputed by the model.
    bool facts_precalculated = false;
    ordered_json precalc = nullptr;     // optional precalc table JSON
    ordered_json style_notes = nullptr; // per-kind expert prompt overrides
    std::size_t budget_tokens = 16384;
    LocaleConfig locale;
};

struct SummarizeResult {
    ReportDoc report;
    std::size_t leak_count = 0;
};

/// encode names -> summarization prompt -> complete -> decode. The request
/// text never contains a protected name. An empty insight list falls back to
/// the template renderer without any provider call.
SummarizeResult summarize(const std::vector<AtomicInsight>& insights, LlmHandle& llm,
                          NameVault& vault, const std::vector<std::string>& protected_names,
                          const SummarizeOptions& options = {});

struct FidelityReport {
    std::size_t claims_checked = 0;
    std::size_t claims_correct = 0;
    /// Undefined (not 1.0) when nothing was checked.
    std::optional<double> precision;
};

/// Scan every `value/baseline/change/share/score <number>` claim in the
/// report and check it against the matching source insight field within
/// max(0.5% relative, 0.005 absolute) — the absolute term absorbs canonical
/// two-decimal rounding.
FidelityReport check_fidelity(const ReportDoc& report, const std::vector<AtomicInsight>& sources);

/// Build a ReportDoc from generated narrative text (`## kind` sections).
ReportDoc report_from_text(const std::string& text, const std::string& generator,
                           const std::vector<AtomicInsight>& sources,
                           const LocaleConfig& locale = {});

std::string to_markdown(const ReportDoc& report);
ordered_json report_to_json(const ReportDoc& report);

std::string format_number(double value, int decimals = 2);

} // namespace insight
