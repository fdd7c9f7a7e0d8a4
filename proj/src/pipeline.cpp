#include "insight/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "insight/error.hpp"
#include "insight/preprocess.hpp"

namespace insight {

const char* to_string(PipelineMode mode) {
    switch (mode) {
        case PipelineMode::rule_only: return "rule_only";
        case PipelineMode::llm_only: return "llm_only";
        case PipelineMode::llm_chunked: return "llm_chunked";
        case PipelineMode::sequential: return "sequential";
        case PipelineMode::hybrid: return "hybrid";
    }
    return "rule_only";
}

PipelineMode pipeline_mode_from_string(const std::string& s) {
    if (s == "rule_only") return PipelineMode::rule_only;
    if (s == "llm_only") return PipelineMode::llm_only;
    if (s == "llm_chunked") return PipelineMode::llm_chunked;
    if (s == "sequential") return PipelineMode::sequential;
    if (s == "hybrid") return PipelineMode::hybrid;
    fail(ErrorKind::config, "unknown pipeline mode '" + s + "'");
}

void PipelineConfig::validate() const {
    detector.validate();
    if (mode != PipelineMode::rule_only && !llm.has_value()) {
        fail(ErrorKind::config,
             std::string("pipeline mode '") + to_string(mode) + "' requires an LLM provider");
    }
    if (jobs < 0) fail(ErrorKind::config, "jobs must be >= 0");
}

std::vector<AtomicInsight> merge_chunk_results(
    const std::vector<std::vector<AtomicInsight>>& parts) {
    std::vector<AtomicInsight> merged;
    for (const auto& part : parts) {
        merged.insert(merged.end(), part.begin(), part.end());
    }
    sort_insights(merged);
    std::set<std::string> seen;
    std::vector<AtomicInsight> out;
    out.reserve(merged.size());
    for (auto& insight : merged) {
        if (seen.insert(insight.key()).second) out.push_back(std::move(insight));
    }
    return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

[[noreturn]] void rethrow_with_stage(const Error& e, const std::string& stage) {
    if (!e.stage().empty()) throw e;
    throw Error(e.kind(), e.what(), stage);
}

std::vector<std::string> protected_names_for(const Dataset& d, const PipelineConfig& cfg) {
    std::set<std::string> names(cfg.protected_names.begin(), cfg.protected_names.end());
    for (const auto& row : d.rows) {
        for (const auto& [_, value] : row.dims) {
            if (!value.empty()) names.insert(value);
        }
    }
    return {names.begin(), names.end()};
}

Dataset subset(const Dataset& d, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.metrics = d.metrics;
    out.dimensions = d.dimensions;
    out.rows.reserve(indices.size());
    for (std::size_t i : indices) out.rows.push_back(d.rows.at(i));
    return out;
}

/// Longest row prefix whose serialized block stays within the budget, using
/// the bytes/4 default estimator. Matches estimate_tokens(serialize_rows()).
std::vector<std::size_t> truncate_to_budget(const Dataset& d, std::size_t budget_tokens) {
    std::vector<std::size_t> kept;
    std::size_t bytes = 2; // "[]"
    for (std::size_t i = 0; i < d.rows.size(); ++i) {
        const std::size_t row_bytes = rows_to_json(d, {i}).front().dump().size();
        const std::size_t next = bytes + row_bytes + (kept.empty() ? 0 : 1);
        if ((next + 3) / 4 > budget_tokens) break;
        kept.push_back(i);
        bytes = next;
    }
    return kept;
}

std::vector<AtomicInsight> parse_claimed_insights(const std::string& response_text,
                                                  const std::string& stage) {
    const auto block = extract_json_block(response_text);
    if (!block) {
        std::fprintf(stderr, "insight: %s: response carried no parseable insight JSON; "
                             "counting zero insights\n",
                     stage.c_str());
        return {};
    }
    try {
        return insights_from_json(*block);
    } catch (const Error& e) {
        std::fprintf(stderr, "insight: %s: %s; counting zero insights\n", stage.c_str(), e.what());
        return {};
    }
}

/// Slice-scoped analyses report slice-scoped findings: merge the context
/// dims in and reclassify whole-series shifts. Mirrors what the analyst is
/// told about the data it sees.
void relabel_context(std::vector<AtomicInsight>& insights, const DimFilter& context) {
    if (context.empty()) return;
    for (auto& insight : insights) {
        for (const auto& [k, v] : context) insight.dims.emplace(k, v);
        if (insight.kind == InsightKind::anomalous_shift) {
            insight.kind = InsightKind::dimension_anomaly;
        }
    }
    sort_insights(insights);
}

/// Bounded fan-out with deterministic result placement. Rethrows the first
/// task error after joining.
template <typename Fn>
void run_parallel(std::size_t tasks, int jobs, Fn&& fn) {
    std::size_t workers = jobs > 0 ? static_cast<std::size_t>(jobs)
                                   : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, tasks);
    if (workers <= 1) {
        for (std::size_t i = 0; i < tasks; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= tasks) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::string expert_note(const PipelineConfig& cfg, const std::string& key) {
    if (!cfg.prompt_overrides.is_object()) return {};
    if (cfg.prompt_overrides.contains(key)) {
        return cfg.prompt_overrides.at(key).get<std::string>();
    }
    return cfg.prompt_overrides.value("analysis", std::string{});
}

// ---------------------------------------------------------------------------
// Mode implementations

RunResult run_rule_only(const Dataset& d, const PipelineConfig& cfg) {
    RunResult result;
    const auto started = Clock::now();
    result.insights = detect_all(d, cfg.detector);
    result.timings_ms["detect"] = ms_since(started);
    result.report = render_template(result.insights, cfg.locale);
    result.reference_insights = result.insights;
    result.rows_processed = d.rows.size();
    return result;
}

RunResult run_llm_only(const Dataset& d, const PipelineConfig& cfg) {
    RunResult result;
    LlmHandle llm = *cfg.llm;

    const auto kept = truncate_to_budget(d, cfg.chunk.budget_tokens);
    result.rows_processed = kept.size();
    result.facts_sent = kept.size();

    const Dataset seen = subset(d, kept);
    std::vector<std::size_t> all(seen.rows.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

    const auto started = Clock::now();
    const LlmRequest request =
        make_analyze_rows_request(seen, all, cfg.detector, {}, expert_note(cfg, "analysis"));
    const LlmResponse response = llm.complete(request);
    result.timings_ms["llm"] = ms_since(started);

    result.insights = parse_claimed_insights(response.text, "llm_only analysis");
    result.report = report_from_text(response.text, "llm_summarized", result.insights, cfg.locale);
    result.reference_insights = detect_all(seen, cfg.detector);
    return result;
}

RunResult run_llm_chunked(const Dataset& d, const PipelineConfig& cfg) {
    RunResult result;
    LlmHandle llm = *cfg.llm;

    const ChunkPlan plan = plan_chunks(d, cfg.chunk);
    const std::size_t n = plan.chunks.size();
    std::vector<std::vector<AtomicInsight>> claimed(n);
    std::vector<std::vector<AtomicInsight>> reference(n);

    const auto started = Clock::now();
    run_parallel(n, cfg.jobs, [&](std::size_t i) {
        const auto& chunk = plan.chunks[i];
        const std::string stage = "llm_chunked chunk " + std::to_string(i);
        DimFilter context;
        if (cfg.chunk.strategy == ChunkStrategy::categorical && !chunk.empty()) {
            const auto& dims = d.rows[chunk.front()].dims;
            auto it = dims.find(cfg.chunk.dimension);
            if (it != dims.end()) context[cfg.chunk.dimension] = it->second;
        }
        try {
            LlmHandle worker = llm; // shared provider, thread-safe
            const LlmRequest request =
                make_analyze_rows_request(d, chunk, cfg.detector, context,
                                          expert_note(cfg, "analysis"));
            const LlmResponse response = worker.complete(request);
            claimed[i] = parse_claimed_insights(response.text, stage);
            auto ref = detect_all(subset(d, chunk), cfg.detector);
            relabel_context(ref, context);
            reference[i] = std::move(ref);
        } catch (const Error& e) {
            rethrow_with_stage(e, stage);
        }
    });
    result.timings_ms["chunks"] = ms_since(started);

    result.insights = merge_chunk_results(claimed);
    result.reference_insights = merge_chunk_results(reference);
    result.rows_processed = d.rows.size();
    for (const auto& chunk : plan.chunks) result.facts_sent += chunk.size();

    const auto summarize_started = Clock::now();
    result.vault = NameVault::with_salt(cfg.vault_salt);
    const auto names = cfg.anonymize ? protected_names_for(d, cfg) : std::vector<std::string>{};
    SummarizeOptions options;
    options.facts_precalculated = false;
    options.style_notes = cfg.prompt_overrides;
    options.budget_tokens = cfg.summarize_budget_tokens;
    options.locale = cfg.locale;
    try {
        auto summary = summarize(result.insights, llm, result.vault, names, options);
        result.report = std::move(summary.report);
        result.leak_count = summary.leak_count;
        result.decoded = !result.insights.empty();
    } catch (const Error& e) {
        rethrow_with_stage(e, "llm_chunked summarize");
    }
    result.timings_ms["summarize"] = ms_since(summarize_started);
    return result;
}

RunResult run_sequential(const Dataset& d, const PipelineConfig& cfg) {
    RunResult result;
    LlmHandle llm = *cfg.llm;

    // Fragments: the whole series plus every (dimension, value) slice that
    // ranks in the top_n of some metric over the full range.
    std::vector<DimFilter> fragments{{}};
    if (!d.rows.empty()) {
        const auto dates = d.distinct_dates();
        const Period full{dates.front(), dates.back()};
        std::set<std::pair<std::string, std::string>> slices;
        for (const auto& top : detect_top_dimensions(d, cfg.detector, full)) {
            for (const auto& [k, v] : top.dims) slices.insert({k, v});
        }
        for (const auto& [k, v] : slices) fragments.push_back({{k, v}});
    }

    const std::size_t n = fragments.size();
    std::vector<std::vector<AtomicInsight>> claimed(n);
    std::vector<std::vector<AtomicInsight>> reference(n);
    std::vector<std::vector<std::size_t>> fragment_rows(n);

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < d.rows.size(); ++r) {
            bool match = true;
            for (const auto& [k, v] : fragments[i]) {
                auto it = d.rows[r].dims.find(k);
                if (it == d.rows[r].dims.end() || it->second != v) {
                    match = false;
                    break;
                }
            }
            if (match) fragment_rows[i].push_back(r);
        }
    }

    const auto started = Clock::now();
    run_parallel(n, cfg.jobs, [&](std::size_t i) {
        const std::string stage = "sequential fragment " + std::to_string(i);
        try {
            Dataset fragment = subset(d, fragment_rows[i]);
            const auto kept = truncate_to_budget(fragment, cfg.chunk.budget_tokens);
            std::string note = expert_note(cfg, "analysis");
            if (!fragments[i].empty()) {
                note += note.empty() ? "Focus on this slice." : " Focus on this slice.";
            }
            LlmHandle worker = llm;
            const LlmRequest request =
                make_analyze_rows_request(fragment, kept, cfg.detector, fragments[i], note);
            const LlmResponse response = worker.complete(request);
            claimed[i] = parse_claimed_insights(response.text, stage);
            auto ref = detect_all(subset(fragment, kept), cfg.detector);
            relabel_context(ref, fragments[i]);
            reference[i] = std::move(ref);
        } catch (const Error& e) {
            rethrow_with_stage(e, stage);
        }
    });
    result.timings_ms["fragments"] = ms_since(started);

    result.insights = merge_chunk_results(claimed);
    result.reference_insights = merge_chunk_results(reference);
    std::set<std::size_t> touched;
    for (std::size_t i = 0; i < n; ++i) {
        result.facts_sent += fragment_rows[i].size();
        for (std::size_t r : fragment_rows[i]) touched.insert(r);
    }
    result.rows_processed = touched.size();

    result.vault = NameVault::with_salt(cfg.vault_salt);
    const auto names = cfg.anonymize ? protected_names_for(d, cfg) : std::vector<std::string>{};
    SummarizeOptions options;
    options.facts_precalculated = false;
    options.style_notes = cfg.prompt_overrides;
    options.budget_tokens = cfg.summarize_budget_tokens;
    options.locale = cfg.locale;
    try {
        auto summary = summarize(result.insights, llm, result.vault, names, options);
        result.report = std::move(summary.report);
        result.leak_count = summary.leak_count;
        result.decoded = !result.insights.empty();
    } catch (const Error& e) {
        rethrow_with_stage(e, "sequential summarize");
    }
    return result;
}

RunResult run_hybrid(const Dataset& d, const PipelineConfig& cfg) {
    RunResult result;
    LlmHandle llm = *cfg.llm;

    const auto started = Clock::now();
    result.insights = detect_all(d, cfg.detector);
    result.reference_insights = result.insights;
    result.timings_ms["detect"] = ms_since(started);
    result.rows_processed = d.rows.size();

    ordered_json precalc = nullptr;
    if (cfg.precalc && !d.rows.empty()) {
        const auto dates = d.distinct_dates();
        const Period full{dates.front(), dates.back()};
        std::vector<DimFilter> slices{{}};
        for (const auto& dim : d.dimensions) {
            std::set<std::string> values;
            for (const auto& row : d.rows) {
                auto it = row.dims.find(dim);
                if (it != row.dims.end()) values.insert(it->second);
            }
            for (const auto& value : values) slices.push_back({{dim, value}});
        }
        precalc = precalc_to_json(precalculate(d, {full}, slices));
        result.facts_sent += precalc.size();
    }
    result.facts_sent += result.insights.size();

    result.vault = NameVault::with_salt(cfg.vault_salt);
    const auto names = cfg.anonymize ? protected_names_for(d, cfg) : std::vector<std::string>{};
    SummarizeOptions options;
    options.facts_precalculated = cfg.precalc;
    options.precalc = precalc;
    options.style_notes = cfg.prompt_overrides;
    options.budget_tokens = cfg.summarize_budget_tokens;
    options.locale = cfg.locale;
    const auto summarize_started = Clock::now();
    try {
        auto summary = summarize(result.insights, llm, result.vault, names, options);
        result.report = std::move(summary.report);
        result.leak_count = summary.leak_count;
        result.decoded = !result.insights.empty();
    } catch (const Error& e) {
        rethrow_with_stage(e, "hybrid summarize");
    }
    result.timings_ms["summarize"] = ms_since(summarize_started);
    return result;
}

} // namespace

RunResult run(const Dataset& d, const PipelineConfig& cfg) {
    cfg.validate();
    const auto started = Clock::now();
    RunResult result;
    switch (cfg.mode) {
        case PipelineMode::rule_only: result = run_rule_only(d, cfg); break;
        case PipelineMode::llm_only: result = run_llm_only(d, cfg); break;
        case PipelineMode::llm_chunked: result = run_llm_chunked(d, cfg); break;
        case PipelineMode::sequential: result = run_sequential(d, cfg); break;
        case PipelineMode::hybrid: result = run_hybrid(d, cfg); break;
    }
    result.timings_ms["total"] = ms_since(started);
    return result;
}

} // namespace insight
