#include "insight/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

#include "insight/chunk.hpp"
#include "insight/error.hpp"

namespace insight {

namespace {

struct Rng {
    std::uint64_t state;
    explicit Rng(std::uint64_t seed) : state(seed) {}
    std::uint64_t next_u64() {
        state += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }
};

enum class EventKind { spike, shift, high, dimension_anomaly };

struct PlantedEvent {
    EventKind kind;
    int day = 0;          // index into the day grid
    std::size_t slice = 0; // dimension_anomaly only
};

InsightKind oracle_kind(EventKind kind) {
    switch (kind) {
        case EventKind::spike: return InsightKind::spike;
        case EventKind::shift: return InsightKind::anomalous_shift;
        case EventKind::high: return InsightKind::all_time_high;
        case EventKind::dimension_anomaly: return InsightKind::dimension_anomaly;
    }
    return InsightKind::spike;
}

} // namespace

Fixture generate_fixture(const FixtureSpec& spec, std::uint64_t seed,
                         const DetectorConfig& detector) {
    detector.validate();
    if (spec.dim_values.empty()) fail(ErrorKind::invalid_argument, "fixture needs dim values");
    const int guard = std::max(detector.min_history, detector.window) + 1;
    if (spec.days < guard + detector.window) {
        fail(ErrorKind::unplantable,
             "fixture needs at least " + std::to_string(guard + detector.window) + " days");
    }

    // Lay events on an even grid, spaced so no two land within one detector
    // window (plus recovery room) of each other.
    const int total_events = spec.spikes + spec.shifts + spec.highs + spec.dimension_anomalies;
    const int first_day = guard;
    const int last_day = spec.days - detector.spike_recovery_span - 2;
    const int spacing = detector.window + detector.spike_recovery_span + 2;
    if (total_events > 0 && (last_day - first_day) / spacing + 1 < total_events) {
        fail(ErrorKind::unplantable,
             "cannot plant " + std::to_string(total_events) + " events " +
                 std::to_string(spacing) + " days apart in " + std::to_string(spec.days) + " days");
    }

    Rng rng(seed);
    std::vector<PlantedEvent> events;
    {
        // Interleave kinds so each spreads across the timeline.
        std::vector<EventKind> kinds;
        for (int i = 0; i < spec.spikes; ++i) kinds.push_back(EventKind::spike);
        for (int i = 0; i < spec.shifts; ++i) kinds.push_back(EventKind::shift);
        for (int i = 0; i < spec.highs; ++i) kinds.push_back(EventKind::high);
        for (int i = 0; i < spec.dimension_anomalies; ++i) {
            kinds.push_back(EventKind::dimension_anomaly);
        }
        // Deterministic shuffle.
        for (std::size_t i = kinds.size(); i > 1; --i) {
            const std::size_t j = rng.next_u64() % i;
            std::swap(kinds[i - 1], kinds[j]);
        }
        const int span = total_events > 1 ? (last_day - first_day) / (total_events - 1) : 0;
        for (int i = 0; i < total_events; ++i) {
            PlantedEvent event;
            event.kind = kinds[i];
            event.day = total_events > 1 ? first_day + i * span : (first_day + last_day) / 2;
            event.slice = rng.next_u64() % spec.dim_values.size();
            events.push_back(event);
        }
    }

    // Baseline per (slice, metric): level with a weekly pattern, a gentle
    // decline (so noise never sets incidental record highs) and small noise.
    const Date start = Date::from_ymd(2023, 1, 1);
    Dataset dataset;
    dataset.dimensions = {spec.dimension};
    dataset.metrics.specs = {
        {"sessions", MetricKind::additive, "", "", "count", Direction::higher_is_better},
        {"clicks", MetricKind::additive, "", "", "count", Direction::higher_is_better},
        {"cost", MetricKind::additive, "", "", "usd", Direction::lower_is_better},
        {"cpc", MetricKind::ratio, "cost", "clicks", "usd/click", Direction::lower_is_better},
    };

    std::vector<double> session_level(spec.dim_values.size());
    std::vector<double> click_level(spec.dim_values.size());
    std::vector<double> cost_level(spec.dim_values.size());
    for (std::size_t s = 0; s < spec.dim_values.size(); ++s) {
        session_level[s] = 400.0 + 150.0 * static_cast<double>(s);
        click_level[s] = 80.0 + 30.0 * static_cast<double>(s);
        cost_level[s] = 120.0 + 40.0 * static_cast<double>(s);
    }

    auto planted_multiplier = [&events](int day, std::size_t slice) {
        // Multiplier applied to the sessions baseline for this (day, slice).
        for (const auto& event : events) {
            switch (event.kind) {
                case EventKind::spike:
                    if (day == event.day) return 2.2;
                    break;
                case EventKind::shift:
                    if (day == event.day) return 0.1;
                    break;
                case EventKind::high:
                    if (day == event.day) return 1.45;
                    break;
                case EventKind::dimension_anomaly:
                    if (day == event.day && slice == event.slice) return 0.1;
                    break;
            }
        }
        return 1.0;
    };

    constexpr double kTau = 6.283185307179586;
    for (int day = 0; day < spec.days; ++day) {
        const double weekly = 1.0 + 0.3 * std::sin(kTau * static_cast<double>(day) / 7.0);
        const double decline = 1.0 - 0.0001 * static_cast<double>(day);
        for (std::size_t s = 0; s < spec.dim_values.size(); ++s) {
            Record row;
            row.date = start.add_days(day);
            row.dims[spec.dimension] = spec.dim_values[s];
            const double noise = 1.0 + rng.uniform(-0.01, 0.01);
            const double shape = weekly * decline;
            const double multiplier = planted_multiplier(day, s);
            row.values["sessions"] = session_level[s] * shape * noise * multiplier;
            row.values["clicks"] = click_level[s] * shape * noise;
            row.values["cost"] = cost_level[s] * shape * noise;
            dataset.rows.push_back(std::move(row));
        }
    }
    sort_canonical(dataset);

    Fixture fixture;
    fixture.seed = seed;
    fixture.detector = detector;
    fixture.names = spec.dim_values;
    fixture.dataset = std::move(dataset);
    fixture.oracle = detect_all(fixture.dataset, detector);

    // The fixture contract: every planted event is provably detected.
    for (const auto& event : events) {
        const Date date = start.add_days(event.day);
        const InsightKind kind = oracle_kind(event.kind);
        const bool found = std::any_of(
            fixture.oracle.begin(), fixture.oracle.end(), [&](const AtomicInsight& insight) {
                if (insight.kind != kind || insight.metric != "sessions") return false;
                return insight.period_start <= date && date <= insight.period_end;
            });
        if (!found) {
            fail(ErrorKind::unplantable,
                 std::string("planted ") + to_string(kind) + " at " + date.to_string() +
                     " was not detected; event density or thresholds are inconsistent");
        }
    }
    return fixture;
}

double measure_recall(const std::vector<AtomicInsight>& detected,
                      const std::vector<AtomicInsight>& oracle) {
    if (oracle.empty()) return 1.0;
    std::size_t matched = 0;
    for (const auto& truth : oracle) {
        const bool hit = std::any_of(detected.begin(), detected.end(), [&](const AtomicInsight& i) {
            if (i.kind != truth.kind || i.metric != truth.metric || i.dims != truth.dims) {
                return false;
            }
            const Date lo = std::max(i.period_start, truth.period_start);
            const Date hi = std::min(i.period_end, truth.period_end);
            return lo <= hi;
        });
        if (hit) ++matched;
    }
    return static_cast<double>(matched) / static_cast<double>(oracle.size());
}

std::vector<PipelineMode> all_pipeline_modes() {
    return {PipelineMode::rule_only, PipelineMode::llm_only, PipelineMode::llm_chunked,
            PipelineMode::sequential, PipelineMode::hybrid};
}

namespace {

PipelineConfig mode_config(const Fixture& fixture, PipelineMode mode, const SimConfig& sim,
                           const BenchOptions& options, std::size_t budget_tokens) {
    PipelineConfig cfg;
    cfg.mode = mode;
    cfg.detector = fixture.detector;
    cfg.chunk.strategy = options.chunk_strategy;
    cfg.chunk.dimension = fixture.dataset.dimensions.empty() ? std::string{}
                                                             : fixture.dataset.dimensions.front();
    cfg.chunk.budget_tokens = budget_tokens;
    cfg.llm = LlmHandle::simulated(sim);
    cfg.anonymize = mode == PipelineMode::hybrid;
    cfg.precalc = mode == PipelineMode::hybrid;
    cfg.protected_names = fixture.names;
    cfg.jobs = options.jobs;
    cfg.vault_salt = fixture.seed;
    return cfg;
}

} // namespace

BenchReport run_bench(const Fixture& fixture, const std::vector<PipelineMode>& modes,
                      const SimConfig& sim, const BenchOptions& options) {
    sim.validate();

    std::size_t budget_tokens = options.budget_tokens;
    if (budget_tokens == 0) {
        std::vector<std::size_t> all(fixture.dataset.rows.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        const std::size_t full = estimate_tokens(serialize_rows(fixture.dataset, all));
        budget_tokens = static_cast<std::size_t>(
            std::ceil(static_cast<double>(full) * options.budget_fraction));
        if (budget_tokens == 0) budget_tokens = 1;
    }

    BenchReport report;
    report.meta["seed"] = fixture.seed;
    report.meta["days"] = fixture.dataset.rows.empty()
                              ? 0
                              : fixture.dataset.distinct_dates().size();
    report.meta["rows"] = fixture.dataset.rows.size();
    report.meta["oracle_insights"] = fixture.oracle.size();
    report.meta["budget_tokens"] = budget_tokens;
    report.meta["sim"] = ordered_json{{"seed", sim.seed},
                                      {"p_math_error", sim.p_math_error},
                                      {"math_error_scale", sim.math_error_scale},
                                      {"p_hallucination", sim.p_hallucination},
                                      {"miss_rate", sim.miss_rate}};

    for (PipelineMode mode : modes) {
        ModeMetrics metrics;
        metrics.mode = to_string(mode);
        metrics.reports = 1;
        try {
            const PipelineConfig cfg = mode_config(fixture, mode, sim, options, budget_tokens);
            const RunResult run_result = run(fixture.dataset, cfg);

            metrics.fidelity = check_fidelity(run_result.report, run_result.reference_insights);
            if (run_result.decoded || mode == PipelineMode::rule_only) {
                metrics.hallucination_occurrences = run_result.leak_count;
            } else {
                // No decode pass ran: scan the shipped report for entity
                // tokens that were never part of the input name set.
                std::size_t found = 0;
                for (const auto& section : run_result.report.sections) {
                    for (const auto& line : section.paragraphs) {
                        found += find_entity_tokens(line).size();
                    }
                }
                metrics.hallucination_occurrences = found;
            }
            metrics.reports_with_hallucinations = metrics.hallucination_occurrences > 0 ? 1 : 0;
            metrics.recall = measure_recall(run_result.insights, fixture.oracle);
            metrics.rows_fraction =
                fixture.dataset.rows.empty()
                    ? 1.0
                    : static_cast<double>(run_result.rows_processed) /
                          static_cast<double>(fixture.dataset.rows.size());
        } catch (const Error& e) {
            metrics.failed = true;
            metrics.error = e.what();
        }
        report.rows.push_back(std::move(metrics));
    }
    return report;
}

std::string bench_to_markdown(const BenchReport& report) {
    std::string out = "# Benchmark report (simulated provider)\n\n";
    out += "Seed " + report.meta.value("seed", ordered_json(0)).dump() + ", " +
           report.meta.value("rows", ordered_json(0)).dump() + " rows, " +
           report.meta.value("oracle_insights", ordered_json(0)).dump() +
           " oracle insights, analysis budget " +
           report.meta.value("budget_tokens", ordered_json(0)).dump() + " tokens.\n\n";
    out += "| pipeline | math precision | hallucinations/report | recall | rows processed |\n";
    out += "|---|---|---|---|---|\n";
    char buf[256];
    for (const auto& row : report.rows) {
        if (row.failed) {
            out += "| " + row.mode + " | failed: " + row.error + " | - | - | - |\n";
            continue;
        }
        const std::string precision =
            row.fidelity.precision ? format_number(*row.fidelity.precision, 3) : "n/a";
        std::snprintf(buf, sizeof(buf), "| %s | %s | %.2f | %.3f | %.2f |\n", row.mode.c_str(),
                      precision.c_str(),
                      static_cast<double>(row.hallucination_occurrences) /
                          static_cast<double>(std::max<std::size_t>(1, row.reports)),
                      row.recall, row.rows_fraction);
        out += buf;
    }
    out += "\nAll figures come from the deterministic simulator; they reproduce orderings and "
           "exactness claims, not any production system's absolute numbers.\n";
    out += "Reader-satisfaction ratios require human raters and are out of scope for this "
           "harness.\n";
    return out;
}

ordered_json bench_to_json(const BenchReport& report) {
    ordered_json j;
    j["meta"] = report.meta;
    ordered_json rows = ordered_json::array();
    for (const auto& row : report.rows) {
        ordered_json r;
        r["mode"] = row.mode;
        r["failed"] = row.failed;
        if (row.failed) {
            r["error"] = row.error;
        } else {
            r["claims_checked"] = row.fidelity.claims_checked;
            r["claims_correct"] = row.fidelity.claims_correct;
            if (row.fidelity.precision) {
                r["math_precision"] = *row.fidelity.precision;
            } else {
                r["math_precision"] = nullptr;
            }
            r["hallucination_occurrences"] = row.hallucination_occurrences;
            r["reports_with_hallucinations"] = row.reports_with_hallucinations;
            r["reports"] = row.reports;
            r["recall"] = row.recall;
            r["rows_fraction"] = row.rows_fraction;
        }
        rows.push_back(std::move(r));
    }
    j["modes"] = std::move(rows);
    return j;
}

} // namespace insight
