#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "insight/datamodel.hpp"
#include "insight/detectors.hpp"
#include "insight/llm.hpp"
#include "insight/narrative.hpp"
#include "insight/pipeline.hpp"

namespace insight {

struct FixtureSpec {
    int days = 730;
    std::string dimension = "channel";
    std::vector<std::string> dim_values = {"Acme Ads", "Brightwave Organic", "Crestline Email"};
    int spikes = 2;
    int shifts = 2;
    int highs = 1;
    int dimension_anomalies = 2;
};

/// Synthetic dataset with planted, oracle-known events. The oracle is the
/// rule engine's own output on the dataset, verified to contain each planted
/// event before the fixture is returned.
struct Fixture {
    Dataset dataset;
    std::vector<AtomicInsight> oracle;
    std::vector<std::string> names;
    std::uint64_t seed = 0;
    DetectorConfig detector;
};

Fixture generate_fixture(const FixtureSpec& spec, std::uint64_t seed,
                         const DetectorConfig& detector = {});

/// Oracle items matched by a detected insight with the same
/// (kind, metric, dims) and at least one day of period overlap, over the
/// oracle size. Empty oracle defines recall as 1.0.
double measure_recall(const std::vector<AtomicInsight>& detected,
                      const std::vector<AtomicInsight>& oracle);

struct BenchOptions {
    /// Analysis token budget; 0 derives it from budget_fraction.
    std::size_t budget_tokens = 0;
    /// Fraction of the serialized dataset size, used when budget_tokens == 0.
    double budget_fraction = 1.0;
    ChunkStrategy chunk_strategy = ChunkStrategy::budget;
    int jobs = 0;
};

struct ModeMetrics {
    std::string mode;
    bool failed = false;
    std::string error;
    FidelityReport fidelity;
    std::size_t hallucination_occurrences = 0;
    std::size_t reports_with_hallucinations = 0;
    std::size_t reports = 0;
    double recall = 0.0;
    double rows_fraction = 0.0;
};

struct BenchReport {
    std::vector<ModeMetrics> rows;
    ordered_json meta;
};

/// Run each mode against the fixture with the simulated provider and score
/// math precision (vs the rule recomputation on the data each mode saw),
/// hallucinations (decode leaks, or the token scanner when no decode ran)
/// and oracle recall. A failing mode marks its row failed; the bench
/// continues.
BenchReport run_bench(const Fixture& fixture, const std::vector<PipelineMode>& modes,
                      const SimConfig& sim, const BenchOptions& options = {});

std::string bench_to_markdown(const BenchReport& report);
ordered_json bench_to_json(const BenchReport& report);

std::vector<PipelineMode> all_pipeline_modes();

} // namespace insight
