#include "insight/cli.hpp"

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "insight/bench.hpp"
#include "insight/error.hpp"
#include "insight/ingest.hpp"
#include "insight/pipeline.hpp"
#include "insight/preprocess.hpp"

namespace insight {

namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write file: " + path.string());
    out << text;
}

void write_json(const fs::path& path, const ordered_json& j) {
    write_text(path, j.dump(2) + "\n");
}

/// Everything a config file may set. Flags override env, env overrides file.
struct FileConfig {
    DetectorConfig detector;
    SimConfig sim;
    ChunkSpec chunk;
    bool anonymize = true;
    bool precalc = true;
    ordered_json prompt_overrides = nullptr;
    std::vector<std::string> names;
    std::size_t summarize_budget_tokens = 16384;
    int jobs = 0;
    std::string fill = "median";
    double cap_k = 3.0;
    std::string date_column = "date";
    std::vector<std::string> dimensions;
    HttpConfig http;
    bool has_http = false;
};

void check_known_keys(const ordered_json& j, const std::set<std::string>& known,
                      const std::string& where) {
    for (const auto& [key, _] : j.items()) {
        if (known.count(key) == 0) {
            fail(ErrorKind::config, "unknown key '" + key + "' in " + where);
        }
    }
}

FileConfig load_file_config(const std::string& path) {
    FileConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot read config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    ordered_json j;
    try {
        j = ordered_json::parse(buf.str());
    } catch (const ordered_json::exception& e) {
        fail(ErrorKind::config, "config file is not valid JSON: " + std::string(e.what()));
    }
    check_known_keys(j, {"detector", "sim", "chunk", "anonymize", "precalc", "prompt_overrides",
                         "names", "summarize_budget_tokens", "jobs", "fill", "cap_k",
                         "date_column", "dimensions", "llm"},
                     "config file");
    if (j.contains("detector")) cfg.detector = detector_from_json(j.at("detector"));
    if (j.contains("sim")) {
        const auto& s = j.at("sim");
        check_known_keys(s, {"seed", "p_math_error", "math_error_scale", "p_hallucination",
                             "miss_rate"},
                         "config sim");
        cfg.sim.seed = s.value("seed", cfg.sim.seed);
        cfg.sim.p_math_error = s.value("p_math_error", cfg.sim.p_math_error);
        cfg.sim.math_error_scale = s.value("math_error_scale", cfg.sim.math_error_scale);
        cfg.sim.p_hallucination = s.value("p_hallucination", cfg.sim.p_hallucination);
        cfg.sim.miss_rate = s.value("miss_rate", cfg.sim.miss_rate);
        cfg.sim.validate();
    }
    if (j.contains("chunk")) {
        const auto& c = j.at("chunk");
        check_known_keys(c, {"strategy", "dimension", "budget_tokens"}, "config chunk");
        cfg.chunk.strategy =
            chunk_strategy_from_string(c.value("strategy", std::string(to_string(cfg.chunk.strategy))));
        cfg.chunk.dimension = c.value("dimension", cfg.chunk.dimension);
        cfg.chunk.budget_tokens = c.value("budget_tokens", cfg.chunk.budget_tokens);
    }
    cfg.anonymize = j.value("anonymize", cfg.anonymize);
    cfg.precalc = j.value("precalc", cfg.precalc);
    if (j.contains("prompt_overrides")) cfg.prompt_overrides = j.at("prompt_overrides");
    if (j.contains("names")) cfg.names = j.at("names").get<std::vector<std::string>>();
    cfg.summarize_budget_tokens = j.value("summarize_budget_tokens", cfg.summarize_budget_tokens);
    cfg.jobs = j.value("jobs", cfg.jobs);
    cfg.fill = j.value("fill", cfg.fill);
    cfg.cap_k = j.value("cap_k", cfg.cap_k);
    cfg.date_column = j.value("date_column", cfg.date_column);
    if (j.contains("dimensions")) {
        cfg.dimensions = j.at("dimensions").get<std::vector<std::string>>();
    }
    if (j.contains("llm")) {
        const auto& l = j.at("llm");
        check_known_keys(l, {"base_url", "path", "api_key", "model", "timeout_seconds",
                             "max_retries", "backoff_ms"},
                         "config llm");
        cfg.http.base_url = l.value("base_url", cfg.http.base_url);
        cfg.http.path = l.value("path", cfg.http.path);
        cfg.http.api_key = l.value("api_key", cfg.http.api_key);
        cfg.http.model = l.value("model", cfg.http.model);
        cfg.http.timeout_seconds = l.value("timeout_seconds", cfg.http.timeout_seconds);
        cfg.http.max_retries = l.value("max_retries", cfg.http.max_retries);
        cfg.http.backoff_ms = l.value("backoff_ms", cfg.http.backoff_ms);
        cfg.has_http = !cfg.http.base_url.empty();
    }
    return cfg;
}

std::string detect_format(const std::string& input, const std::string& forced) {
    if (!forced.empty()) return forced;
    const auto dot = input.rfind('.');
    std::string ext = dot == std::string::npos ? "" : input.substr(dot + 1);
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == "json") return "json";
    return "csv";
}

IngestResult load_input(const std::string& input, const std::string& format,
                        const IngestConfig& cfg) {
    return format == "json" ? load_json(input, cfg) : load_csv(input, cfg);
}

struct CommonFlags {
    std::string input;
    std::string registry;
    std::string format; // csv | json | "" (by extension)
    std::string date_column;
    std::vector<std::string> dimensions;
};

void add_input_flags(CLI::App* cmd, CommonFlags& flags, bool need_registry = true) {
    cmd->add_option("--input", flags.input, "Input data file (CSV or JSON)")->required();
    auto* reg = cmd->add_option("--registry", flags.registry,
                                "Metric registry JSON (array of metric specs)");
    if (need_registry) reg->required();
    cmd->add_option("--format", flags.format, "Force input format: csv or json");
    cmd->add_option("--date-column", flags.date_column, "Date column name (default: date)");
    cmd->add_option("--dims", flags.dimensions, "Dimension column names")->delimiter(',');
}

IngestConfig ingest_config(const CommonFlags& flags, const FileConfig& file) {
    IngestConfig cfg;
    cfg.date_column = !flags.date_column.empty() ? flags.date_column : file.date_column;
    cfg.dimension_columns = !flags.dimensions.empty() ? flags.dimensions : file.dimensions;
    cfg.registry_path = flags.registry;
    return cfg;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"insight - hybrid rule/LLM business insight engine"};
    app.require_subcommand(1);

    // ---- validate ----
    auto* validate_cmd = app.add_subcommand("validate", "Check a data file against its registry");
    auto validate_flags = std::make_shared<CommonFlags>();
    add_input_flags(validate_cmd, *validate_flags);
    validate_cmd->callback([validate_flags, &out]() {
        IngestConfig cfg;
        cfg.date_column = validate_flags->date_column.empty() ? "date" : validate_flags->date_column;
        cfg.dimension_columns = validate_flags->dimensions;
        cfg.registry_path = validate_flags->registry;
        const std::string format = detect_format(validate_flags->input, validate_flags->format);
        IngestResult result = format == "json" ? parse_json_file(validate_flags->input, cfg)
                                               : parse_csv_file(validate_flags->input, cfg);
        const auto violations = validate_dataset(result.dataset);
        out << violations.size() << " violations\n";
        for (const auto& v : violations) {
            out << "- " << v.rule;
            if (v.row) out << " at row " << *v.row;
            if (!v.column.empty()) out << " (column " << v.column << ")";
            out << ": " << v.message << "\n";
        }
        if (!violations.empty()) throw Error(ErrorKind::data, "dataset has violations");
        out << "dataset OK: " << result.dataset.rows.size() << " rows, "
            << result.summary.missing_count << " missing cells\n";
    });

    // ---- analyze ----
    auto* analyze_cmd = app.add_subcommand("analyze", "Run a pipeline and write the report");
    auto analyze_flags = std::make_shared<CommonFlags>();
    add_input_flags(analyze_cmd, *analyze_flags);
    auto pipeline_name = std::make_shared<std::string>();
    auto config_path = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>(".");
    auto simulate = std::make_shared<bool>(false);
    auto seed = std::make_shared<std::uint64_t>(0);
    auto jobs = std::make_shared<int>(-1);
    auto budget = std::make_shared<std::size_t>(0);
    auto fill = std::make_shared<std::string>();
    auto cap_k = std::make_shared<double>(0.0);
    analyze_cmd->add_option("--pipeline", *pipeline_name,
                            "rule_only | llm_only | llm_chunked | sequential | hybrid")
        ->required();
    analyze_cmd->add_option("--config", *config_path, "JSON config file");
    analyze_cmd->add_option("--out", *out_dir, "Output directory (default: .)");
    analyze_cmd->add_flag("--simulate", *simulate,
                          "Force the deterministic simulated provider (never hits an endpoint)");
    analyze_cmd->add_option("--seed", *seed, "Simulator seed (with --simulate)");
    analyze_cmd->add_option("--jobs", *jobs, "Worker pool size (default: hardware parallelism)");
    analyze_cmd->add_option("--budget", *budget, "Analysis token budget override");
    analyze_cmd->add_option("--fill", *fill, "Missing-value strategy: drop | median | zero");
    analyze_cmd->add_option("--cap-k", *cap_k, "Outlier cap in MAD units (default: 3)");
    analyze_cmd->callback([=, &out, &err]() {
        const FileConfig file = load_file_config(*config_path);
        const PipelineMode mode = pipeline_mode_from_string(*pipeline_name);

        PipelineConfig cfg;
        cfg.mode = mode;
        cfg.detector = file.detector;
        cfg.chunk = file.chunk;
        if (*budget > 0) cfg.chunk.budget_tokens = *budget;
        cfg.anonymize = file.anonymize;
        cfg.precalc = file.precalc;
        cfg.prompt_overrides = file.prompt_overrides;
        cfg.protected_names = file.names;
        cfg.summarize_budget_tokens = file.summarize_budget_tokens;
        cfg.jobs = *jobs >= 0 ? *jobs : file.jobs;
        cfg.vault_salt = *seed;

        if (mode != PipelineMode::rule_only) {
            if (*simulate) {
                SimConfig sim = file.sim;
                if (analyze_cmd->count("--seed") > 0) sim.seed = *seed;
                cfg.llm = LlmHandle::simulated(sim);
            } else {
                auto env = http_config_from_env();
                HttpConfig http = file.has_http ? file.http : HttpConfig{};
                if (env) {
                    // Env overrides file; flags have no HTTP surface by design.
                    http.base_url = env->base_url;
                    if (!env->api_key.empty()) http.api_key = env->api_key;
                    if (!env->model.empty()) http.model = env->model;
                }
                if (http.base_url.empty()) {
                    throw CLI::ValidationError(
                        "--pipeline " + *pipeline_name,
                        "needs an LLM: pass --simulate or configure LLM_API_URL (env) or llm.* "
                        "(config file)");
                }
                cfg.llm = LlmHandle::http(http);
            }
        }

        const IngestConfig in_cfg = ingest_config(*analyze_flags, file);
        const std::string format = detect_format(analyze_flags->input, analyze_flags->format);
        IngestResult loaded = load_input(analyze_flags->input, format, in_cfg);

        const FillStrategy strategy =
            fill_strategy_from_string(!fill->empty() ? *fill : file.fill);
        const double k = *cap_k > 0 ? *cap_k : file.cap_k;
        CleanResult cleaned = clean(loaded.dataset, strategy, k);

        RunResult result = run(cleaned.dataset, cfg);

        fs::create_directories(*out_dir);
        write_text(fs::path(*out_dir) / "report.md", to_markdown(result.report));
        write_json(fs::path(*out_dir) / "insights.json", insights_to_json(result.insights));
        ordered_json run_meta;
        run_meta["mode"] = to_string(cfg.mode);
        run_meta["rows"] = cleaned.dataset.rows.size();
        run_meta["rows_processed"] = result.rows_processed;
        run_meta["facts_sent"] = result.facts_sent;
        run_meta["leak_count"] = result.leak_count;
        run_meta["insights"] = result.insights.size();
        run_meta["generator"] = result.report.generator;
        run_meta["clean"] = ordered_json{{"duplicates_removed", cleaned.report.duplicates_removed},
                                         {"values_imputed", cleaned.report.values_imputed},
                                         {"outliers_capped", cleaned.report.outliers_capped}};
        write_json(fs::path(*out_dir) / "run.json", run_meta);

        for (const auto& [stage, ms] : result.timings_ms) {
            err << "timing " << stage << ": " << ms << " ms\n";
        }
        out << "wrote report.md, insights.json, run.json to " << *out_dir << " ("
            << result.insights.size() << " insights, " << result.rows_processed
            << " rows processed)\n";
    });

    // ---- bench ----
    auto* bench_cmd = app.add_subcommand("bench", "Generate a fixture and benchmark the pipelines");
    auto bench_seed = std::make_shared<std::uint64_t>(42);
    auto bench_days = std::make_shared<int>(730);
    auto bench_modes = std::make_shared<std::vector<std::string>>();
    auto bench_math = std::make_shared<double>(0.0);
    auto bench_halluc = std::make_shared<double>(0.0);
    auto bench_miss = std::make_shared<double>(0.0);
    auto bench_fraction = std::make_shared<double>(1.0);
    auto bench_out = std::make_shared<std::string>(".");
    auto bench_jobs = std::make_shared<int>(0);
    auto bench_simulate = std::make_shared<bool>(false);
    bench_cmd->add_option("--seed", *bench_seed, "Fixture and simulator seed (default: 42)");
    bench_cmd->add_option("--days", *bench_days, "Fixture length in days (default: 730)");
    bench_cmd->add_option("--modes", *bench_modes, "Subset of pipeline modes")->delimiter(',');
    bench_cmd->add_option("--sim-math-error", *bench_math, "Simulator p_math_error");
    bench_cmd->add_option("--sim-hallucination", *bench_halluc, "Simulator p_hallucination");
    bench_cmd->add_option("--sim-miss-rate", *bench_miss, "Simulator miss_rate");
    bench_cmd->add_option("--budget-fraction", *bench_fraction,
                          "Analysis budget as a fraction of the serialized dataset");
    bench_cmd->add_option("--out", *bench_out, "Output directory (default: .)");
    bench_cmd->add_option("--jobs", *bench_jobs, "Worker pool size");
    bench_cmd->add_flag("--simulate", *bench_simulate,
                        "Accepted for symmetry; benchmarks always use the simulator");
    bench_cmd->callback([=, &out]() {
        FixtureSpec spec;
        spec.days = *bench_days;
        const Fixture fixture = generate_fixture(spec, *bench_seed);

        SimConfig sim;
        sim.seed = *bench_seed;
        sim.p_math_error = *bench_math;
        sim.p_hallucination = *bench_halluc;
        sim.miss_rate = *bench_miss;
        sim.validate();

        std::vector<PipelineMode> modes;
        if (bench_modes->empty()) {
            modes = all_pipeline_modes();
        } else {
            for (const auto& name : *bench_modes) modes.push_back(pipeline_mode_from_string(name));
        }

        BenchOptions options;
        options.budget_fraction = *bench_fraction;
        options.jobs = *bench_jobs;
        const BenchReport report = run_bench(fixture, modes, sim, options);

        fs::create_directories(*bench_out);
        write_text(fs::path(*bench_out) / "bench_report.md", bench_to_markdown(report));
        write_json(fs::path(*bench_out) / "bench_report.json", bench_to_json(report));
        out << bench_to_markdown(report);
    });

    // ---- export ----
    auto* export_cmd = app.add_subcommand("export", "Write a dataset back out as canonical CSV");
    auto export_flags = std::make_shared<CommonFlags>();
    add_input_flags(export_cmd, *export_flags);
    auto export_out = std::make_shared<std::string>();
    export_cmd->add_option("--out", *export_out, "Output CSV path")->required();
    export_cmd->callback([=, &out]() {
        const std::string format = detect_format(export_flags->input, export_flags->format);
        IngestConfig cfg;
        cfg.date_column = export_flags->date_column.empty() ? "date" : export_flags->date_column;
        cfg.dimension_columns = export_flags->dimensions;
        cfg.registry_path = export_flags->registry;
        IngestResult loaded = load_input(export_flags->input, format, cfg);
        write_csv(loaded.dataset, fs::path(*export_out));
        out << "wrote " << loaded.dataset.rows.size() << " rows to " << *export_out << "\n";
    });

    // ---- fixture ----
    auto* fixture_cmd = app.add_subcommand("fixture", "Generate a synthetic benchmark fixture");
    auto fixture_seed = std::make_shared<std::uint64_t>(42);
    auto fixture_days = std::make_shared<int>(730);
    auto fixture_out = std::make_shared<std::string>(".");
    auto fixture_spikes = std::make_shared<int>(2);
    auto fixture_shifts = std::make_shared<int>(2);
    auto fixture_highs = std::make_shared<int>(1);
    auto fixture_anomalies = std::make_shared<int>(2);
    fixture_cmd->add_option("--seed", *fixture_seed, "Generator seed (default: 42)");
    fixture_cmd->add_option("--days", *fixture_days, "Length in days (default: 730)");
    fixture_cmd->add_option("--out", *fixture_out, "Output directory (default: .)");
    fixture_cmd->add_option("--spikes", *fixture_spikes, "Planted spikes");
    fixture_cmd->add_option("--shifts", *fixture_shifts, "Planted shifts");
    fixture_cmd->add_option("--highs", *fixture_highs, "Planted all-time highs");
    fixture_cmd->add_option("--dim-anomalies", *fixture_anomalies, "Planted dimension anomalies");
    fixture_cmd->callback([=, &out]() {
        FixtureSpec spec;
        spec.days = *fixture_days;
        spec.spikes = *fixture_spikes;
        spec.shifts = *fixture_shifts;
        spec.highs = *fixture_highs;
        spec.dimension_anomalies = *fixture_anomalies;
        const Fixture fixture = generate_fixture(spec, *fixture_seed);
        fs::create_directories(*fixture_out);
        write_csv(fixture.dataset, fs::path(*fixture_out) / "dataset.csv");
        write_json(fs::path(*fixture_out) / "registry.json",
                   registry_to_json(fixture.dataset.metrics));
        write_json(fs::path(*fixture_out) / "oracle.json", insights_to_json(fixture.oracle));
        write_json(fs::path(*fixture_out) / "names.json", ordered_json(fixture.names));
        out << "fixture: " << fixture.dataset.rows.size() << " rows, " << fixture.oracle.size()
            << " oracle insights, written to " << *fixture_out << "\n";
    });

    // ---- parse and dispatch ----
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        // Config errors raised inside callbacks during parse.
        if (e.kind() == ErrorKind::config) {
            err << "configuration error: " << e.what() << "\n";
            return 2;
        }
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace insight
