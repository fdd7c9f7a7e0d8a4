#include "insight/llm.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "insight/error.hpp"
#include "insight/preprocess.hpp"

namespace insight {

namespace {

// ---------------------------------------------------------------------------
// Deterministic, platform-independent randomness (splitmix64). The simulated
// provider seeds one stream per request from (config seed, request hash), so
// identical requests always see identical draws regardless of concurrency.

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

    bool bernoulli(double p) { return next_double() < p; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }
};

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t request_seed(const SimConfig& cfg, const LlmRequest& request) {
    std::uint64_t h = fnv1a64(request.system_text);
    h = h * 1099511628211ull ^ fnv1a64(request.user_text);
    return cfg.seed ^ h;
}

std::string fmt2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string fmt2_signed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%+.2f", v);
    return buf;
}

std::string dims_label(const std::map<std::string, std::string>& dims) {
    if (dims.empty()) return "overall";
    std::string out;
    for (const auto& [k, v] : dims) {
        if (!out.empty()) out += ", ";
        out += k + "=" + v;
    }
    return out;
}

/// Relative perturbation, never a no-op: the injected error is uniform in
/// +/- scale with the zero draw nudged away, and zero values take the raw
/// draw as an absolute error.
double perturb(Rng& rng, double value, double scale) {
    double u = rng.uniform(-scale, scale);
    if (u == 0.0) u = scale / 2.0;
    if (value == 0.0) return u;
    return value * (1.0 + u);
}

double maybe_perturb(Rng& rng, const SimConfig& cfg, double value) {
    // Draw the gate first so the stream layout is stable.
    const bool hit = rng.bernoulli(cfg.p_math_error);
    if (!hit) return value;
    return perturb(rng, value, cfg.math_error_scale);
}

/// Narrative line for one fact. Analysis responses state value and baseline
/// (or share); summaries additionally state the derived percent change.
std::string fact_line(const AtomicInsight& f, std::optional<double> change) {
    std::string line = "- " + f.metric + " (" + dims_label(f.dims) + ") " +
                       f.period_start.to_string() + " to " + f.period_end.to_string() + ": ";
    if (f.kind == InsightKind::top_dimension) {
        line += "value " + fmt2(f.value) + " share " + fmt2(f.score);
    } else {
        line += "value " + fmt2(f.value) + " baseline " + fmt2(f.baseline);
    }
    if (change) line += " change " + fmt2_signed(*change) + "%";
    return line;
}

/// Group facts into `## kind` sections in enum order, preserving the input
/// order within each section.
std::string render_sections(const std::vector<std::pair<AtomicInsight, std::optional<double>>>& facts) {
    static const InsightKind kKinds[] = {
        InsightKind::anomalous_shift, InsightKind::dimension_anomaly, InsightKind::spike,
        InsightKind::all_time_high,   InsightKind::top_dimension,     InsightKind::dimension_comparison,
    };
    std::string out;
    for (InsightKind kind : kKinds) {
        std::string section;
        for (const auto& [fact, change] : facts) {
            if (fact.kind != kind) continue;
            section += fact_line(fact, change) + "\n";
        }
        if (!section.empty()) {
            out += std::string("## ") + to_string(kind) + "\n" + section + "\n";
        }
    }
    if (out.empty()) out = "No notable findings in the provided data.\n";
    return out;
}

std::string fabricated_token(Rng& rng) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "ENT_%08x",
                  static_cast<unsigned>(rng.next_u64() & 0xffffffffu));
    return buf;
}

/// Anonymized prompts (entity tokens, no raw proper names) fabricate at a
/// quarter of the configured rate: without real names to manipulate, the
/// model only invents entities spontaneously. The factor reproduces the
/// observed 12% -> 3% reduction for hash-protected pipelines.
void maybe_fabricate(Rng& rng, const SimConfig& cfg, bool prompt_anonymized, std::string& text) {
    const double p = prompt_anonymized ? cfg.p_hallucination / 4.0 : cfg.p_hallucination;
    if (!rng.bernoulli(p)) return;
    text += "\nAlso notable: " + fabricated_token(rng) + " showed unusual movement in the period.\n";
}

/// Shared summarize core: restate facts, drop with miss_rate, perturb
/// model-computed numbers. `precalculated` facts are quoted exactly; the
/// derived change percentage is always a computation and thus perturbable.
std::string render_summary(const SimConfig& cfg, const std::vector<AtomicInsight>& facts,
                           bool precalculated, Rng& rng) {
    std::vector<std::pair<AtomicInsight, std::optional<double>>> lines;
    for (const auto& fact : facts) {
        if (rng.bernoulli(cfg.miss_rate)) continue;
        AtomicInsight f = fact;
        if (!precalculated) {
            f.value = maybe_perturb(rng, cfg, f.value);
            f.baseline = maybe_perturb(rng, cfg, f.baseline);
            f.score = maybe_perturb(rng, cfg, f.score);
        }
        std::optional<double> change;
        if (fact.kind != InsightKind::top_dimension && fact.baseline != 0.0) {
            const double true_change =
                100.0 * (fact.value - fact.baseline) / std::fabs(fact.baseline);
            change = maybe_perturb(rng, cfg, true_change);
        }
        lines.emplace_back(std::move(f), change);
    }
    return "Summary of the reported business facts.\n\n" + render_sections(lines);
}

Dataset dataset_from_envelope(const ordered_json& envelope) {
    Dataset d;
    if (envelope.contains("dimensions")) {
        d.dimensions = envelope.at("dimensions").get<std::vector<std::string>>();
    }
    if (envelope.contains("registry")) {
        d.metrics = registry_from_json(envelope.at("registry"));
    }
    const auto metric_names = d.metrics.additive_names();
    for (const auto& item : envelope.value("rows", ordered_json::array())) {
        Record row;
        row.date = Date::parse(item.value("date", std::string{}));
        for (const auto& dim : d.dimensions) {
            if (item.contains(dim) && item.at(dim).is_string()) {
                row.dims[dim] = item.at(dim).get<std::string>();
            }
        }
        for (const auto& name : metric_names) {
            std::optional<double> value;
            if (item.contains(name) && item.at(name).is_number()) {
                value = item.at(name).get<double>();
            }
            row.values[name] = value;
        }
        d.rows.push_back(std::move(row));
    }
    sort_canonical(d);
    return d;
}

// ---------------------------------------------------------------------------
// Providers

class SimProvider final : public Provider {
public:
    explicit SimProvider(SimConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    std::string name() const override { return "simulated"; }

    LlmResponse complete(const LlmRequest& request) override {
        if (request.user_text.empty()) {
            fail(ErrorKind::invalid_argument, "request user_text is empty");
        }
        Rng rng(request_seed(cfg_, request));
        const bool anonymized = request.user_text.find("ENT_") != std::string::npos;

        std::string text;
        ordered_json envelope;
        bool have_envelope = false;
        try {
            envelope = ordered_json::parse(request.user_text);
            have_envelope = envelope.is_object() && envelope.contains("task");
        } catch (const ordered_json::exception&) {
            have_envelope = false;
        }

        if (!have_envelope) {
            text = "I can analyze structured business data; the request did not carry a "
                   "recognizable task envelope.\n";
        } else {
            const std::string task = envelope.at("task").get<std::string>();
            if (task == "analyze_rows") {
                text = analyze_rows(envelope, rng);
            } else if (task == "summarize_facts") {
                text = summarize_facts(envelope, rng);
            } else if (task == "infer_plan") {
                text = infer_plan(envelope);
            } else {
                text = "Unknown task '" + task + "'.\n";
            }
        }

        maybe_fabricate(rng, cfg_, anonymized, text);

        LlmResponse response;
        response.text = std::move(text);
        response.usage.prompt_tokens = static_cast<int>((request.user_text.size() + 3) / 4);
        response.usage.completion_tokens = static_cast<int>((response.text.size() + 3) / 4);
        return response;
    }

    const SimConfig& config() const { return cfg_; }

private:
    std::string analyze_rows(const ordered_json& envelope, Rng& rng) const {
        Dataset d;
        DetectorConfig detector;
        std::vector<AtomicInsight> found;
        try {
            d = dataset_from_envelope(envelope);
            if (envelope.contains("detector")) {
                detector = detector_from_json(envelope.at("detector"));
            }
            found = detect_all(d, detector);
        } catch (const Error& e) {
            return std::string("The provided rows could not be analyzed: ") + e.what() + "\n";
        }

        // A slice-scoped prompt yields slice-scoped findings: stamp the
        // context dims and reclassify whole-series shifts accordingly.
        DimFilter context;
        if (envelope.contains("dims_context")) {
            for (const auto& [k, v] : envelope.at("dims_context").items()) {
                context[k] = v.get<std::string>();
            }
        }
        if (!context.empty()) {
            for (auto& insight : found) {
                for (const auto& [k, v] : context) insight.dims.emplace(k, v);
                if (insight.kind == InsightKind::anomalous_shift) {
                    insight.kind = InsightKind::dimension_anomaly;
                }
            }
            sort_insights(found);
        }

        std::vector<std::pair<AtomicInsight, std::optional<double>>> lines;
        std::vector<AtomicInsight> claimed;
        for (const auto& insight : found) {
            if (rng.bernoulli(cfg_.miss_rate)) continue;
            AtomicInsight f = insight;
            f.value = maybe_perturb(rng, cfg_, f.value);
            f.baseline = maybe_perturb(rng, cfg_, f.baseline);
            f.score = maybe_perturb(rng, cfg_, f.score);
            claimed.push_back(f);
            lines.emplace_back(std::move(f), std::nullopt);
        }

        std::string text = "Analysis of the provided rows.\n\n" + render_sections(lines);
        text += "\n```json\n" + insights_to_json(claimed).dump(2) + "\n```\n";
        return text;
    }

    std::string summarize_facts(const ordered_json& envelope, Rng& rng) const {
        std::vector<AtomicInsight> facts;
        try {
            const std::string facts_text = envelope.value("facts_json", std::string{});
            facts = insights_from_json(ordered_json::parse(facts_text));
        } catch (const std::exception& e) {
            return std::string("The fact block could not be read: ") + e.what() + "\n";
        }
        const bool precalculated = envelope.value("precalculated", false);
        return render_summary(cfg_, facts, precalculated, rng);
    }

    /// Deterministic plan inference by diffing the two samples: detect the
    /// dedup / fill_missing / drop_column / scale steps that reproduce the
    /// output, verify with apply_plan, and emit the plan as JSON.
    std::string infer_plan(const ordered_json& envelope) const {
        Dataset input;
        Dataset output;
        try {
            input = dataset_from_envelope(envelope.value("input", ordered_json::object()));
            output = dataset_from_envelope(envelope.value("expected_output", ordered_json::object()));
        } catch (const Error& e) {
            return std::string("The samples could not be read: ") + e.what() + "\n";
        }

        for (const auto& plan : candidate_plans(input, output)) {
            try {
                if (apply_plan(input, plan) == output) {
                    return "Proposed preprocessing plan:\n\n```json\n" +
                           plan_to_json(plan).dump(2) + "\n```\n";
                }
            } catch (const Error&) {
                // A candidate referencing a dropped column; try the next one.
            }
        }
        return "No combination of known preprocessing steps reproduces the output sample.\n";
    }

    static std::vector<TransformPlan> candidate_plans(const Dataset& input, const Dataset& output) {
        std::vector<TransformStep> base;

        auto has_duplicates = [](const Dataset& d) {
            std::set<std::pair<std::string, std::vector<std::string>>> seen;
            for (const auto& row : d.rows) {
                if (!seen.insert({row.date.to_string(), d.dim_key(row)}).second) return true;
            }
            return false;
        };
        if (has_duplicates(input) && !has_duplicates(output)) base.push_back(DedupStep{});

        for (const auto& spec : input.metrics.specs) {
            if (!output.metrics.contains(spec.name)) {
                // Ratio metrics disappear with their components; only emit a
                // drop for columns the output really lost on purpose.
                if (spec.kind == MetricKind::additive ||
                    (output.metrics.contains(spec.numerator) &&
                     output.metrics.contains(spec.denominator))) {
                    base.push_back(DropColumnStep{spec.name});
                }
            }
        }

        auto has_missing = [](const Dataset& d) {
            for (const auto& row : d.rows) {
                for (const auto& [_, value] : row.values) {
                    if (!value) return true;
                }
            }
            return false;
        };

        std::vector<std::vector<TransformStep>> fill_options;
        if (has_missing(input) && !has_missing(output)) {
            fill_options.push_back({FillMissingStep{"median"}});
            fill_options.push_back({FillMissingStep{"zero"}});
            fill_options.push_back({FillMissingStep{"drop"}});
        } else {
            fill_options.push_back({});
        }

        std::vector<TransformPlan> candidates;
        for (const auto& fill : fill_options) {
            TransformPlan plan;
            for (const auto& step : base) {
                if (std::holds_alternative<DedupStep>(step)) plan.steps.push_back(step);
            }
            plan.steps.insert(plan.steps.end(), fill.begin(), fill.end());
            for (const auto& step : base) {
                if (!std::holds_alternative<DedupStep>(step)) plan.steps.push_back(step);
            }
            // Scale detection against the plan so far.
            TransformPlan with_scales = plan;
            try {
                Dataset staged = apply_plan(input, plan);
                if (staged.rows.size() == output.rows.size()) {
                    for (const auto& name : staged.metrics.additive_names()) {
                        if (!output.metrics.contains(name)) continue;
                        double factor = 0.0;
                        bool have_factor = false;
                        bool consistent = true;
                        for (std::size_t i = 0; i < staged.rows.size(); ++i) {
                            auto in_it = staged.rows[i].values.find(name);
                            auto out_it = output.rows[i].values.find(name);
                            if (in_it == staged.rows[i].values.end() ||
                                out_it == output.rows[i].values.end() || !in_it->second ||
                                !out_it->second) {
                                continue;
                            }
                            const double a = *in_it->second;
                            const double b = *out_it->second;
                            if (a == 0.0) {
                                if (b != 0.0) consistent = false;
                                continue;
                            }
                            const double f = b / a;
                            if (!have_factor) {
                                factor = f;
                                have_factor = true;
                            } else if (f != factor) {
                                consistent = false;
                            }
                            if (!consistent) break;
                        }
                        if (have_factor && consistent && factor != 1.0) {
                            with_scales.steps.push_back(ScaleStep{name, factor});
                        }
                    }
                }
            } catch (const Error&) {
                // Staging failed (e.g. median on an all-missing column); the
                // bare plan is still offered below.
            }
            if (with_scales.steps.size() != plan.steps.size()) candidates.push_back(with_scales);
            candidates.push_back(plan);
        }
        return candidates;
    }

    SimConfig cfg_;
};

class ScriptedProvider final : public Provider {
public:
    explicit ScriptedProvider(std::vector<std::string> responses)
        : responses_(std::move(responses)) {}

    std::string name() const override { return "scripted"; }

    LlmResponse complete(const LlmRequest&) override {
        std::lock_guard<std::mutex> lock(mutex_);
        LlmResponse response;
        if (responses_.empty()) {
            response.text = "";
            return response;
        }
        const std::size_t i = std::min(next_, responses_.size() - 1);
        ++next_;
        response.text = responses_[i];
        return response;
    }

private:
    std::vector<std::string> responses_;
    std::size_t next_ = 0;
    std::mutex mutex_;
};

class HttpProvider final : public Provider {
public:
    explicit HttpProvider(HttpConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.base_url.empty()) fail(ErrorKind::config, "http provider needs a base URL");
    }

    std::string name() const override { return "http"; }

    /// One logical request maps to at most max_retries wire attempts, all
    /// with identical bodies; only transient failures (connect errors, 429,
    /// 5xx) are retried, with exponential backoff.
    LlmResponse complete(const LlmRequest& request) override {
        ordered_json body;
        body["model"] = cfg_.model;
        ordered_json messages = ordered_json::array();
        if (!request.system_text.empty()) {
            messages.push_back({{"role", "system"}, {"content", request.system_text}});
        }
        messages.push_back({{"role", "user"}, {"content", request.user_text}});
        body["messages"] = std::move(messages);
        body["max_tokens"] = request.max_tokens;
        const std::string payload = body.dump();

        httplib::Headers headers;
        if (!cfg_.api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + cfg_.api_key);
        }

        std::string last_failure = "no attempts made";
        for (int attempt = 0; attempt < std::max(1, cfg_.max_retries); ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(cfg_.backoff_ms << (attempt - 1)));
            }
            httplib::Client client(cfg_.base_url);
            client.set_connection_timeout(cfg_.timeout_seconds);
            client.set_read_timeout(cfg_.timeout_seconds);
            auto result = client.Post(cfg_.path, headers, payload, "application/json");
            if (!result) {
                last_failure = "connection failed: " + httplib::to_string(result.error());
                continue;
            }
            const int status = result->status;
            if (status == 401 || status == 403) {
                fail(ErrorKind::auth, "endpoint rejected credentials (HTTP " +
                                          std::to_string(status) + ")");
            }
            if (status == 429) {
                last_failure = "rate limited (HTTP 429)";
                continue;
            }
            if (status >= 500) {
                last_failure = "server error (HTTP " + std::to_string(status) + ")";
                continue;
            }
            if (status != 200) {
                fail(ErrorKind::transport,
                     "unexpected HTTP " + std::to_string(status) + ": " + result->body);
            }
            return parse_completion(result->body);
        }
        if (last_failure.find("429") != std::string::npos) {
            fail(ErrorKind::rate_limited, last_failure + " after " +
                                              std::to_string(cfg_.max_retries) + " attempts");
        }
        fail(ErrorKind::transport,
             last_failure + " after " + std::to_string(cfg_.max_retries) + " attempts");
    }

private:
    static LlmResponse parse_completion(const std::string& body) {
        ordered_json j;
        try {
            j = ordered_json::parse(body);
        } catch (const ordered_json::exception& e) {
            fail(ErrorKind::malformed_response, std::string("response is not JSON: ") + e.what());
        }
        if (!j.contains("choices") || !j.at("choices").is_array() || j.at("choices").empty()) {
            fail(ErrorKind::malformed_response, "response carries no choices");
        }
        const auto& choice = j.at("choices").at(0);
        if (!choice.contains("message") || !choice.at("message").contains("content") ||
            !choice.at("message").at("content").is_string()) {
            fail(ErrorKind::malformed_response, "response carries no message content");
        }
        LlmResponse response;
        response.text = choice.at("message").at("content").get<std::string>();
        response.finish_reason = choice.value("finish_reason", std::string("stop"));
        if (j.contains("usage") && j.at("usage").is_object()) {
            response.usage.prompt_tokens = j.at("usage").value("prompt_tokens", 0);
            response.usage.completion_tokens = j.at("usage").value("completion_tokens", 0);
        }
        return response;
    }

    HttpConfig cfg_;
};

} // namespace

void SimConfig::validate() const {
    auto check01 = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) {
            fail(ErrorKind::config, std::string(name) + " must lie in [0,1]");
        }
    };
    check01(p_math_error, "p_math_error");
    check01(p_hallucination, "p_hallucination");
    check01(miss_rate, "miss_rate");
    if (math_error_scale <= 0) fail(ErrorKind::config, "math_error_scale must be > 0");
}

std::string simulate_analysis(const SimConfig& cfg, const std::string& facts_json) {
    cfg.validate();
    std::vector<AtomicInsight> facts;
    try {
        facts = insights_from_json(ordered_json::parse(facts_json));
    } catch (const std::exception& e) {
        fail(ErrorKind::bad_facts,
             std::string("facts do not parse as the insight interchange JSON: ") + e.what());
    }
    Rng rng(cfg.seed ^ fnv1a64(facts_json));
    std::string text = render_summary(cfg, facts, /*precalculated=*/false, rng);
    maybe_fabricate(rng, cfg, /*prompt_anonymized=*/facts_json.find("ENT_") != std::string::npos,
                    text);
    return text;
}

// ---------------------------------------------------------------------------
// Handle

LlmHandle::LlmHandle(ProviderKind kind, std::shared_ptr<Provider> provider)
    : kind_(kind), provider_(std::move(provider)),
      calls_(std::make_shared<std::atomic<std::size_t>>(0)) {}

LlmHandle LlmHandle::http(HttpConfig cfg) {
    return LlmHandle(ProviderKind::http, std::make_shared<HttpProvider>(std::move(cfg)));
}

LlmHandle LlmHandle::simulated(SimConfig cfg) {
    return LlmHandle(ProviderKind::simulated, std::make_shared<SimProvider>(cfg));
}

LlmHandle LlmHandle::scripted(std::vector<std::string> responses) {
    return LlmHandle(ProviderKind::scripted,
                     std::make_shared<ScriptedProvider>(std::move(responses)));
}

LlmResponse LlmHandle::complete(const LlmRequest& request) {
    if (request.user_text.empty()) {
        fail(ErrorKind::invalid_argument, "request user_text is empty");
    }
    calls_->fetch_add(1);
    return provider_->complete(request);
}

std::string LlmHandle::provider_name() const { return provider_->name(); }

std::size_t LlmHandle::call_count() const { return calls_->load(); }

LlmResponse complete(LlmHandle& handle, const LlmRequest& request) {
    return handle.complete(request);
}

// ---------------------------------------------------------------------------
// Prompt envelopes

LlmRequest make_analyze_rows_request(const Dataset& d, const std::vector<std::size_t>& rows,
                                     const DetectorConfig& detector, const DimFilter& dims_context,
                                     const std::string& expert_note) {
    ordered_json envelope;
    envelope["task"] = "analyze_rows";
    envelope["instruction"] =
        "Identify anomalous shifts, dimension anomalies, spikes, all-time highs, top dimensions "
        "and dimension comparisons in the rows. State value and baseline for every finding and "
        "return the findings as a JSON array inside a ```json fence.";
    if (!expert_note.empty()) envelope["expert_note"] = expert_note;
    if (!dims_context.empty()) envelope["dims_context"] = dims_context;
    envelope["dimensions"] = d.dimensions;
    envelope["registry"] = registry_to_json(d.metrics);
    envelope["detector"] = detector_to_json(detector);
    envelope["rows"] = rows_to_json(d, rows);

    LlmRequest request;
    request.system_text = "You are a meticulous business data analyst.";
    request.user_text = envelope.dump();
    return request;
}

LlmRequest make_summarize_request(const std::string& facts_json_text, bool facts_precalculated,
                                  const ordered_json& precalc, const ordered_json& style_notes) {
    ordered_json envelope;
    envelope["task"] = "summarize_facts";
    envelope["instruction"] =
        "Write a narrative report restating each fact with its value, baseline and percent "
        "change. Do not invent entities or figures.";
    envelope["precalculated"] = facts_precalculated;
    if (precalc.is_array() && !precalc.empty()) envelope["precalc"] = precalc;
    if (style_notes.is_object() && !style_notes.empty()) envelope["style_notes"] = style_notes;
    envelope["facts_json"] = facts_json_text;

    LlmRequest request;
    request.system_text = "You are a business analyst writing for non-technical readers.";
    request.user_text = envelope.dump();
    return request;
}

LlmRequest make_infer_plan_request(const Dataset& input, const Dataset& output,
                                   const std::string& feedback, int attempt) {
    auto sample = [](const Dataset& d) {
        ordered_json j;
        j["dimensions"] = d.dimensions;
        j["registry"] = registry_to_json(d.metrics);
        j["rows"] = rows_to_json(d);
        return j;
    };
    ordered_json envelope;
    envelope["task"] = "infer_plan";
    envelope["instruction"] =
        "Given the input and expected output samples, return the preprocessing plan as a JSON "
        "array of {op, args} steps inside a ```json fence. Known ops: dedup, "
        "fill_missing(strategy), cap_outliers(k), rename(map), scale(metric, factor), "
        "drop_column(name).";
    envelope["attempt"] = attempt;
    if (!feedback.empty()) envelope["feedback"] = feedback;
    envelope["input"] = sample(input);
    envelope["expected_output"] = sample(output);

    LlmRequest request;
    request.system_text = "You are a data preprocessing assistant.";
    request.user_text = envelope.dump();
    return request;
}

std::optional<ordered_json> extract_json_block(const std::string& response_text) {
    const std::string fence = "```json";
    auto start = response_text.find(fence);
    if (start != std::string::npos) {
        start += fence.size();
        if (start < response_text.size() && response_text[start] == '\n') ++start;
        const auto end = response_text.find("```", start);
        if (end != std::string::npos) {
            try {
                return ordered_json::parse(response_text.substr(start, end - start));
            } catch (const ordered_json::exception&) {
                return std::nullopt;
            }
        }
        return std::nullopt;
    }
    try {
        return ordered_json::parse(response_text);
    } catch (const ordered_json::exception&) {
        return std::nullopt;
    }
}

std::optional<HttpConfig> http_config_from_env() {
    const char* url = std::getenv("LLM_API_URL");
    if (url == nullptr || *url == '\0') return std::nullopt;
    HttpConfig cfg;
    cfg.base_url = url;
    if (const char* key = std::getenv("LLM_API_KEY")) cfg.api_key = key;
    if (const char* model = std::getenv("LLM_MODEL")) cfg.model = model;
    return cfg;
}

} // namespace insight
