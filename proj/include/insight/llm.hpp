#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "insight/datamodel.hpp"
#include "insight/detectors.hpp"

namespace insight {

struct LlmRequest {
    std::string system_text;
    std::string user_text;
    int max_tokens = 4096;
};

struct LlmUsage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct LlmResponse {
    std::string text;
    std::string finish_reason = "stop";
    LlmUsage usage;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual LlmResponse complete(const LlmRequest& request) = 0;
    virtual std::string name() const = 0;
};

/// Deterministic simulated-model knobs. The same config and request always
/// produce a byte-identical response (per-request PRNG seeded from the config
/// seed and a request hash, so concurrency cannot change results).
struct SimConfig {
    std::uint64_t seed = 0;
    double p_math_error = 0.0;      // probability a model-computed number is wrong
    double math_error_scale = 0.2;  // relative magnitude of injected errors
    double p_hallucination = 0.0;   // probability per response of a fabricated entity
    double miss_rate = 0.0;         // probability a presented fact is dropped

    void validate() const; // throws Error{config}
};

struct HttpConfig {
    std::string base_url;  // e.g. https://api.example.com
    std::string path = "/v1/chat/completions";
    std::string api_key;
    std::string model;
    int timeout_seconds = 30;
    int max_retries = 3;
    int backoff_ms = 250;
};

enum class ProviderKind { http, simulated, scripted };

/// Uniform text-generation handle. Exactly one provider is active.
class LlmHandle {
public:
    static LlmHandle http(HttpConfig cfg);
    static LlmHandle simulated(SimConfig cfg);
    /// Canned responses, returned in call order (tests and replays). Repeats
    /// the last response once exhausted.
    static LlmHandle scripted(std::vector<std::string> responses);

    LlmResponse complete(const LlmRequest& request);
    ProviderKind kind() const { return kind_; }
    std::string provider_name() const;
    /// Calls made through this handle (all provider kinds).
    std::size_t call_count() const;

private:
    LlmHandle(ProviderKind kind, std::shared_ptr<Provider> provider);
    ProviderKind kind_;
    std::shared_ptr<Provider> provider_;
    std::shared_ptr<std::atomic<std::size_t>> calls_;
};

LlmResponse complete(LlmHandle& handle, const LlmRequest& request);

/// Narrative restating a structured fact block (the insight interchange
/// JSON), with the configured error injection applied. The core of the
/// simulated provider's summarize path, exposed for direct use and tests.
/// Facts marked precalculated are restated exactly; the derived per-fact
/// change percentage is always model-computed and therefore perturbable.
std::string simulate_analysis(const SimConfig& cfg, const std::string& facts_json);

// ---------------------------------------------------------------------------
// Prompt envelopes. Requests carry a JSON envelope in user_text; the
// simulated provider parses it, an HTTP provider simply transmits it.

LlmRequest make_analyze_rows_request(const Dataset& d, const std::vector<std::size_t>& rows,
                                     const DetectorConfig& detector, const DimFilter& dims_context,
                                     const std::string& expert_note);

LlmRequest make_summarize_request(const std::string& facts_json_text, bool facts_precalculated,
                                  const ordered_json& precalc, const ordered_json& style_notes);

LlmRequest make_infer_plan_request(const Dataset& input, const Dataset& output,
                                   const std::string& feedback, int attempt);

/// First ```json fenced block of a response, or the whole text if it parses.
std::optional<ordered_json> extract_json_block(const std::string& response_text);

/// Reads LLM_API_URL / LLM_API_KEY / LLM_MODEL; nullopt if the URL is unset.
std::optional<HttpConfig> http_config_from_env();

} // namespace insight
