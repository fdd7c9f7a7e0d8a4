#include "insight/narrative.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include <nlohmann/json.hpp>

#include "insight/chunk.hpp"
#include "insight/error.hpp"

namespace insight {

std::string format_number(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
    return buf;
}

namespace {

std::string dims_label(const std::map<std::string, std::string>& dims) {
    if (dims.empty()) return "overall";
    std::string out;
    for (const auto& [k, v] : dims) {
        if (!out.empty()) out += ", ";
        out += k + "=" + v;
    }
    return out;
}

Period span_of(const std::vector<AtomicInsight>& insights) {
    Period period{};
    bool first = true;
    for (const auto& insight : insights) {
        if (first || insight.period_start < period.start) period.start = insight.period_start;
        if (first || period.end < insight.period_end) period.end = insight.period_end;
        first = false;
    }
    return period;
}

std::string template_line(const AtomicInsight& f, int decimals) {
    const std::string head = "- " + f.metric + " (" + dims_label(f.dims) + ") " +
                             f.period_start.to_string() + " to " + f.period_end.to_string() + ": ";
    auto num = [decimals](double v) { return format_number(v, decimals); };
    switch (f.kind) {
        case InsightKind::anomalous_shift:
            return head + "anomalous shift to value " + num(f.value) + " baseline " +
                   num(f.baseline) + " score " + num(f.score);
        case InsightKind::dimension_anomaly:
            return head + "dimension anomaly, value " + num(f.value) + " baseline " +
                   num(f.baseline) + " score " + num(f.score);
        case InsightKind::spike:
            return head + "spike to value " + num(f.value) + " baseline " + num(f.baseline) +
                   " score " + num(f.score);
        case InsightKind::all_time_high:
            return head + "all-time high at value " + num(f.value) + " baseline " +
                   num(f.baseline);
        case InsightKind::top_dimension:
            return head + "top dimension with value " + num(f.value) + " share " + num(f.score);
        case InsightKind::dimension_comparison:
            return head + "growth divergence, value " + num(f.value) + " baseline " +
                   num(f.baseline) + " score " + num(f.score);
    }
    return head;
}

std::vector<std::string> insight_keys(const std::vector<AtomicInsight>& insights) {
    std::vector<std::string> keys;
    keys.reserve(insights.size());
    for (const auto& insight : insights) keys.push_back(insight.key());
    return keys;
}

} // namespace

ReportDoc render_template(const std::vector<AtomicInsight>& insights, const LocaleConfig& locale) {
    ReportDoc report;
    report.title = locale.title;
    report.generator = "template";
    report.source_insights = insight_keys(insights);
    report.period = span_of(insights);

    if (insights.empty()) {
        report.sections.push_back(
            {"summary", {"No notable insights in the analyzed period."}});
        return report;
    }

    static const InsightKind kKinds[] = {
        InsightKind::anomalous_shift, InsightKind::dimension_anomaly, InsightKind::spike,
        InsightKind::all_time_high,   InsightKind::top_dimension,     InsightKind::dimension_comparison,
    };
    for (InsightKind kind : kKinds) {
        ReportSection section;
        section.heading = to_string(kind);
        std::vector<AtomicInsight> of_kind;
        for (const auto& insight : insights) {
            if (insight.kind == kind) of_kind.push_back(insight);
        }
        std::stable_sort(of_kind.begin(), of_kind.end(),
                         [](const AtomicInsight& a, const AtomicInsight& b) {
                             return a.period_start < b.period_start;
                         });
        for (const auto& insight : of_kind) {
            section.paragraphs.push_back(template_line(insight, locale.decimals));
        }
        if (!section.paragraphs.empty()) report.sections.push_back(std::move(section));
    }
    return report;
}

ReportDoc report_from_text(const std::string& text, const std::string& generator,
                           const std::vector<AtomicInsight>& sources,
                           const LocaleConfig& locale) {
    ReportDoc report;
    report.title = locale.title;
    report.generator = generator;
    report.source_insights = insight_keys(sources);
    report.period = span_of(sources);

    ReportSection current{"summary", {}};
    std::istringstream in(text);
    std::string line;
    bool fenced = false;
    while (std::getline(in, line)) {
        if (line.rfind("```", 0) == 0) {
            fenced = !fenced;
            continue;
        }
        if (fenced) continue; // machine block, not narrative
        if (line.rfind("## ", 0) == 0) {
            if (!current.paragraphs.empty()) report.sections.push_back(std::move(current));
            current = ReportSection{line.substr(3), {}};
            continue;
        }
        if (!line.empty()) current.paragraphs.push_back(line);
    }
    if (!current.paragraphs.empty()) report.sections.push_back(std::move(current));
    if (report.sections.empty()) {
        report.sections.push_back({"summary", {"The provider returned no narrative."}});
    }
    return report;
}

SummarizeResult summarize(const std::vector<AtomicInsight>& insights, LlmHandle& llm,
                          NameVault& vault, const std::vector<std::string>& protected_names,
                          const SummarizeOptions& options) {
    if (insights.empty()) {
        return SummarizeResult{render_template(insights, options.locale), 0};
    }
    // Encode field by field rather than over the dumped JSON, so names that
    // would be escaped in JSON text still get masked.
    std::vector<AtomicInsight> masked = insights;
    for (auto& fact : masked) {
        std::map<std::string, std::string> dims;
        for (const auto& [k, v] : fact.dims) dims[k] = encode(v, protected_names, vault);
        fact.dims = std::move(dims);
        fact.description = encode(fact.description, protected_names, vault);
    }
    const std::string facts_text = insights_to_json(masked).dump();
    if (estimate_tokens(facts_text) > options.budget_tokens) {
        fail(ErrorKind::budget_exceeded,
             "fact block of " + std::to_string(estimate_tokens(facts_text)) +
                 " tokens exceeds the summarization budget of " +
                 std::to_string(options.budget_tokens) + "; chunk first");
    }
    ordered_json precalc = options.precalc;
    if (precalc.is_array()) {
        for (auto& entry : precalc) {
            if (!entry.contains("slice")) continue;
            for (auto& [k, v] : entry.at("slice").items()) {
                v = encode(v.get<std::string>(), protected_names, vault);
            }
        }
    }
    const LlmRequest request = make_summarize_request(facts_text, options.facts_precalculated,
                                                      precalc, options.style_notes);
    const LlmResponse response = llm.complete(request);
    const DecodeResult decoded = decode(response.text, vault);

    SummarizeResult result;
    result.report = report_from_text(decoded.text, "llm_summarized", insights, options.locale);
    result.leak_count = decoded.leak_count;
    return result;
}

// ---------------------------------------------------------------------------
// Fidelity

namespace {

struct Claim {
    std::string marker; // value | baseline | change | share | score
    double number = 0.0;
};

bool parse_claim_number(const std::string& token, double& out) {
    if (token.empty()) return false;
    std::string t = token;
    while (!t.empty() && (t.back() == '%' || t.back() == '.' || t.back() == ',')) t.pop_back();
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size();
}

std::vector<std::string> split_words(const std::string& line) {
    std::vector<std::string> words;
    std::istringstream in(line);
    std::string word;
    while (in >> word) words.push_back(word);
    return words;
}

std::vector<Claim> extract_claims(const std::string& line) {
    static const char* kMarkers[] = {"value", "baseline", "change", "share", "score"};
    std::vector<Claim> claims;
    const auto words = split_words(line);
    for (std::size_t i = 0; i + 1 < words.size(); ++i) {
        for (const char* marker : kMarkers) {
            if (words[i] == marker) {
                double number = 0.0;
                if (parse_claim_number(words[i + 1], number)) {
                    claims.push_back({marker, number});
                }
                break;
            }
        }
    }
    return claims;
}

/// "- metric (dims) start to end: ..." -> (metric, dims label, start date)
struct LineContext {
    std::string metric;
    std::string dims;
    std::optional<Date> start;
};

std::optional<LineContext> parse_line_context(const std::string& line) {
    std::string body = line;
    if (body.rfind("- ", 0) == 0) body = body.substr(2);
    const auto open = body.find(" (");
    if (open == std::string::npos) return std::nullopt;
    const auto close = body.find(") ", open);
    if (close == std::string::npos) return std::nullopt;
    LineContext ctx;
    ctx.metric = body.substr(0, open);
    ctx.dims = body.substr(open + 2, close - open - 2);
    const std::string rest = body.substr(close + 2);
    if (rest.size() >= 10) ctx.start = Date::try_parse(rest.substr(0, 10));
    return ctx;
}

bool claim_correct(double claim, double target) {
    const double tolerance = std::max(0.005 * std::fabs(target), 0.005);
    return std::fabs(claim - target) <= tolerance;
}

std::optional<double> claim_target(const Claim& claim, const AtomicInsight& insight) {
    if (claim.marker == "value") return insight.value;
    if (claim.marker == "baseline") return insight.baseline;
    if (claim.marker == "share" || claim.marker == "score") return insight.score;
    if (claim.marker == "change") {
        if (insight.baseline == 0.0) return std::nullopt;
        return 100.0 * (insight.value - insight.baseline) / std::fabs(insight.baseline);
    }
    return std::nullopt;
}

} // namespace

FidelityReport check_fidelity(const ReportDoc& report, const std::vector<AtomicInsight>& sources) {
    FidelityReport fidelity;
    for (const auto& section : report.sections) {
        const auto section_kind = insight_kind_from_string(section.heading);
        for (const auto& line : section.paragraphs) {
            const auto claims = extract_claims(line);
            if (claims.empty()) continue;
            const auto ctx = parse_line_context(line);

            // Candidate sources: same kind (when the section names one),
            // same metric and dims rendering, preferring an exact
            // period-start match.
            std::vector<const AtomicInsight*> candidates;
            for (const auto& source : sources) {
                if (section_kind && source.kind != *section_kind) continue;
                if (ctx) {
                    if (source.metric != ctx->metric) continue;
                    if (dims_label(source.dims) != ctx->dims) continue;
                }
                candidates.push_back(&source);
            }
            if (ctx && ctx->start) {
                std::vector<const AtomicInsight*> exact;
                for (const auto* c : candidates) {
                    if (c->period_start == *ctx->start) exact.push_back(c);
                }
                if (!exact.empty()) candidates = std::move(exact);
            }

            for (const auto& claim : claims) {
                ++fidelity.claims_checked;
                bool correct = false;
                for (const auto* candidate : candidates) {
                    const auto target = claim_target(claim, *candidate);
                    if (target && claim_correct(claim.number, *target)) {
                        correct = true;
                        break;
                    }
                }
                if (correct) ++fidelity.claims_correct;
            }
        }
    }
    if (fidelity.claims_checked > 0) {
        fidelity.precision = static_cast<double>(fidelity.claims_correct) /
                             static_cast<double>(fidelity.claims_checked);
    }
    return fidelity;
}

// ---------------------------------------------------------------------------

std::string to_markdown(const ReportDoc& report) {
    std::string out = "# " + report.title + "\n\n";
    out += "Period: " + report.period.start.to_string() + " to " + report.period.end.to_string() +
           "\n\n";
    for (const auto& section : report.sections) {
        out += "## " + section.heading + "\n\n";
        for (const auto& line : section.paragraphs) {
            out += line + "\n";
        }
        out += "\n";
    }
    out += "_Generator: " + report.generator + "; insights referenced: " +
           std::to_string(report.source_insights.size()) + "._\n";
    return out;
}

ordered_json report_to_json(const ReportDoc& report) {
    ordered_json j;
    j["title"] = report.title;
    j["period_start"] = report.period.start.to_string();
    j["period_end"] = report.period.end.to_string();
    j["generator"] = report.generator;
    ordered_json sections = ordered_json::array();
    for (const auto& section : report.sections) {
        sections.push_back(
            ordered_json{{"heading", section.heading}, {"paragraphs", section.paragraphs}});
    }
    j["sections"] = std::move(sections);
    j["source_insights"] = report.source_insights;
    j["feedback"] = ordered_json{{"likes", report.likes}, {"dislikes", report.dislikes}};
    return j;
}

} // namespace insight
