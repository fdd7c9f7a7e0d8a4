#include "insight/error.hpp"

namespace insight {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::io: return "io";
        case ErrorKind::schema: return "schema";
        case ErrorKind::parse: return "parse";
        case ErrorKind::data: return "data";
        case ErrorKind::empty_metric: return "empty_metric";
        case ErrorKind::empty_period: return "empty_period";
        case ErrorKind::plan_invalid: return "plan_invalid";
        case ErrorKind::plan_rejected: return "plan_rejected";
        case ErrorKind::bad_step: return "bad_step";
        case ErrorKind::token_collision: return "token_collision";
        case ErrorKind::row_too_large: return "row_too_large";
        case ErrorKind::auth: return "auth";
        case ErrorKind::rate_limited: return "rate_limited";
        case ErrorKind::transport: return "transport";
        case ErrorKind::malformed_response: return "malformed_response";
        case ErrorKind::bad_facts: return "bad_facts";
        case ErrorKind::budget_exceeded: return "budget_exceeded";
        case ErrorKind::unplantable: return "unplantable";
        case ErrorKind::config: return "config";
        case ErrorKind::invalid_argument: return "invalid_argument";
    }
    return "unknown";
}

namespace {

std::string compose(ErrorKind kind, const std::string& message, const std::string& stage) {
    std::string out = "[";
    out += to_string(kind);
    out += "]";
    if (!stage.empty()) {
        out += " (";
        out += stage;
        out += ")";
    }
    out += " ";
    out += message;
    return out;
}

} // namespace

Error::Error(ErrorKind kind, const std::string& message, std::string stage)
    : std::runtime_error(compose(kind, message, stage)), kind_(kind), stage_(std::move(stage)) {}

void fail(ErrorKind kind, const std::string& message, std::string stage) {
    throw Error(kind, message, std::move(stage));
}

} // namespace insight
