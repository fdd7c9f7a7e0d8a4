#pragma once

#include <stdexcept>
#include <string>

namespace insight {

enum class ErrorKind {
    io,
    schema,
    parse,
    data,
    empty_metric,
    empty_period,
    plan_invalid,
    plan_rejected,
    bad_step,
    token_collision,
    row_too_large,
    auth,
    rate_limited,
    transport,
    malformed_response,
    bad_facts,
    budget_exceeded,
    unplantable,
    config,
    invalid_argument,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the whole engine. `stage` names the pipeline
/// stage (and chunk index where relevant) that raised the error.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::string stage = {});

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& stage() const noexcept { return stage_; }

private:
    ErrorKind kind_;
    std::string stage_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message, std::string stage = {});

} // namespace insight
