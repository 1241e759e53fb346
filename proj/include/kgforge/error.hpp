#pragma once
// Error machinery. Two idioms, by contract:
//   - parsers are total: they return ParseResult<T> and never throw;
//   - everything else (IO, config, backends, precondition violations) throws
//     Error, with a kind tag so callers can branch without string matching.

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace kgforge {

enum class ErrorKind {
    config,        // missing credential, bad config key, unusable invocation
    io,            // file not found, malformed file
    backend,       // HTTP failure after retries, transcript exhaustion
    precondition,  // API contract violation (empty graph, absent triplet, ...)
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

enum class ParseErrorKind {
    no_entities,       // entity-list parse found nothing
    missing_lines,     // Action:/Triplet: lines absent or garbled
    unknown_action,    // action token is neither correct/enhance nor expand
    triplet_not_found, // selected triplet absent from the graph
    triplet_searched,  // selected triplet already marked searched
    bad_verdict,       // last line is neither Yes nor No
    empty_text,        // nothing to extract an answer from
};

struct ParseError {
    ParseErrorKind kind;
    std::string message;
};

template <typename T>
class ParseResult {
public:
    ParseResult(T value) : value_(std::move(value)) {}  // NOLINT: implicit by design
    ParseResult(ParseError error) : error_(std::move(error)) {}

    bool ok() const { return value_.has_value(); }
    explicit operator bool() const { return ok(); }

    const T& value() const { return *value_; }
    T& value() { return *value_; }
    const ParseError& error() const { return *error_; }

private:
    std::optional<T> value_;
    std::optional<ParseError> error_;
};

}  // namespace kgforge
