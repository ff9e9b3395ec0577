#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dpvis {

enum class Errc {
    MalformedRow,
    UnknownVariable,
    NonNumericValue,
    InvalidValue,
    SubjectWithNoVisits,
    InvalidConfig,
    NoFeasiblePath,
    FoldTooSmall,
    EmptyInput,
    EmptyQuery,
    InvalidQuery,
    UnknownState,
    UnknownSubgroup,
    UnknownModel,
    UnknownSubject,
    UnknownJob,
    Conflict,
    InvalidFilterAst,
    EmptyScope,
    UnknownEvent,
    EmptyAges,
    NoActiveModel,
    NoDataset,
    InvalidJson,
    Io,
};

std::string_view to_string(Errc code) noexcept;

// Every module error carries a category so the CLI and HTTP layers can
// report it in machine-readable form. `location` is a CSV line number or a
// JSON-pointer-like path into a filter AST, when one applies.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message, std::string location = {})
        : std::runtime_error(message), code_(code), location_(std::move(location)) {}

    Errc code() const noexcept { return code_; }
    const std::string& location() const noexcept { return location_; }

private:
    Errc code_;
    std::string location_;
};

}  // namespace dpvis
