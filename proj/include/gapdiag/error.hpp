#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gapdiag {

enum class ErrorKind {
    Parse,
    Schema,
    Format,
    Shape,
    NonFinite,
    Config,
    DegenerateLabels,
    TooFewGroups,
    MissingSplit,
    MissingAssets,
    MissingText,
    MissingMeta,
    EmptyInput,
    ShuffleCountMismatch,
    NoFeasibleConfig,
    SvdFailure,
    Io,
    Usage,
};

inline std::string_view error_kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::Parse: return "ParseError";
        case ErrorKind::Schema: return "SchemaError";
        case ErrorKind::Format: return "FormatError";
        case ErrorKind::Shape: return "ShapeError";
        case ErrorKind::NonFinite: return "NonFiniteError";
        case ErrorKind::Config: return "ConfigError";
        case ErrorKind::DegenerateLabels: return "DegenerateLabels";
        case ErrorKind::TooFewGroups: return "TooFewGroups";
        case ErrorKind::MissingSplit: return "MissingSplit";
        case ErrorKind::MissingAssets: return "MissingAssets";
        case ErrorKind::MissingText: return "MissingText";
        case ErrorKind::MissingMeta: return "MissingMeta";
        case ErrorKind::EmptyInput: return "EmptyInput";
        case ErrorKind::ShuffleCountMismatch: return "ShuffleCountMismatch";
        case ErrorKind::NoFeasibleConfig: return "NoFeasibleConfig";
        case ErrorKind::SvdFailure: return "SvdFailure";
        case ErrorKind::Io: return "IoError";
        case ErrorKind::Usage: return "UsageError";
    }
    return "Error";
}

// Single exception type for the toolkit; the kind distinguishes the contract
// violation so callers (and the CLI exit-code mapping) can branch on it.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace gapdiag
