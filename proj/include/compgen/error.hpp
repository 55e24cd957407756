#pragma once

/// @file
/// Error type shared by every compgen module.

#include <stdexcept>
#include <string>
#include <string_view>

namespace compgen {

enum class ErrorCode {
    InvalidArgument,
    // formula
    UnknownElement,
    SyntaxError,
    ZeroCount,
    // features
    ElementOutsideVocabulary,
    MissingDescriptorRow,
    SchemaMismatch,
    EmptyInput,
    DimensionMismatch,
    NoSurvivingAtoms,
    // dataset
    IoError,
    FormulaParseError,
    NonFiniteProperty,
    InsufficientRecords,
    // autodiff / nets
    ShapeMismatch,
    NonFiniteValue,
    NonScalarOutput,
    NonFiniteGradient,
    VersionMismatch,
    ChecksumMismatch,
    // training
    NonFiniteLoss,
    // valency
    CombinationLimitExceeded,
    // evaluation
    EmptyReference,
    // cli
    ConfigError,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnknownElement: return "UnknownElement";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::ZeroCount: return "ZeroCount";
    case ErrorCode::ElementOutsideVocabulary: return "ElementOutsideVocabulary";
    case ErrorCode::MissingDescriptorRow: return "MissingDescriptorRow";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoSurvivingAtoms: return "NoSurvivingAtoms";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormulaParseError: return "FormulaParseError";
    case ErrorCode::NonFiniteProperty: return "NonFiniteProperty";
    case ErrorCode::InsufficientRecords: return "InsufficientRecords";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NonScalarOutput: return "NonScalarOutput";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::CombinationLimitExceeded: return "CombinationLimitExceeded";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

/// Exception carrying a machine-readable code alongside the message.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) {
        throw Error(code, message);
    }
}

} // namespace compgen
