#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace invert {

enum class ErrorKind {
    BadMagic,
    UnsupportedVersion,
    DimensionMismatch,
    NonFiniteValue,
    NonZeroPadding,
    NameCountMismatch,
    DuplicateConceptName,
    NeuronCountMismatch,
    OverlappingConceptNames,
    SampleCountMismatch,
    DegenerateConcept,
    UnknownConcept,
    SyntaxError,
    NoFeasibleConcept,
    InstanceTooLarge,
    ZeroStd,
    OutOfRangeActivation,
    MissingExplanation,
    InvalidArgument,
    Io,
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::BadMagic: return "BadMagic";
        case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::NonFiniteValue: return "NonFiniteValue";
        case ErrorKind::NonZeroPadding: return "NonZeroPadding";
        case ErrorKind::NameCountMismatch: return "NameCountMismatch";
        case ErrorKind::DuplicateConceptName: return "DuplicateConceptName";
        case ErrorKind::NeuronCountMismatch: return "NeuronCountMismatch";
        case ErrorKind::OverlappingConceptNames: return "OverlappingConceptNames";
        case ErrorKind::SampleCountMismatch: return "SampleCountMismatch";
        case ErrorKind::DegenerateConcept: return "DegenerateConcept";
        case ErrorKind::UnknownConcept: return "UnknownConcept";
        case ErrorKind::SyntaxError: return "SyntaxError";
        case ErrorKind::NoFeasibleConcept: return "NoFeasibleConcept";
        case ErrorKind::InstanceTooLarge: return "InstanceTooLarge";
        case ErrorKind::ZeroStd: return "ZeroStd";
        case ErrorKind::OutOfRangeActivation: return "OutOfRangeActivation";
        case ErrorKind::MissingExplanation: return "MissingExplanation";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::Io: return "Io";
    }
    return "Unknown";
}

// All library failures surface as this exception. `row`/`col` carry the
// offending cell for NonFiniteValue, `row` carries the character offset for
// SyntaxError, and `name` the offending identifier where one exists.
class Error : public std::runtime_error {
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    Error(ErrorKind kind, const std::string& message, std::size_t row = npos,
          std::size_t col = npos, std::string name = {})
        : std::runtime_error(std::string(to_string(kind)) + ": " + message),
          kind_(kind), row_(row), col_(col), name_(std::move(name)) {}

    ErrorKind kind() const noexcept { return kind_; }
    std::size_t row() const noexcept { return row_; }
    std::size_t col() const noexcept { return col_; }
    std::size_t position() const noexcept { return row_; }
    const std::string& name() const noexcept { return name_; }

private:
    ErrorKind kind_;
    std::size_t row_;
    std::size_t col_;
    std::string name_;
};

} // namespace invert
