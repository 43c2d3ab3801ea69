#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace grsd {

enum class ErrorKind {
    InvalidArgument,
    NonFinite,
    NonSquare,
    AsymmetryExceedsTol,
    NoConvergence,
    EmptyWindow,
    InfeasibleProfile,
    IndexOutOfRange,
    DimensionMismatch,
    UnstableSSM,
    DivergedTrajectory,
    NonFiniteGradient,
    BoundarySample,
    TooFewSamples,
    AllBinsBelowFloor,
    InsufficientSamples,
    MixedSignVelocities,
    RangeExceeded,
    DivergentWeightedSum,
    EmptyBinPair,
    ZeroVectorEncountered,
    DegenerateVariance,
    InvalidTolerance,
    GridMismatch,
    SchemaViolation,
    IoError,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message)
{
    if (!condition) fail(kind, message);
}

}  // namespace grsd
