#include "grsd/error.hpp"

namespace grsd {

std::string_view to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NonSquare: return "NonSquare";
    case ErrorKind::AsymmetryExceedsTol: return "AsymmetryExceedsTol";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::EmptyWindow: return "EmptyWindow";
    case ErrorKind::InfeasibleProfile: return "InfeasibleProfile";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::UnstableSSM: return "UnstableSSM";
    case ErrorKind::DivergedTrajectory: return "DivergedTrajectory";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::BoundarySample: return "BoundarySample";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::AllBinsBelowFloor: return "AllBinsBelowFloor";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::MixedSignVelocities: return "MixedSignVelocities";
    case ErrorKind::RangeExceeded: return "RangeExceeded";
    case ErrorKind::DivergentWeightedSum: return "DivergentWeightedSum";
    case ErrorKind::EmptyBinPair: return "EmptyBinPair";
    case ErrorKind::ZeroVectorEncountered: return "ZeroVectorEncountered";
    case ErrorKind::DegenerateVariance: return "DegenerateVariance";
    case ErrorKind::InvalidTolerance: return "InvalidTolerance";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind)
{
}

void fail(ErrorKind kind, const std::string& message)
{
    throw Error(kind, message);
}

}  // namespace grsd
