#pragma once

#include <stdexcept>
#include <string>

namespace thintime {

// Failure vocabulary shared by all modules. Each throw site picks the kind
// that names the violated contract; tests match on `kind`.
enum class ErrorKind {
    NonPositiveProbability,
    ProbabilitySumMismatch,
    DepthZero,
    TimeOutOfRange,
    ShapeMismatch,
    NotIncreasing,
    OverlappingGraphs,
    GraphInclusionViolated,
    AssignmentOutsideGraph,
    CellEmpty,
    ZeroDenominator,
    GammaNonPositive,
    InvalidSplit,
    NotPredictable,
    NotMartingale,
    BackendUnsupported,
    StepTooCoarse,
    SeedMissing,
    DegenerateVariance,
    NoCellPaths,
    TauExceedsHorizon,
    NonIntegrableLambda,
    ZeroZDenominator,
    ExplodedPath,
    HypothesisViolated,
    SyntaxError,
    SchemaError,
    FileNotFound,
    BackendMismatch,
};

inline const char* error_kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::NonPositiveProbability: return "NonPositiveProbability";
        case ErrorKind::ProbabilitySumMismatch: return "ProbabilitySumMismatch";
        case ErrorKind::DepthZero:              return "DepthZero";
        case ErrorKind::TimeOutOfRange:         return "TimeOutOfRange";
        case ErrorKind::ShapeMismatch:          return "ShapeMismatch";
        case ErrorKind::NotIncreasing:          return "NotIncreasing";
        case ErrorKind::OverlappingGraphs:      return "OverlappingGraphs";
        case ErrorKind::GraphInclusionViolated: return "GraphInclusionViolated";
        case ErrorKind::AssignmentOutsideGraph: return "AssignmentOutsideGraph";
        case ErrorKind::CellEmpty:              return "CellEmpty";
        case ErrorKind::ZeroDenominator:        return "ZeroDenominator";
        case ErrorKind::GammaNonPositive:       return "GammaNonPositive";
        case ErrorKind::InvalidSplit:           return "InvalidSplit";
        case ErrorKind::NotPredictable:         return "NotPredictable";
        case ErrorKind::NotMartingale:          return "NotMartingale";
        case ErrorKind::BackendUnsupported:     return "BackendUnsupported";
        case ErrorKind::StepTooCoarse:          return "StepTooCoarse";
        case ErrorKind::SeedMissing:            return "SeedMissing";
        case ErrorKind::DegenerateVariance:     return "DegenerateVariance";
        case ErrorKind::NoCellPaths:            return "NoCellPaths";
        case ErrorKind::TauExceedsHorizon:      return "TauExceedsHorizon";
        case ErrorKind::NonIntegrableLambda:    return "NonIntegrableLambda";
        case ErrorKind::ZeroZDenominator:       return "ZeroZDenominator";
        case ErrorKind::ExplodedPath:           return "ExplodedPath";
        case ErrorKind::HypothesisViolated:     return "HypothesisViolated";
        case ErrorKind::SyntaxError:            return "SyntaxError";
        case ErrorKind::SchemaError:            return "SchemaError";
        case ErrorKind::FileNotFound:           return "FileNotFound";
        case ErrorKind::BackendMismatch:        return "BackendMismatch";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace thintime
