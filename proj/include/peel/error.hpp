#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace peel {

enum class ErrorCode {
    InvalidArgument,
    ParseError,
    IoError,
    DegenerateTet,
    NonManifoldFace,
    SingularTet,
    SolverFailure,
    IncompatibleBC,
    EmptyAnchorSet,
    ZeroVectorAfterSolve,
    NoPartFaces,
    InadmissibleBoundary,
    RingTouchesDomainBoundary,
    NonManifoldSource,
    UnorientedSource,
    IsoValueOutOfRange,
    ConstantField,
    EmptyMesh,
    DegenerateInput,
    SessionNotFound,
    JobAlreadyRunning,
    StaleRevision,
    UnresolvedSingularities,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; the code carries the error kind.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace peel
