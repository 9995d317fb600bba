#include "peel/error.hpp"
#include "peel/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>

namespace peel {

std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DegenerateTet: return "DegenerateTet";
    case ErrorCode::NonManifoldFace: return "NonManifoldFace";
    case ErrorCode::SingularTet: return "SingularTet";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::IncompatibleBC: return "IncompatibleBC";
    case ErrorCode::EmptyAnchorSet: return "EmptyAnchorSet";
    case ErrorCode::ZeroVectorAfterSolve: return "ZeroVectorAfterSolve";
    case ErrorCode::NoPartFaces: return "NoPartFaces";
    case ErrorCode::InadmissibleBoundary: return "InadmissibleBoundary";
    case ErrorCode::RingTouchesDomainBoundary: return "RingTouchesDomainBoundary";
    case ErrorCode::NonManifoldSource: return "NonManifoldSource";
    case ErrorCode::UnorientedSource: return "UnorientedSource";
    case ErrorCode::IsoValueOutOfRange: return "IsoValueOutOfRange";
    case ErrorCode::ConstantField: return "ConstantField";
    case ErrorCode::EmptyMesh: return "EmptyMesh";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::SessionNotFound: return "SessionNotFound";
    case ErrorCode::JobAlreadyRunning: return "JobAlreadyRunning";
    case ErrorCode::StaleRevision: return "StaleRevision";
    case ErrorCode::UnresolvedSingularities: return "UnresolvedSingularities";
    }
    return "Unknown";
}

namespace log {
namespace {

Level initial_level()
{
    if (const char* env = std::getenv("PEEL_LOG")) {
        std::string v(env);
        if (v == "debug") return Level::Debug;
        if (v == "info") return Level::Info;
        if (v == "error") return Level::Error;
        if (v == "off") return Level::Off;
    }
    return Level::Warn;
}

std::atomic<Level> g_level{initial_level()};
std::mutex g_mutex;

void emit(Level lvl, const char* tag, const std::string& msg)
{
    if (lvl < g_level.load()) return;
    std::lock_guard lock(g_mutex);
    std::cerr << "[peel " << tag << "] " << msg << '\n';
}

} // namespace

void set_level(Level level) { g_level.store(level); }
Level level() { return g_level.load(); }

void debug(const std::string& msg) { emit(Level::Debug, "debug", msg); }
void info(const std::string& msg) { emit(Level::Info, "info", msg); }
void warn(const std::string& msg) { emit(Level::Warn, "warn", msg); }

} // namespace log
} // namespace peel
