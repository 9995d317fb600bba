#pragma once

#include "peel/serialize.hpp"

#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

namespace peel {

enum class JobState { Idle, Running, Failed, Done };
std::string_view to_string(JobState s);

struct MeshSummary {
    std::size_t vertices = 0;
    std::size_t tets = 0;
    std::size_t boundary_faces = 0;
    std::size_t part_faces = 0;
    std::size_t stock_faces = 0;
    Aabb bounds;
};
Json to_json(const MeshSummary& m);

struct SessionInfo {
    std::string id;
    JobState state = JobState::Idle;
    std::uint64_t revision = 0;     ///< bumped by every accepted anchor edit
    std::uint64_t job = 0;          ///< last started job, 0 before the first solve
    std::size_t pending_edits = 0;  ///< edits queued behind a running job
    bool has_mesh = false;
    bool has_plan = false;
    std::string failure;
};
Json to_json(const SessionInfo& s);

struct ProgressPage {
    std::uint64_t job = 0;
    std::vector<ProgressEvent> events; ///< events [since, since + events.size())
    JobState state = JobState::Idle;
    bool finished = false;             ///< the job is over and no event follows
};
Json to_json(const ProgressEvent& e, std::uint64_t job, std::size_t seq);

/// In-memory sessions over the planner. Mutations of one session are
/// serialized by its lock; solves run on a background thread per job and
/// publish their result as one immutable snapshot, so readers see either the
/// previous plan or the new one.
class SessionManager {
public:
    explicit SessionManager(std::size_t max_payload = std::size_t{64} << 20);
    ~SessionManager(); ///< waits for running jobs
    SessionManager(const SessionManager&) = delete;
    SessionManager& operator=(const SessionManager&) = delete;

    std::size_t max_payload() const { return max_payload_; }

    std::string create_session();
    SessionInfo info(const std::string& id) const;

    /// Mesh from an in-memory legacy VTK payload; `tags` uses the sidecar format.
    MeshSummary upload_mesh(const std::string& id, std::string_view vtk, std::optional<std::string_view> tags = {});
    /// Mesh from a local file (large meshes in local mode).
    MeshSummary load_mesh_file(const std::string& id, const std::filesystem::path& path);
    /// Built-in demo scene; its anchors replace the session's.
    MeshSummary load_scene(const std::string& id, const std::string& name, double resolution = 1.0);

    /// Returns the revision after the edit. While a job runs the edit is
    /// queued and applied once the job commits. Throws StaleRevision when
    /// `expected` differs from the current revision.
    std::uint64_t put_anchor(const std::string& id, std::int64_t anchor_id, const AnchorSpec& spec,
        std::optional<std::uint64_t> expected = {});
    std::uint64_t delete_anchor(
        const std::string& id, std::int64_t anchor_id, std::optional<std::uint64_t> expected = {});
    std::map<std::int64_t, AnchorSpec> anchors(const std::string& id) const;

    /// Starts run_plan on the current anchors (appended to cfg.anchors).
    /// Throws JobAlreadyRunning, StaleRevision and InvalidArgument (no mesh).
    std::uint64_t start_solve(
        const std::string& id, const PlanConfig& cfg, std::optional<std::uint64_t> expected = {});

    /// Events of the current job from index `since`, waiting up to `wait`
    /// when none are available yet.
    ProgressPage progress(const std::string& id, std::size_t since,
        std::chrono::milliseconds wait = std::chrono::milliseconds(0)) const;
    /// True when the session has no running job within `timeout`.
    bool wait_idle(const std::string& id, std::chrono::milliseconds timeout) const;

    /// Payloads of the committed plan; equal between commits byte for byte.
    /// Layers [first, last] as indexed triangle records.
    std::string get_layers(const std::string& id, std::size_t first = 0,
        std::size_t last = std::numeric_limits<std::size_t>::max()) const;
    /// At most `max_arrows` per-tet vectors (every k-th tet) with positions.
    std::string get_field_sample(const std::string& id, std::size_t max_arrows = 5000) const;
    /// Metrics, curl and singularity reports plus the open singularity markers.
    std::string get_reports(const std::string& id) const;

    /// Writes the committed plan, the mesh and the anchors to a directory.
    void save_session(const std::string& id, const std::filesystem::path& dir) const;

private:
    struct Snapshot;
    struct Session;

    std::shared_ptr<Session> find(const std::string& id) const;
    std::shared_ptr<const Snapshot> snapshot(const std::string& id) const;
    MeshSummary install_mesh(Session& s, TetMesh mesh, std::vector<AnchorSpec> anchors);
    void run_job(std::shared_ptr<Session> s, std::uint64_t job, PlanConfig cfg);

    std::size_t max_payload_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t next_session_ = 1;
};

MeshSummary summarize(const TetMesh& mesh);

} // namespace peel
