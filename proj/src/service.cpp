#include "peel/service.hpp"

#include "peel/error.hpp"
#include "peel/log.hpp"
#include "peel/scenes.hpp"

#include <atomic>
#include <fstream>
#include <random>
#include <sstream>

namespace peel {

namespace fs = std::filesystem;

std::string_view to_string(JobState s)
{
    switch (s) {
    case JobState::Idle: return "IDLE";
    case JobState::Running: return "RUNNING";
    case JobState::Failed: return "FAILED";
    case JobState::Done: return "DONE";
    }
    return "?";
}

Json to_json(const MeshSummary& m)
{
    return {{"vertices", m.vertices}, {"tets", m.tets}, {"boundary_faces", m.boundary_faces},
        {"part_faces", m.part_faces}, {"stock_faces", m.stock_faces},
        {"bounds", {{"lo", {m.bounds.lo[0], m.bounds.lo[1], m.bounds.lo[2]}},
                       {"hi", {m.bounds.hi[0], m.bounds.hi[1], m.bounds.hi[2]}}}}};
}

Json to_json(const SessionInfo& s)
{
    return {{"id", s.id}, {"state", to_string(s.state)}, {"revision", s.revision}, {"job", s.job},
        {"pending_edits", s.pending_edits}, {"has_mesh", s.has_mesh}, {"has_plan", s.has_plan},
        {"failure", s.failure}};
}

Json to_json(const ProgressEvent& e, std::uint64_t job, std::size_t seq)
{
    return {{"type", "progress"}, {"job", job}, {"seq", seq}, {"stage", e.stage}, {"iteration", e.iteration},
        {"i_rot", e.i_rot}, {"message", e.message}};
}

MeshSummary summarize(const TetMesh& mesh)
{
    MeshSummary m;
    m.vertices = mesh.num_vertices();
    m.tets = mesh.num_tets();
    m.boundary_faces = mesh.boundary_faces().size();
    for (const auto& f : mesh.boundary_faces()) {
        if (f.tag == BoundaryTag::Part) ++m.part_faces;
        if (f.tag == BoundaryTag::Stock) ++m.stock_faces;
    }
    m.bounds = mesh.bounds();
    return m;
}

struct SessionManager::Snapshot {
    std::uint64_t job = 0;
    std::shared_ptr<const TetMesh> mesh;
    PeelingPlan plan;
    std::vector<std::string> layers; ///< one serialized record per layer
    std::string reports;
};

struct AnchorEdit {
    std::int64_t id = 0;
    std::optional<AnchorSpec> spec; ///< empty: delete
};

struct SessionManager::Session {
    std::string id;
    mutable std::mutex mutex;
    mutable std::condition_variable cv;
    std::shared_ptr<const TetMesh> mesh;
    std::map<std::int64_t, AnchorSpec> anchors;
    std::vector<AnchorEdit> pending;
    std::uint64_t revision = 0;
    JobState state = JobState::Idle;
    std::uint64_t job = 0;
    std::vector<ProgressEvent> events;
    std::string failure;
    std::shared_ptr<const Snapshot> committed;
    std::thread worker;
};

namespace {

void apply_edit(std::map<std::int64_t, AnchorSpec>& anchors, const AnchorEdit& e)
{
    if (e.spec)
        anchors[e.id] = *e.spec;
    else
        anchors.erase(e.id);
}

std::string random_token()
{
    static std::mutex m;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(m);
    std::ostringstream out;
    out << std::hex << rng();
    return out.str();
}

Json markers_json(const PeelingPlan& plan, const TetMesh& mesh)
{
    Json out = Json::array();
    for (const auto& p : plan.singularities.remaining_points) {
        const Vec3& x = mesh.vertex(static_cast<std::size_t>(p.vertex));
        out.push_back({{"kind", to_string(p.kind)}, {"vertex", p.vertex}, {"position", {x[0], x[1], x[2]}}});
    }
    for (const std::size_t i : plan.singularities.unresolved_boundaries) {
        const auto& b = plan.singularities.boundaries[i];
        Vec3 c = Vec3::Zero();
        for (const auto& f : b.faces) c += mesh.centroid(static_cast<std::size_t>(f.tet));
        c /= static_cast<double>(std::max<std::size_t>(1, b.faces.size()));
        out.push_back({{"kind", "SURFACE"}, {"faces", b.faces.size()}, {"position", {c[0], c[1], c[2]}}});
    }
    return out;
}

} // namespace

SessionManager::SessionManager(std::size_t max_payload) : max_payload_(max_payload) {}

SessionManager::~SessionManager()
{
    std::map<std::string, std::shared_ptr<Session>> sessions;
    {
        std::lock_guard lock(mutex_);
        sessions.swap(sessions_);
    }
    for (auto& [_, s] : sessions) {
        std::thread t;
        {
            std::lock_guard lock(s->mutex);
            t = std::move(s->worker);
        }
        if (t.joinable()) t.join();
    }
}

std::string SessionManager::create_session()
{
    auto s = std::make_shared<Session>();
    std::lock_guard lock(mutex_);
    s->id = "s" + std::to_string(next_session_++) + "-" + random_token();
    sessions_[s->id] = s;
    return s->id;
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const
{
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::SessionNotFound, "no session '" + id + "'");
    return it->second;
}

std::shared_ptr<const SessionManager::Snapshot> SessionManager::snapshot(const std::string& id) const
{
    const auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (!s->committed) throw Error(ErrorCode::InvalidArgument, "session '" + id + "' has no committed plan");
    return s->committed;
}

SessionInfo SessionManager::info(const std::string& id) const
{
    const auto s = find(id);
    std::lock_guard lock(s->mutex);
    SessionInfo i;
    i.id = s->id;
    i.state = s->state;
    i.revision = s->revision;
    i.job = s->job;
    i.pending_edits = s->pending.size();
    i.has_mesh = s->mesh != nullptr;
    i.has_plan = s->committed != nullptr;
    i.failure = s->failure;
    return i;
}

MeshSummary SessionManager::install_mesh(Session& s, TetMesh mesh, std::vector<AnchorSpec> anchors)
{
    const MeshSummary summary = summarize(mesh);
    std::lock_guard lock(s.mutex);
    if (s.state == JobState::Running) throw Error(ErrorCode::JobAlreadyRunning, "cannot replace the mesh during a solve");
    s.mesh = std::make_shared<const TetMesh>(std::move(mesh));
    s.anchors.clear();
    for (std::size_t i = 0; i < anchors.size(); ++i) s.anchors[static_cast<std::int64_t>(i)] = anchors[i];
    s.committed.reset();
    s.events.clear();
    s.failure.clear();
    s.state = JobState::Idle;
    ++s.revision;
    return summary;
}

MeshSummary SessionManager::upload_mesh(const std::string& id, std::string_view vtk, std::optional<std::string_view> tags)
{
    const auto s = find(id);
    const std::size_t size = vtk.size() + (tags ? tags->size() : 0);
    if (size > max_payload_)
        throw Error(ErrorCode::InvalidArgument, "mesh payload of " + std::to_string(size) + " bytes exceeds the limit");
    const fs::path dir = fs::temp_directory_path() / ("peel-upload-" + random_token());
    fs::create_directories(dir);
    const auto cleanup = [&] {
        std::error_code ec;
        fs::remove_all(dir, ec);
    };
    try {
        write_text(dir / "mesh.vtk", std::string(vtk));
        std::optional<fs::path> tag_path;
        if (tags) {
            tag_path = dir / "mesh.tags";
            write_text(*tag_path, std::string(*tags));
        }
        TetMesh mesh = load_mesh(dir / "mesh.vtk", MeshFormat::VtkLegacy, tag_path);
        cleanup();
        return install_mesh(*s, std::move(mesh), {});
    } catch (...) {
        cleanup();
        throw;
    }
}

MeshSummary SessionManager::load_mesh_file(const std::string& id, const fs::path& path)
{
    const auto s = find(id);
    const auto format = guess_format(path);
    if (!format) throw Error(ErrorCode::InvalidArgument, "unknown mesh format: " + path.string());
    return install_mesh(*s, load_mesh(path, *format), {});
}

MeshSummary SessionManager::load_scene(const std::string& id, const std::string& name, double resolution)
{
    const auto s = find(id);
    Scene scene = make_scene(name, resolution);
    return install_mesh(*s, std::move(scene.mesh), std::move(scene.anchors));
}

std::uint64_t SessionManager::put_anchor(
    const std::string& id, std::int64_t anchor_id, const AnchorSpec& spec, std::optional<std::uint64_t> expected)
{
    const auto s = find(id);
    if (spec.direction.norm() < 1e-12) throw Error(ErrorCode::InvalidArgument, "anchor direction is zero");
    std::lock_guard lock(s->mutex);
    if (expected && *expected != s->revision)
        throw Error(ErrorCode::StaleRevision,
            "revision " + std::to_string(*expected) + " is stale (current " + std::to_string(s->revision) + ")");
    if (!s->mesh) throw Error(ErrorCode::InvalidArgument, "upload a mesh before editing anchors");
    anchor_tets(*s->mesh, spec); // validates the id against the mesh
    AnchorEdit edit{anchor_id, spec};
    if (s->state == JobState::Running)
        s->pending.push_back(std::move(edit));
    else
        apply_edit(s->anchors, edit);
    return ++s->revision;
}

std::uint64_t SessionManager::delete_anchor(
    const std::string& id, std::int64_t anchor_id, std::optional<std::uint64_t> expected)
{
    const auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (expected && *expected != s->revision)
        throw Error(ErrorCode::StaleRevision,
            "revision " + std::to_string(*expected) + " is stale (current " + std::to_string(s->revision) + ")");
    AnchorEdit edit{anchor_id, std::nullopt};
    if (s->state == JobState::Running) {
        s->pending.push_back(std::move(edit));
    } else {
        if (!s->anchors.contains(anchor_id))
            throw Error(ErrorCode::InvalidArgument, "no anchor " + std::to_string(anchor_id));
        apply_edit(s->anchors, edit);
    }
    return ++s->revision;
}

std::map<std::int64_t, AnchorSpec> SessionManager::anchors(const std::string& id) const
{
    const auto s = find(id);
    std::lock_guard lock(s->mutex);
    return s->anchors;
}

std::uint64_t SessionManager::start_solve(
    const std::string& id, const PlanConfig& cfg, std::optional<std::uint64_t> expected)
{
    cfg.validate();
    const auto s = find(id);
    std::thread previous;
    std::uint64_t job = 0;
    {
        std::lock_guard lock(s->mutex);
        if (s->state == JobState::Running)
            throw Error(ErrorCode::JobAlreadyRunning, "session '" + id + "' already has a running job");
        if (expected && *expected != s->revision)
            throw Error(ErrorCode::StaleRevision,
                "revision " + std::to_string(*expected) + " is stale (current " + std::to_string(s->revision) + ")");
        if (!s->mesh) throw Error(ErrorCode::InvalidArgument, "upload a mesh before solving");
        PlanConfig run_cfg = cfg;
        for (const auto& [_, a] : s->anchors) run_cfg.anchors.push_back(a);
        previous = std::move(s->worker);
        job = ++s->job;
        s->state = JobState::Running;
        s->events.clear();
        s->failure.clear();
        if (previous.joinable()) previous.join(); // finished; it no longer takes the lock
        s->worker = std::thread(&SessionManager::run_job, this, s, job, std::move(run_cfg));
    }
    return job;
}

void SessionManager::run_job(std::shared_ptr<Session> s, std::uint64_t job, PlanConfig cfg)
{
    std::shared_ptr<const TetMesh> mesh;
    {
        std::lock_guard lock(s->mutex);
        mesh = s->mesh;
    }
    const auto sink = [&](const ProgressEvent& e) {
        {
            std::lock_guard lock(s->mutex);
            s->events.push_back(e);
        }
        s->cv.notify_all();
    };

    auto snap = std::make_shared<Snapshot>();
    std::string failure;
    try {
        snap->job = job;
        snap->mesh = mesh;
        snap->plan = run_plan(*mesh, cfg, sink);
        for (const auto& layer : snap->plan.layers.layers) snap->layers.push_back(to_json(layer).dump());
        Json reports{{"job", job}, {"valid", snap->plan.valid}, {"failed_stage", snap->plan.failed_stage},
            {"failure", snap->plan.failure}, {"metrics", to_json(snap->plan.metrics)},
            {"curl", to_json(snap->plan.curl)}, {"curl_rounds", snap->plan.curl_rounds},
            {"singularity", {{"initial", to_json(snap->plan.initial_singularities, *mesh)},
                                {"final", to_json(snap->plan.singularities, *mesh)}}},
            {"iso_values", snap->plan.layers.iso_values()}, {"markers", markers_json(snap->plan, *mesh)},
            {"notes", snap->plan.notes}};
        snap->reports = reports.dump();
    } catch (const std::exception& e) {
        failure = e.what();
        log::warn("solve job " + std::to_string(job) + " failed: " + failure);
    }

    {
        std::lock_guard lock(s->mutex);
        if (failure.empty()) {
            s->committed = std::move(snap);
            s->state = JobState::Done;
        } else {
            s->failure = failure;
            s->state = JobState::Failed;
        }
        for (const auto& e : s->pending) apply_edit(s->anchors, e);
        s->pending.clear();
    }
    s->cv.notify_all();
}

ProgressPage SessionManager::progress(const std::string& id, std::size_t since, std::chrono::milliseconds wait) const
{
    const auto s = find(id);
    std::unique_lock lock(s->mutex);
    if (wait.count() > 0)
        s->cv.wait_for(lock, wait, [&] { return s->events.size() > since || s->state != JobState::Running; });
    ProgressPage page;
    page.job = s->job;
    page.state = s->state;
    if (since < s->events.size())
        page.events.assign(s->events.begin() + static_cast<std::ptrdiff_t>(since), s->events.end());
    page.finished = s->state != JobState::Running;
    return page;
}

bool SessionManager::wait_idle(const std::string& id, std::chrono::milliseconds timeout) const
{
    const auto s = find(id);
    std::unique_lock lock(s->mutex);
    return s->cv.wait_for(lock, timeout, [&] { return s->state != JobState::Running; });
}

std::string SessionManager::get_layers(const std::string& id, std::size_t first, std::size_t last) const
{
    const auto snap = snapshot(id);
    std::string out = "{\"job\":" + std::to_string(snap->job) + ",\"count\":" + std::to_string(snap->layers.size())
        + ",\"first\":" + std::to_string(first) + ",\"layers\":[";
    bool comma = false;
    for (std::size_t i = first; i < snap->layers.size() && i <= last; ++i) {
        if (comma) out += ',';
        out += snap->layers[i];
        comma = true;
    }
    out += "]}";
    return out;
}

std::string SessionManager::get_field_sample(const std::string& id, std::size_t max_arrows) const
{
    const auto snap = snapshot(id);
    const TetMesh& mesh = *snap->mesh;
    const VectorField& v = snap->plan.field;
    const std::size_t n = std::min(v.size(), mesh.num_tets());
    const std::size_t stride = max_arrows == 0 ? n + 1 : std::max<std::size_t>(1, (n + max_arrows - 1) / max_arrows);
    std::vector<double> positions, vectors;
    std::vector<std::size_t> tets;
    for (std::size_t t = 0; t < n; t += stride) {
        const Vec3 c = mesh.centroid(t);
        positions.insert(positions.end(), {c[0], c[1], c[2]});
        vectors.insert(vectors.end(), {v[t][0], v[t][1], v[t][2]});
        tets.push_back(t);
    }
    return Json{{"job", snap->job}, {"stride", stride}, {"tets", tets}, {"positions", positions}, {"vectors", vectors}}
        .dump();
}

std::string SessionManager::get_reports(const std::string& id) const
{
    return snapshot(id)->reports;
}

void SessionManager::save_session(const std::string& id, const fs::path& dir) const
{
    const auto s = find(id);
    std::shared_ptr<const Snapshot> snap;
    std::shared_ptr<const TetMesh> mesh;
    std::map<std::int64_t, AnchorSpec> anchors;
    {
        std::lock_guard lock(s->mutex);
        snap = s->committed;
        mesh = s->mesh;
        anchors = s->anchors;
    }
    if (!mesh) throw Error(ErrorCode::InvalidArgument, "session '" + id + "' has no mesh");
    fs::create_directories(dir);
    save_mesh(*mesh, dir / "mesh.vtk", MeshFormat::VtkLegacy);
    Json a = Json::object();
    for (const auto& [k, spec] : anchors) a[std::to_string(k)] = to_json(spec);
    write_text(dir / "anchors.json", a.dump(2) + "\n");
    if (snap) save_plan(snap->plan, *mesh, dir / "plan");
}

} // namespace peel
