#include "peel/planner.hpp"

#include "peel/error.hpp"
#include "peel/log.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>
#include <thread>

namespace peel {

std::string_view to_string(Strategy s)
{
    switch (s) {
    case Strategy::AnchorsOnly: return "ANCHORS_ONLY";
    case Strategy::ConvexHullSource: return "CONVEX_HULL_SOURCE";
    case Strategy::PartNormalsSource: return "PART_NORMALS_SOURCE";
    case Strategy::Planar: return "PLANAR";
    }
    return "ANCHORS_ONLY";
}

std::optional<Strategy> parse_strategy(std::string_view s)
{
    for (auto v : {Strategy::AnchorsOnly, Strategy::ConvexHullSource, Strategy::PartNormalsSource, Strategy::Planar})
        if (to_string(v) == s) return v;
    return std::nullopt;
}

std::string_view to_string(BcChoice b)
{
    switch (b) {
    case BcChoice::Natural: return "NATURAL";
    case BcChoice::DirichletPart: return "DIRICHLET_PART";
    case BcChoice::DirichletStock: return "DIRICHLET_STOCK";
    }
    return "NATURAL";
}

std::optional<BcChoice> parse_bc_choice(std::string_view s)
{
    for (auto v : {BcChoice::Natural, BcChoice::DirichletPart, BcChoice::DirichletStock})
        if (to_string(v) == s) return v;
    return std::nullopt;
}

BoundaryCondition boundary_condition(BcChoice b)
{
    switch (b) {
    case BcChoice::DirichletPart: return BoundaryCondition::dirichlet(BoundaryTag::Part, 0.0);
    case BcChoice::DirichletStock: return BoundaryCondition::dirichlet(BoundaryTag::Stock, 0.0);
    case BcChoice::Natural: break;
    }
    return BoundaryCondition::natural();
}

void PlanConfig::validate() const
{
    weights.validate();
    if (spacing.target_depth.has_value() == spacing.layer_count.has_value())
        throw Error(ErrorCode::InvalidArgument, "give exactly one of target_depth and layer_count");
    if (spacing.target_depth && !(*spacing.target_depth > 0.0))
        throw Error(ErrorCode::InvalidArgument, "target_depth must be positive");
    if (spacing.layer_count && *spacing.layer_count < 1)
        throw Error(ErrorCode::InvalidArgument, "layer_count must be at least 1");
    if (strategy == Strategy::Planar && (!peel_direction || !(peel_direction->norm() > 1e-12)))
        throw Error(ErrorCode::InvalidArgument, "PLANAR needs a non-zero peel_direction");
    if (blend_alpha && !(*blend_alpha >= 0.0 && *blend_alpha <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "blend_alpha must lie in [0, 1]");
    if (blend_ring_depth < 1) throw Error(ErrorCode::InvalidArgument, "blend_ring_depth must be at least 1");
    if (!(curl_threshold > 0.0) || curl_max_iters < 1)
        throw Error(ErrorCode::InvalidArgument, "curl threshold and iteration cap must be positive");
    if (max_rounds < 1) throw Error(ErrorCode::InvalidArgument, "max_rounds must be at least 1");
    if (depth_samples == 0 || spacing_samples < 1)
        throw Error(ErrorCode::InvalidArgument, "sample counts must be positive");
    for (const auto& d : directives) d.validate();
}

TriangleMesh mesh_part_surface(const TetMesh& mesh)
{
    TriangleMesh s = mesh.boundary_surface(BoundaryTag::Part);
    for (auto& t : s.triangles) std::swap(t[1], t[2]);
    return s;
}

namespace {

/// True when p is inside every hull plane by more than eps.
bool strictly_inside(const TriangleMesh& hull, const Vec3& p, double eps)
{
    for (std::size_t t = 0; t < hull.triangles.size(); ++t) {
        const Vec3 n = hull.normal(t);
        if (n.dot(p - hull.vertices[hull.triangles[t][0]]) > -eps) return false;
    }
    return true;
}

} // namespace

AnchorSet seed_anchors(const TetMesh& mesh, const PlanConfig& cfg)
{
    AnchorSet set;
    const double w = cfg.weights.beta_general;
    switch (cfg.strategy) {
    case Strategy::ConvexHullSource: {
        const TriangleMesh part = mesh_part_surface(mesh);
        if (part.empty()) throw Error(ErrorCode::NoPartFaces, "CONVEX_HULL_SOURCE needs PART faces");
        const TriangleMesh hull = convex_hull_source(part);
        set = orient_source_surface(hull, mesh, w);
        if (cfg.hull_concavities) {
            // Faces hidden inside the hull see no hull anchor; their own normal
            // points away from the part, so it cannot oppose the hull side.
            const double eps = 1e-9 * mesh.bounds().diagonal();
            std::map<std::int32_t, Vec3> normals;
            for (const auto& bf : mesh.boundary_faces()) {
                if (bf.tag != BoundaryTag::Part) continue;
                const auto f = mesh.face(bf.tet, bf.local_face);
                const Vec3 c = (mesh.vertex(f[0]) + mesh.vertex(f[1]) + mesh.vertex(f[2])) / 3.0;
                if (!strictly_inside(hull, c, eps)) continue;
                auto [it, fresh] = normals.emplace(bf.tet, Vec3::Zero());
                it->second -= face_area_vector(mesh, bf.tet, bf.local_face).normalized();
            }
            for (const auto& [t, n] : normals)
                if (n.norm() > 1e-12 && !set.find(t)) set.insert({t, n.normalized(), w, false});
        }
        break;
    }
    case Strategy::PartNormalsSource:
        for (const auto& [t, n] : part_normal_ring(mesh, 1)) set.insert({t, n, w, false});
        break;
    case Strategy::AnchorsOnly:
        break;
    case Strategy::Planar:
        throw Error(ErrorCode::InvalidArgument, "PLANAR does not use anchors");
    }
    for (const auto& spec : cfg.anchors) add_anchor(set, mesh, spec, cfg.weights);
    if (set.empty()) throw Error(ErrorCode::EmptyAnchorSet, "strategy and config produced no anchors");
    return set;
}

namespace {

/// All layers as one soup; the cutter meets whichever layer comes first.
TriangleMesh layer_envelope(const LayerSet& set)
{
    TriangleMesh out;
    for (const auto& l : set.layers) {
        const auto base = static_cast<std::int32_t>(out.vertices.size());
        out.vertices.insert(out.vertices.end(), l.vertices.begin(), l.vertices.end());
        for (const auto& t : l.triangles) out.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
    }
    return out;
}

void emit(const ProgressSink& sink, const std::string& stage, const std::string& message = {})
{
    if (sink) sink({stage, 0, 0.0, message});
}

CurlRemovalReport run_curl(const TetMesh& mesh, const VectorField& field, const AnchorSet& anchors,
    const PlanConfig& cfg, const ProgressSink& progress, int round)
{
    CurlRemovalOptions opts;
    opts.threshold = cfg.curl_threshold;
    opts.max_iters = cfg.curl_max_iters;
    opts.progress = [&](int k, double r) {
        if (progress) progress({"curl", k, r, "round " + std::to_string(round)});
    };
    return remove_curl(mesh, field, anchors, cfg.weights, opts);
}

SingularityOptions check_options(const PlanConfig& cfg, int rounds, std::vector<double> iso)
{
    SingularityOptions o;
    o.max_rounds = rounds;
    o.conflict_threshold = cfg.conflict_threshold;
    o.bc = boundary_condition(cfg.bc);
    o.iso_values = std::move(iso);
    return o;
}

void finish(PeelingPlan& plan, const TetMesh& mesh, const PlanConfig& cfg, const std::vector<double>& iso,
    const ProgressSink& progress)
{
    emit(progress, "layers");
    for (double c : iso) plan.layers.layers.push_back(extract_isosurface(mesh, plan.scalar, c));
    plan.layers.spacing = spacing_stats(plan.layers.layers, cfg.seed, cfg.spacing_samples);

    emit(progress, "certificate");
    plan.remaining_side = part_side(mesh, plan.scalar);
    plan.violations = floating_volume_check(mesh, plan.scalar, iso, plan.remaining_side);
    auto& m = plan.metrics;
    m.i_rot = i_rot(mesh, plan.field);
    m.interior_extrema = interior_only(detect_point_singularities(mesh, plan.scalar)).size();
    m.unresolved_boundaries = plan.singularities.unresolved_boundaries.size();
    m.floating_violations = plan.violations.size();
    m.spacing = plan.layers.spacing;

    if (mesh.has_tag(BoundaryTag::Part)) {
        const TriangleMesh envelope = layer_envelope(plan.layers);
        if (!envelope.empty())
            m.depth = depth_variation(envelope, mesh_part_surface(mesh), cfg.depth_samples, cfg.seed);
    }

    const bool converged = plan.curl.converged && m.i_rot <= cfg.curl_threshold;
    plan.valid = converged && m.interior_extrema == 0 && m.unresolved_boundaries == 0 && m.floating_violations == 0;
    if (!converged) plan.notes.push_back("curl removal did not reach the threshold");
    if (m.interior_extrema > 0) plan.notes.push_back(std::to_string(m.interior_extrema) + " interior extrema remain");
    if (m.floating_violations > 0)
        plan.notes.push_back(std::to_string(m.floating_violations) + " floating-volume violations");
}

void run_planar(PeelingPlan& plan, const TetMesh& mesh, const PlanConfig& cfg, const ProgressSink& progress)
{
    const Vec3 d = cfg.peel_direction->normalized();
    plan.field.assign(mesh.num_tets(), d);
    plan.scalar.resize(static_cast<Eigen::Index>(mesh.num_vertices()));
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) plan.scalar[static_cast<Eigen::Index>(v)] = d.dot(mesh.vertex(v));
    // A constant field is a gradient; the curl stage is a single measurement.
    plan.curl.i_rot_history = {i_rot(mesh, plan.field)};
    plan.curl.iterations = 1;
    plan.curl.converged = plan.curl.i_rot_history[0] <= cfg.curl_threshold;
    plan.curl.final_field = plan.field;
    plan.curl.final_scalar = plan.scalar;
    if (progress) progress({"curl", 0, plan.curl.i_rot_history[0], "planar"});
    const auto iso = layer_iso_values(plan.scalar, cfg.spacing);
    plan.singularities = classify_and_iterate(mesh, plan.field, {}, {}, cfg.weights, check_options(cfg, 1, {})).report;
    finish(plan, mesh, cfg, iso, progress);
}

} // namespace

PeelingPlan run_plan(const TetMesh& mesh, const PlanConfig& cfg, const ProgressSink& progress)
{
    PeelingPlan plan;
    plan.config = cfg;
    plan.bc = boundary_condition(cfg.bc);
    std::string stage = "config";
    try {
        cfg.validate();
        if (mesh.num_tets() == 0) throw Error(ErrorCode::EmptyMesh, "mesh has no tets");
        if (cfg.strategy == Strategy::Planar) {
            stage = "planar";
            run_planar(plan, mesh, cfg, progress);
            emit(progress, "done", plan.valid ? "VALID" : "INVALID");
            return plan;
        }

        stage = "seed";
        emit(progress, stage);
        plan.anchors = seed_anchors(mesh, cfg);

        stage = "field";
        emit(progress, stage);
        plan.field = interpolate_field(mesh, plan.anchors, cfg.weights);
        if (cfg.blend_alpha)
            plan.field = blend_with_normals(plan.field, mesh, *cfg.blend_alpha, cfg.blend_ring_depth);

        stage = "singularity";
        emit(progress, stage);
        auto loop = classify_and_iterate(
            mesh, plan.field, plan.anchors, cfg.directives, cfg.weights, check_options(cfg, cfg.max_rounds, {}));
        plan.initial_singularities = loop.report;
        plan.field = std::move(loop.field);
        plan.anchors = std::move(loop.anchors);

        for (int round = 1;; ++round) {
            stage = "curl";
            emit(progress, stage);
            plan.curl = run_curl(mesh, plan.field, plan.anchors, cfg, progress, round);
            plan.curl_rounds = round;
            plan.field = plan.curl.final_field;

            stage = "scalar";
            emit(progress, stage);
            plan.scalar = solve_poisson(mesh, plan.field, plan.bc);
            const auto iso = layer_iso_values(plan.scalar, cfg.spacing);

            stage = "recheck";
            emit(progress, stage);
            auto check = classify_and_iterate(mesh, plan.field, plan.anchors, {}, cfg.weights, check_options(cfg, 1, iso));
            plan.singularities = std::move(check.report);
            if (round == 1 && !plan.singularities.remaining_points.empty() && !cfg.directives.empty()) {
                plan.notes.push_back("re-check found interior extrema after curl removal; one more directive round");
                stage = "singularity";
                auto again = classify_and_iterate(
                    mesh, plan.field, plan.anchors, cfg.directives, cfg.weights, check_options(cfg, 2, {}));
                plan.field = std::move(again.field);
                plan.anchors = std::move(again.anchors);
                continue;
            }
            stage = "layers";
            finish(plan, mesh, cfg, iso, progress);
            break;
        }
    } catch (const std::exception& e) {
        plan.valid = false;
        plan.failed_stage = stage;
        plan.failure = e.what();
        log::warn("plan failed in stage " + stage + ": " + e.what());
    }
    emit(progress, "done", plan.valid ? "VALID" : "INVALID");
    return plan;
}

unsigned worker_threads()
{
    if (const char* env = std::getenv("PEEL_THREADS")) {
        char* end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (end != env && n >= 1) return static_cast<unsigned>(n);
        log::warn("ignoring PEEL_THREADS='" + std::string(env) + "'");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

ComparisonReport compare_strategies(
    const TetMesh& mesh, const TriangleMesh& part, const std::vector<PlanConfig>& configs, unsigned threads)
{
    if (configs.empty()) throw Error(ErrorCode::InvalidArgument, "nothing to compare");
    if (part.empty()) throw Error(ErrorCode::EmptyMesh, "part surface is empty");
    ComparisonReport report;
    report.rows.resize(configs.size());
    std::atomic<std::size_t> next{0};
    const auto work = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            auto& row = report.rows[i];
            row.label = std::string(to_string(configs[i].strategy)) + "/" + std::string(to_string(configs[i].bc));
            const PeelingPlan plan = run_plan(mesh, configs[i]);
            row.valid = plan.valid;
            row.layers = plan.layers.layers.size();
            row.failure = plan.failure;
            const TriangleMesh envelope = layer_envelope(plan.layers);
            if (envelope.empty()) continue;
            const auto d = depth_variation(envelope, part, configs[i].depth_samples, configs[i].seed);
            row.max_depth = d.max_depth;
            row.avg_variation = d.avg_variation;
            row.mean_depth = d.mean_depth;
            row.fallback_samples = d.fallback_samples;
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(configs.size())));
    std::vector<std::thread> pool;
    for (unsigned k = 1; k < n; ++k) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    return report;
}

std::string ComparisonReport::table() const
{
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-36s %6s %7s %14s %14s %14s\n", "strategy", "valid", "layers", "max_depth",
        "avg_variation", "mean_depth");
    out << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-36s %6s %7zu %14.6g %14.6g %14.6g\n", r.label.c_str(),
            r.valid ? "yes" : "no", r.layers, r.max_depth, r.avg_variation, r.mean_depth);
        out << line;
    }
    return out.str();
}

} // namespace peel
