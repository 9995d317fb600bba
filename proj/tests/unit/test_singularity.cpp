#include "test_util.hpp"

#include "peel/hull.hpp"
#include "peel/singularity.hpp"

#include <deque>
#include <map>
#include <set>

using namespace peel;
using namespace peel::test;

namespace {

/// 1-rings rebuilt from the tets, independent of the mesh's own adjacency.
std::vector<std::set<std::int32_t>> rings_from_tets(const TetMesh& m)
{
    std::vector<std::set<std::int32_t>> r(m.num_vertices());
    for (const auto& t : m.tets())
        for (auto a : t)
            for (auto b : t)
                if (a != b) r[a].insert(b);
    return r;
}

std::vector<bool> boundary_vertices(const TetMesh& m)
{
    std::vector<bool> b(m.num_vertices(), false);
    for (const auto& bf : m.boundary_faces())
        for (auto v : m.face(bf.tet, bf.local_face)) b[v] = true;
    return b;
}

/// Every interior face with v1 . v2 < threshold, as sorted (tet, other) pairs.
std::set<std::pair<std::int32_t, std::int32_t>> brute_conflicts(const TetMesh& m, const VectorField& v, double thr = 0.0)
{
    std::set<std::pair<std::int32_t, std::int32_t>> out;
    for (std::size_t t = 0; t < m.num_tets(); ++t)
        for (int f = 0; f < 4; ++f) {
            const auto nb = m.neighbor(t, f);
            if (nb > static_cast<std::int32_t>(t) && v[t].dot(v[nb]) < thr) out.insert({static_cast<std::int32_t>(t), nb});
        }
    return out;
}

/// Rim of a face set by edge parity, and whether every rim edge is on a PART face.
std::pair<std::set<Edge>, bool> brute_rim(const TetMesh& m, const SingularBoundary& sb)
{
    std::map<Edge, int> uses;
    for (const auto& f : sb.faces) {
        const auto fv = m.face(static_cast<std::size_t>(f.tet), f.local_face);
        for (int k = 0; k < 3; ++k) {
            Edge e{fv[k], fv[(k + 1) % 3]};
            if (e[0] > e[1]) std::swap(e[0], e[1]);
            uses[e] += 1;
        }
    }
    std::set<Edge> part;
    for (const auto& bf : m.boundary_faces()) {
        if (bf.tag != BoundaryTag::Part) continue;
        const auto fv = m.face(bf.tet, bf.local_face);
        for (int k = 0; k < 3; ++k) part.insert({std::min(fv[k], fv[(k + 1) % 3]), std::max(fv[k], fv[(k + 1) % 3])});
    }
    std::set<Edge> rim;
    bool admissible = true;
    for (const auto& [e, c] : uses)
        if (c % 2 == 1) {
            rim.insert(e);
            admissible = admissible && part.count(e) > 0;
        }
    return {rim, admissible};
}

VectorField field_from(const TetMesh& m, const std::function<Vec3(const Vec3&)>& f)
{
    VectorField v(m.num_tets());
    for (std::size_t t = 0; t < m.num_tets(); ++t) v[t] = f(m.centroid(t));
    return v;
}

AnchorSet anchors_of(const Scene& s, const FieldOptConfig& cfg = {})
{
    AnchorSet set;
    for (const auto& a : s.anchors) add_anchor(set, s.mesh, a, cfg);
    return set;
}

} // namespace

TEST(PointSingularities, MatchBruteForceScan)
{
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const TetMesh m = jittered_cube(5, 0.2, seed);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> d;
        ScalarField g(static_cast<Eigen::Index>(m.num_vertices()));
        for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = d(rng);
        const auto rings = rings_from_tets(m);
        const auto on_boundary = boundary_vertices(m);
        std::vector<std::tuple<std::int32_t, ExtremumKind, bool>> expected;
        for (std::size_t v = 0; v < m.num_vertices(); ++v) {
            bool is_max = true, is_min = true;
            for (auto u : rings[v]) {
                is_max = is_max && g[static_cast<Eigen::Index>(v)] > g[u];
                is_min = is_min && g[static_cast<Eigen::Index>(v)] < g[u];
            }
            if (is_max || is_min)
                expected.emplace_back(static_cast<std::int32_t>(v), is_max ? ExtremumKind::Max : ExtremumKind::Min, !on_boundary[v]);
        }
        std::vector<std::tuple<std::int32_t, ExtremumKind, bool>> got;
        for (const auto& p : detect_point_singularities(m, g)) got.emplace_back(p.vertex, p.kind, p.interior);
        std::sort(got.begin(), got.end());
        EXPECT_EQ(got, expected);
        EXPECT_FALSE(expected.empty());
    }
}

TEST(PointSingularities, ConstructedMaximumAndLinearField)
{
    const TetMesh m = cube_mesh(5);
    const Vec3 c(0.4, 0.6, 0.4);
    const ScalarField g = sample(m, [&](const Vec3& p) { return -(p - c).squaredNorm(); });
    const auto pts = interior_only(detect_point_singularities(m, g));
    ASSERT_EQ(pts.size(), 1u);
    EXPECT_LT((m.vertex(static_cast<std::size_t>(pts[0].vertex)) - c).norm(), 1e-12);
    EXPECT_EQ(pts[0].kind, ExtremumKind::Max);
    EXPECT_TRUE(interior_only(detect_point_singularities(m, sample(m, [](const Vec3& p) { return p.dot(Vec3(1, -2, 3)); })))
                    .empty());
}

TEST(PointSingularities, TiesAreReportedAsPlateaus)
{
    const TetMesh m = cube_mesh(5);
    const Vec3 c(0.4, 0.6, 0.4);
    ScalarField g = sample(m, [&](const Vec3& p) { return -(p - c).squaredNorm(); });
    std::int32_t top = 0;
    g.maxCoeff(&top);
    const auto nb = m.vertex_neighbors(static_cast<std::size_t>(top))[0];
    g[nb] = g[top];
    const PointScan scan = scan_point_singularities(m, g);
    EXPECT_TRUE(interior_only(scan.extrema).empty());
    EXPECT_NE(std::find(scan.plateaus.begin(), scan.plateaus.end(), top), scan.plateaus.end());
}

TEST(SingularBoundary, TwoTetsFacingAway)
{
    const TetMesh m({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(0, 0, -1)},
        {Tet{0, 1, 2, 3}, Tet{0, 2, 1, 4}});
    const auto sbs = detect_singular_boundary(m, {Vec3::UnitZ(), -Vec3::UnitZ()});
    ASSERT_EQ(sbs.size(), 1u);
    EXPECT_EQ(sbs[0].faces.size(), 1u);
    EXPECT_EQ(sbs[0].rim.size(), 3u);
    EXPECT_FALSE(sbs[0].admissible);
    EXPECT_TRUE(detect_singular_boundary(m, {Vec3::UnitZ(), Vec3::UnitZ()}).empty());
}

TEST(SingularBoundary, BarWithOpposingEndsMatchesFaceScan)
{
    const TetMesh m = grid_mesh(Vec3::Zero(), Vec3(5, 1, 1), {10, 2, 2});
    AnchorSet set;
    set.insert({0, Vec3::UnitX(), 1e5, false});
    set.insert({static_cast<std::int32_t>(m.num_tets() - 1), -Vec3::UnitX(), 1e5, false});
    // The middle nearly cancels, so the raw solve is used; the sign of v1 . v2 is unchanged by normalization.
    const VectorField v = solve_field_raw(m, set, {});
    const auto sbs = detect_singular_boundary(m, v);
    ASSERT_EQ(sbs.size(), 1u);
    std::set<std::pair<std::int32_t, std::int32_t>> got;
    for (const auto& f : sbs[0].faces) {
        EXPECT_LT(f.tet, f.other);
        EXPECT_EQ(m.neighbor(static_cast<std::size_t>(f.tet), f.local_face), f.other);
        got.insert({f.tet, f.other});
    }
    EXPECT_EQ(got, brute_conflicts(m, v));
    // The cut spans the cross-section: its area is the bar's 1 x 1 section.
    double area = 0.0;
    for (const auto& f : sbs[0].faces) area += face_area_vector(m, static_cast<std::size_t>(f.tet), f.local_face).norm();
    EXPECT_NEAR(area, 1.0, 0.5);
    const auto [rim, admissible] = brute_rim(m, sbs[0]);
    EXPECT_EQ(std::vector<Edge>(rim.begin(), rim.end()), sbs[0].rim);
    EXPECT_FALSE(admissible);
    EXPECT_FALSE(sbs[0].admissible);
}

TEST(SingularBoundary, ConflictSurfaceEndingMidDomainIsTypeFour)
{
    // Head-on streams across x = 0.5 for y < 0.5 only; above that the field is
    // +z, which conflicts with neither side. The rim runs through the interior.
    const Scene s = unit_cube_scene(6);
    const VectorField v = field_from(s.mesh, [](const Vec3& c) {
        if (c[1] > 0.5) return Vec3(Vec3::UnitZ());
        return Vec3(c[0] < 0.5 ? 1.0 : -1.0, 0.0, 0.0);
    });
    const auto sbs = detect_singular_boundary(s.mesh, v);
    ASSERT_EQ(sbs.size(), 1u);
    const auto [rim, admissible] = brute_rim(s.mesh, sbs[0]);
    EXPECT_FALSE(admissible);
    EXPECT_FALSE(sbs[0].admissible);
    EXPECT_EQ(std::vector<Edge>(rim.begin(), rim.end()), sbs[0].rim);
    EXPECT_EQ(code_of([&] {
        local_correction_type3(s.mesh, v, ScalarField::Zero(static_cast<Eigen::Index>(s.mesh.num_vertices())), sbs[0],
            {0.5}, 3, {});
    }),
        ErrorCode::InadmissibleBoundary);

    const SingularityResult r = classify_and_iterate(s.mesh, v, AnchorSet{}, {}, {});
    ASSERT_EQ(r.report.unresolved_boundaries.size(), 1u);
    EXPECT_FALSE(r.report.boundaries[r.report.unresolved_boundaries[0]].faces.empty());
    EXPECT_FALSE(r.report.clean());
}

TEST(SingularBoundary, ChannelStreamsFormAnAdmissibleCut)
{
    const Scene s = channel_scene(16, 4);
    const VectorField v = interpolate_field(s.mesh, anchors_of(s), {});
    const auto sbs = detect_singular_boundary(s.mesh, v);
    ASSERT_EQ(sbs.size(), 1u);
    const auto [rim, admissible] = brute_rim(s.mesh, sbs[0]);
    EXPECT_TRUE(admissible);
    EXPECT_TRUE(sbs[0].admissible);
    EXPECT_EQ(std::vector<Edge>(rim.begin(), rim.end()), sbs[0].rim);
}

TEST(TypeThree, ChannelReplacementLayersAreWatertightAndLocal)
{
    const Scene s = channel_scene(16, 4);
    const FieldOptConfig cfg;
    const VectorField v = interpolate_field(s.mesh, anchors_of(s), cfg);
    const ScalarField g = solve_poisson(s.mesh, v, BoundaryCondition::natural());
    const auto sb = detect_singular_boundary(s.mesh, v).at(0);
    const auto iso = layer_iso_values(g, {std::nullopt, 12});
    const auto broken = broken_iso_values(s.mesh, g, sb, iso);
    ASSERT_FALSE(broken.empty());

    const Type3Correction fix = local_correction_type3(s.mesh, v, g, sb, iso, 3, cfg);
    EXPECT_EQ(fix.broken_values, broken);
    EXPECT_GE(fix.ring_depth_used, 1);
    std::set<double> covered;
    for (const auto& layer : fix.replacement_layers) {
        covered.insert(layer.iso_value);
        EXPECT_TRUE(audit_layer(s.mesh, layer).watertight()) << "iso " << layer.iso_value;
    }
    EXPECT_EQ(std::vector<double>(covered.begin(), covered.end()), broken);

    // Vertices farther than ring_depth + 1 face steps from the conflict keep their values bit for bit.
    std::vector<int> dist(s.mesh.num_tets(), -1);
    std::deque<std::int32_t> q;
    for (const auto& f : sb.faces)
        for (auto t : {f.tet, f.other})
            if (dist[t] < 0) dist[t] = 0, q.push_back(t);
    while (!q.empty()) {
        const auto t = q.front();
        q.pop_front();
        for (auto nb : s.mesh.neighbors(static_cast<std::size_t>(t)))
            if (nb >= 0 && dist[nb] < 0) dist[nb] = dist[t] + 1, q.push_back(nb);
    }
    std::vector<bool> near(s.mesh.num_vertices(), false);
    for (std::size_t t = 0; t < s.mesh.num_tets(); ++t)
        if (dist[t] <= fix.ring_depth_used + 1)
            for (auto x : s.mesh.tet(t)) near[x] = true;
    std::size_t far = 0;
    for (int pass = 0; pass < 2; ++pass)
        for (std::size_t x = 0; x < s.mesh.num_vertices(); ++x)
            if (!near[x]) {
                ++far;
                EXPECT_EQ(fix.pass_scalar[pass][static_cast<Eigen::Index>(x)], g[static_cast<Eigen::Index>(x)]);
            }
    EXPECT_GT(far, 0u);
}

TEST(TypeOne, BallSinkResolvedWithinThreeRounds)
{
    const Scene s = ball_scene(10);
    const FieldOptConfig cfg;
    const AnchorSet anchors = anchors_of(s, cfg);
    const VectorField v = interpolate_field(s.mesh, anchors, cfg);
    ResolutionDirective up;
    up.anchor_direction = Vec3::UnitZ();
    SingularityOptions opts;
    opts.max_rounds = 3;
    const SingularityResult r = classify_and_iterate(s.mesh, v, anchors, {up}, cfg, opts);
    EXPECT_FALSE(r.report.found_points.empty());
    EXPECT_LE(r.report.rounds, 3);
    EXPECT_TRUE(r.report.remaining_points.empty());
    // Independent full scan of the emitted scalar.
    EXPECT_TRUE(interior_only(detect_point_singularities(s.mesh, r.scalar)).empty());
    EXPECT_GT(r.anchors.critical_count(), 0u);
}

TEST(TypeOne, ResolveAddsCriticalAnchorsAroundTheVertex)
{
    const TetMesh m = cube_mesh(4);
    AnchorSet set;
    set.insert({0, Vec3::UnitZ(), 1e5, false});
    const VectorField v = interpolate_field(m, set, {});
    const std::int32_t vertex = 31;
    ASSERT_FALSE(m.is_boundary_vertex(vertex));
    const auto [field, anchors] = resolve_type1(m, v, set, {vertex, ExtremumKind::Max, true}, Vec3::UnitX(), {});
    for (auto t : m.vertex_tets(vertex)) {
        ASSERT_NE(anchors.find(t), nullptr);
        EXPECT_TRUE(anchors.find(t)->critical);
        EXPECT_LT((field[t] - Vec3::UnitX()).norm(), 1e-3);
    }
}

TEST(Classify, CleanLinearFieldTakesOneRound)
{
    const Scene s = unit_cube_scene(4);
    const SingularityResult r = classify_and_iterate(s.mesh, constant_field(s.mesh, Vec3::UnitZ()), AnchorSet{}, {}, {});
    EXPECT_EQ(r.report.rounds, 1);
    EXPECT_TRUE(r.report.found_points.empty());
    EXPECT_TRUE(r.report.boundaries.empty());
    EXPECT_TRUE(r.report.clean());
}

TEST(SourceSurface, HullAnchorsPointOutwardWithoutOpposingPairs)
{
    const Scene s = make_scene("cavity", 0.6);
    const TriangleMesh hull = convex_hull_source(s.part);
    const AnchorSet set = orient_source_surface(hull, s.mesh);
    ASSERT_FALSE(set.empty());
    const Vec3 centre = [&] {
        Vec3 c = Vec3::Zero();
        for (const auto& p : hull.vertices) c += p;
        return Vec3(c / static_cast<double>(hull.vertices.size()));
    }();
    for (const auto& [t, a] : set) {
        EXPECT_GT(a.direction.dot(s.mesh.centroid(static_cast<std::size_t>(t)) - centre), 0.0);
        for (auto nb : s.mesh.neighbors(static_cast<std::size_t>(t)))
            if (const Anchor* b = nb >= 0 ? set.find(nb) : nullptr) EXPECT_GE(a.direction.dot(b->direction), 0.0);
    }
}

TEST(SourceSurface, OutsideTheDomainGivesNothing)
{
    std::vector<Vec3> pts;
    for (int i = 0; i < 8; ++i) pts.emplace_back(5 + (i & 1), (i >> 1) & 1, (i >> 2) & 1);
    EXPECT_TRUE(orient_source_surface(convex_hull(pts), cube_mesh(3)).empty());
}

TEST(SourceSurface, SphereInsideAThickShellLeavesNoInteriorExtrema)
{
    const TetMesh shell = labeled_grid_mesh(Vec3::Constant(-1), Vec3::Constant(1), {12, 12, 12},
        [](const Vec3& c) { return c.norm() < 0.3 ? CellLabel::Outside : CellLabel::Domain; });
    std::mt19937_64 rng(6);
    std::normal_distribution<double> d;
    std::vector<Vec3> pts;
    for (int i = 0; i < 300; ++i) pts.push_back(0.6 * Vec3(d(rng), d(rng), d(rng)).normalized());
    const AnchorSet set = orient_source_surface(convex_hull(pts), shell);
    ASSERT_FALSE(set.empty());
    const VectorField v = interpolate_field(shell, set, {});
    const ScalarField g = solve_poisson(shell, v, BoundaryCondition::natural());
    EXPECT_TRUE(interior_only(detect_point_singularities(shell, g)).empty());
}

TEST(SourceSurface, RejectsBadTopology)
{
    const TetMesh m = cube_mesh(2);
    TriangleMesh fan{{Vec3(0.5, 0.5, 0.5), Vec3(0.9, 0.5, 0.5), Vec3(0.5, 0.9, 0.5), Vec3(0.5, 0.5, 0.9), Vec3(0.5, 0.1, 0.1)},
        {{0, 1, 2}, {1, 0, 3}, {0, 1, 4}}};
    EXPECT_EQ(code_of([&] { orient_source_surface(fan, m); }), ErrorCode::NonManifoldSource);
    TriangleMesh flipped{{Vec3(0.2, 0.2, 0.5), Vec3(0.8, 0.2, 0.5), Vec3(0.8, 0.8, 0.5), Vec3(0.2, 0.8, 0.5)},
        {{0, 1, 2}, {0, 2, 3}}};
    EXPECT_NO_THROW(orient_source_surface(flipped, m));
    flipped.triangles[1] = {0, 3, 2};
    EXPECT_EQ(code_of([&] { orient_source_surface(flipped, m); }), ErrorCode::UnorientedSource);
}

TEST(Directive, ValidationAndNames)
{
    ResolutionDirective d;
    EXPECT_EQ(code_of([&] { d.validate(); }), ErrorCode::InvalidArgument);
    d.anchor_direction = Vec3::Zero();
    EXPECT_EQ(code_of([&] { d.validate(); }), ErrorCode::InvalidArgument);
    d.anchor_direction = Vec3::UnitZ();
    EXPECT_NO_THROW(d.validate());
    d.action = DirectiveAction::LocalCorrection;
    d.ring_depth = 0;
    EXPECT_EQ(code_of([&] { d.validate(); }), ErrorCode::InvalidArgument);
    for (auto a : {DirectiveAction::AddAnchor, DirectiveAction::LocalCorrection, DirectiveAction::ReorientSource})
        EXPECT_EQ(parse_directive_action(to_string(a)), a);
    EXPECT_FALSE(parse_directive_action("EXPLODE").has_value());
}
