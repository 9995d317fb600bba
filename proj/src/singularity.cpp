#include "peel/singularity.hpp"

#include "peel/error.hpp"
#include "peel/log.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace peel {

std::string_view to_string(ExtremumKind k)
{
    return k == ExtremumKind::Min ? "MIN" : "MAX";
}

std::string_view to_string(DirectiveAction a)
{
    switch (a) {
    case DirectiveAction::AddAnchor: return "ADD_ANCHOR";
    case DirectiveAction::LocalCorrection: return "LOCAL_CORRECTION";
    case DirectiveAction::ReorientSource: return "REORIENT_SOURCE";
    }
    return "ADD_ANCHOR";
}

std::optional<DirectiveAction> parse_directive_action(std::string_view s)
{
    if (s == "ADD_ANCHOR" || s == "add_anchor") return DirectiveAction::AddAnchor;
    if (s == "LOCAL_CORRECTION" || s == "local_correction") return DirectiveAction::LocalCorrection;
    if (s == "REORIENT_SOURCE" || s == "reorient_source") return DirectiveAction::ReorientSource;
    return std::nullopt;
}

void ResolutionDirective::validate() const
{
    if (action == DirectiveAction::AddAnchor) {
        if (!anchor_direction) throw Error(ErrorCode::InvalidArgument, "ADD_ANCHOR needs an anchor direction");
        if (!(anchor_direction->norm() > 1e-12))
            throw Error(ErrorCode::InvalidArgument, "anchor direction must be non-zero");
    }
    if (ring_depth < 1) throw Error(ErrorCode::InvalidArgument, "ring depth must be at least 1");
}

// ---------------------------------------------------------------------------
// Detection

PointScan scan_point_singularities(const TetMesh& mesh, const ScalarField& g)
{
    if (static_cast<std::size_t>(g.size()) != mesh.num_vertices())
        throw Error(ErrorCode::InvalidArgument, "scalar field size does not match vertex count");
    PointScan scan;
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
        const auto ring = mesh.vertex_neighbors(v);
        if (ring.empty()) continue;
        bool above = true, below = true, not_below = true, not_above = true;
        for (auto j : ring) {
            above = above && g[v] > g[j];
            below = below && g[v] < g[j];
            not_below = not_below && g[v] >= g[j];
            not_above = not_above && g[v] <= g[j];
        }
        if (above || below) {
            scan.extrema.push_back({static_cast<std::int32_t>(v), above ? ExtremumKind::Max : ExtremumKind::Min,
                !mesh.is_boundary_vertex(v)});
        } else if (not_below || not_above) {
            scan.plateaus.push_back(static_cast<std::int32_t>(v));
        }
    }
    if (!scan.plateaus.empty())
        log::warn(std::to_string(scan.plateaus.size()) + " plateau vertices (tied extrema) not reported as singular");
    return scan;
}

std::vector<PointSingularity> detect_point_singularities(const TetMesh& mesh, const ScalarField& g)
{
    return scan_point_singularities(mesh, g).extrema;
}

std::vector<PointSingularity> interior_only(const std::vector<PointSingularity>& points)
{
    std::vector<PointSingularity> out;
    std::copy_if(points.begin(), points.end(), std::back_inserter(out), [](const auto& p) { return p.interior; });
    return out;
}

namespace {

Edge make_edge(std::int32_t a, std::int32_t b)
{
    return a < b ? Edge{a, b} : Edge{b, a};
}

std::array<std::int32_t, 3> face_vertices(const TetMesh& mesh, const FaceRef& f)
{
    return mesh.face(static_cast<std::size_t>(f.tet), f.local_face);
}

std::set<Edge> part_edges(const TetMesh& mesh)
{
    std::set<Edge> out;
    for (const auto& bf : mesh.boundary_faces()) {
        if (bf.tag != BoundaryTag::Part) continue;
        const auto f = mesh.face(bf.tet, bf.local_face);
        for (int k = 0; k < 3; ++k) out.insert(make_edge(f[k], f[(k + 1) % 3]));
    }
    return out;
}

} // namespace

std::vector<SingularBoundary> detect_singular_boundary(
    const TetMesh& mesh, const VectorField& v, double conflict_threshold)
{
    if (v.size() != mesh.num_tets())
        throw Error(ErrorCode::InvalidArgument, "vector field size does not match tet count");
    std::vector<FaceRef> faces;
    for (std::size_t t = 0; t < mesh.num_tets(); ++t) {
        for (int f = 0; f < 4; ++f) {
            const auto nb = mesh.neighbor(t, f);
            if (nb <= static_cast<std::int32_t>(t)) continue;
            if (v[t].dot(v[nb]) < conflict_threshold) faces.push_back({static_cast<std::int32_t>(t), f, nb});
        }
    }
    if (faces.empty()) return {};

    // Union-find over faces sharing an edge.
    std::vector<std::size_t> parent(faces.size());
    std::iota(parent.begin(), parent.end(), 0);
    const auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::map<Edge, std::size_t> first_face;
    for (std::size_t i = 0; i < faces.size(); ++i) {
        const auto fv = face_vertices(mesh, faces[i]);
        for (int k = 0; k < 3; ++k) {
            auto [it, fresh] = first_face.emplace(make_edge(fv[k], fv[(k + 1) % 3]), i);
            if (!fresh) {
                const auto a = find(i), b = find(it->second);
                if (a != b) parent[std::max(a, b)] = std::min(a, b);
            }
        }
    }

    const auto on_part = part_edges(mesh);
    std::map<std::size_t, SingularBoundary> comps; // keyed by root = smallest face index
    for (std::size_t i = 0; i < faces.size(); ++i) comps[find(i)].faces.push_back(faces[i]);
    std::vector<SingularBoundary> out;
    for (auto& [root, sb] : comps) {
        std::map<Edge, int> uses;
        for (const auto& f : sb.faces) {
            const auto fv = face_vertices(mesh, f);
            for (int k = 0; k < 3; ++k) uses[make_edge(fv[k], fv[(k + 1) % 3])] += 1;
        }
        for (const auto& [e, n] : uses)
            if (n % 2 == 1) sb.rim.push_back(e);
        sb.admissible = std::all_of(sb.rim.begin(), sb.rim.end(), [&](const Edge& e) { return on_part.count(e) > 0; });
        out.push_back(std::move(sb));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Repair

std::pair<VectorField, AnchorSet> resolve_type1(const TetMesh& mesh, const VectorField& field,
    const AnchorSet& anchors, const PointSingularity& singular, const Vec3& direction, const FieldOptConfig& cfg)
{
    if (singular.vertex < 0 || static_cast<std::size_t>(singular.vertex) >= mesh.num_vertices())
        throw Error(ErrorCode::InvalidArgument, "singular vertex out of range");
    if (field.size() != mesh.num_tets())
        throw Error(ErrorCode::InvalidArgument, "vector field size does not match tet count");
    AnchorSet out = anchors;
    AnchorSpec spec;
    spec.target = AnchorTarget::Vertex;
    spec.id = singular.vertex;
    spec.direction = direction;
    spec.critical = true;
    add_anchor(out, mesh, spec, cfg);
    return {interpolate_field(mesh, out, cfg), std::move(out)};
}

AnchorSet orient_source_surface(const TriangleMesh& source, const TetMesh& mesh, double weight)
{
    std::map<Edge, int> undirected;
    std::set<std::pair<std::int32_t, std::int32_t>> directed;
    for (const auto& t : source.triangles) {
        for (int k = 0; k < 3; ++k) {
            const auto a = t[k], b = t[(k + 1) % 3];
            if (++undirected[make_edge(a, b)] > 2)
                throw Error(ErrorCode::NonManifoldSource, "source edge shared by more than two triangles");
            if (!directed.insert({a, b}).second)
                throw Error(ErrorCode::UnorientedSource, "neighbouring source triangles disagree in orientation");
        }
    }

    // Refine to about the mean tet edge length so thin tets next to the source are hit.
    const double h = std::cbrt(6.0 * mesh.total_volume() / static_cast<double>(std::max<std::size_t>(1, mesh.num_tets())));
    const PointLocator locator(mesh);
    std::map<std::int32_t, Vec3> sums;
    for (std::size_t t = 0; t < source.triangles.size(); ++t) {
        const auto& tri = source.triangles[t];
        const Vec3& a = source.vertices[tri[0]];
        const Vec3& b = source.vertices[tri[1]];
        const Vec3& c = source.vertices[tri[2]];
        const Vec3 av = source.area_vector(t);
        if (!(av.norm() > 0.0)) continue;
        const double longest = std::max({(b - a).norm(), (c - b).norm(), (a - c).norm()});
        const int k = std::clamp(static_cast<int>(std::ceil(longest / h)), 1, 64);
        const Vec3 piece = av / static_cast<double>(k * k);
        const Vec3 du = (b - a) / k;
        const Vec3 dv = (c - a) / k;
        for (int i = 0; i < k; ++i) {
            for (int j = 0; i + j < k; ++j) {
                // upward sub-triangle, then the downward one next to it
                std::array<Vec3, 2> centers{a + (i + 1.0 / 3.0) * du + (j + 1.0 / 3.0) * dv,
                    a + (i + 2.0 / 3.0) * du + (j + 2.0 / 3.0) * dv};
                const int count = i + j + 1 < k ? 2 : 1;
                for (int s = 0; s < count; ++s)
                    if (auto tet = locator.locate(centers[s])) {
                        auto [it, fresh] = sums.emplace(*tet, Vec3::Zero());
                        it->second += piece;
                    }
            }
        }
    }

    AnchorSet out;
    std::size_t dropped = 0;
    for (const auto& [tet, sum] : sums) {
        if (!(sum.norm() > 0.0)) continue;
        const Vec3 dir = sum.normalized();
        bool opposed = false;
        for (auto nb : mesh.neighbors(tet)) {
            if (nb < 0) continue;
            if (const Anchor* other = out.find(nb); other && other->direction.dot(dir) < 0.0) opposed = true;
        }
        if (opposed) {
            ++dropped;
            continue;
        }
        out.insert({tet, dir, weight, false});
    }
    if (dropped > 0) log::warn(std::to_string(dropped) + " source anchors dropped as opposing a neighbour");
    if (out.empty()) log::warn("source surface does not reach into the domain; no anchors placed");
    return out;
}

std::vector<double> broken_iso_values(
    const TetMesh& mesh, const ScalarField& g, const SingularBoundary& sb, const std::vector<double>& iso_values)
{
    std::vector<double> out;
    for (double c : iso_values) {
        for (const auto& f : sb.faces) {
            const auto fv = face_vertices(mesh, f);
            const double lo = std::min({g[fv[0]], g[fv[1]], g[fv[2]]});
            const double hi = std::max({g[fv[0]], g[fv[1]], g[fv[2]]});
            if (lo < c && c < hi) {
                out.push_back(c);
                break;
            }
        }
    }
    return out;
}

namespace {

/// Tets within `depth` face steps of the seeds without crossing a conflicted face.
std::vector<std::int32_t> grow_ring(const TetMesh& mesh, const std::vector<std::int32_t>& seeds,
    const std::set<std::pair<std::int32_t, std::int32_t>>& blocked, int depth)
{
    std::vector<int> dist(mesh.num_tets(), -1);
    std::vector<std::int32_t> frontier;
    for (auto s : seeds)
        if (dist[s] < 0) {
            dist[s] = 1;
            frontier.push_back(s);
        }
    std::vector<std::int32_t> ring = frontier;
    for (int d = 2; d <= depth; ++d) {
        std::vector<std::int32_t> next;
        for (auto t : frontier)
            for (auto nb : mesh.neighbors(t)) {
                if (nb < 0 || dist[nb] >= 0) continue;
                if (blocked.count({std::min(t, nb), std::max(t, nb)})) continue;
                dist[nb] = d;
                next.push_back(nb);
            }
        ring.insert(ring.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
    std::sort(ring.begin(), ring.end());
    return ring;
}

/// Re-smooths the ring with the vectors just outside held fixed.
void smooth_ring(const TetMesh& mesh, VectorField& v, const std::vector<std::int32_t>& ring, double alpha, double pull)
{
    std::vector<std::int32_t> index(mesh.num_tets(), -1);
    for (std::size_t i = 0; i < ring.size(); ++i) index[ring[i]] = static_cast<std::int32_t>(i);
    const auto n = static_cast<Eigen::Index>(ring.size());
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 3);
    for (std::size_t i = 0; i < ring.size(); ++i) {
        const auto t = ring[i];
        int count = 0;
        for (auto nb : mesh.neighbors(t)) count += nb >= 0;
        trips.emplace_back(i, i, 1.0);
        for (auto nb : mesh.neighbors(t)) {
            if (nb < 0) continue;
            if (index[nb] >= 0) trips.emplace_back(i, index[nb], -1.0 / count);
            else rhs.row(static_cast<Eigen::Index>(i)) += v[nb].transpose() / count;
        }
    }
    SparseMatrix lu(n, n);
    lu.setFromTriplets(trips.begin(), trips.end());
    SparseMatrix a = alpha * alpha * SparseMatrix(lu.transpose() * lu);
    Eigen::MatrixXd b = alpha * alpha * (lu.transpose() * rhs);
    for (Eigen::Index i = 0; i < n; ++i) {
        a.coeffRef(i, i) += pull * pull;
        b.row(i) += pull * pull * v[ring[static_cast<std::size_t>(i)]].transpose();
    }
    Eigen::SimplicialLDLT<SparseMatrix> solver(a);
    if (solver.info() != Eigen::Success) throw Error(ErrorCode::SolverFailure, "local smoothing system is singular");
    const Eigen::MatrixXd x = solver.solve(b);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3 row = x.row(i).transpose();
        if (!(row.norm() > 1e-12))
            throw Error(ErrorCode::ZeroVectorAfterSolve, "tet " + std::to_string(ring[static_cast<std::size_t>(i)]));
        v[ring[static_cast<std::size_t>(i)]] = row.normalized();
    }
}

/// Poisson restricted to the ring tets, Neumann on the ring's free surface and
/// Dirichlet at `pinned` vertices (their current value in g).
void local_poisson(const TetMesh& mesh, const VectorField& v, ScalarField& g, const std::vector<std::int32_t>& ring,
    const std::vector<std::uint8_t>& pinned)
{
    std::map<std::int32_t, std::int32_t> free_index;
    for (auto t : ring)
        for (auto x : mesh.tet(t))
            if (!pinned[x]) free_index.emplace(x, 0);
    if (free_index.empty()) return;
    std::int32_t next = 0;
    for (auto& [x, i] : free_index) i = next++;
    const auto n = static_cast<Eigen::Index>(free_index.size());
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (auto t : ring) {
        const auto& tet = mesh.tet(t);
        const auto grads = hat_gradients(mesh, static_cast<std::size_t>(t));
        const double vol = mesh.volume(static_cast<std::size_t>(t));
        for (int i = 0; i < 4; ++i) {
            auto fi = free_index.find(tet[i]);
            if (fi == free_index.end()) continue;
            rhs[fi->second] += vol * grads.row(i).dot(v[t]);
            for (int j = 0; j < 4; ++j) {
                const double k = vol * grads.row(i).dot(grads.row(j));
                auto fj = free_index.find(tet[j]);
                if (fj != free_index.end()) trips.emplace_back(fi->second, fj->second, k);
                else rhs[fi->second] -= k * g[tet[j]];
            }
        }
    }
    SparseMatrix a(n, n);
    a.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<SparseMatrix> solver(a);
    if (solver.info() != Eigen::Success)
        throw Error(ErrorCode::SolverFailure, "local Poisson system is singular (no pinned vertex reachable)");
    const Eigen::VectorXd x = solver.solve(rhs);
    for (const auto& [vert, i] : free_index) g[vert] = x[i];
}

/// Connected pieces of a layer (through shared vertices) with a triangle in the zone.
IsoSurface components_touching(const IsoSurface& s, const std::vector<std::uint8_t>& zone)
{
    std::vector<std::size_t> parent(s.vertices.size());
    std::iota(parent.begin(), parent.end(), 0);
    const auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& t : s.triangles)
        for (int k = 1; k < 3; ++k) {
            const auto a = find(t[0]), b = find(t[k]);
            if (a != b) parent[std::max(a, b)] = std::min(a, b);
        }
    std::set<std::size_t> hit;
    for (std::size_t i = 0; i < s.triangles.size(); ++i)
        if (zone[s.source_tets[i]]) hit.insert(find(s.triangles[i][0]));

    IsoSurface out;
    out.iso_value = s.iso_value;
    std::vector<std::int32_t> remap(s.vertices.size(), -1);
    for (std::size_t i = 0; i < s.triangles.size(); ++i) {
        if (!hit.count(find(s.triangles[i][0]))) continue;
        Tri tri{};
        for (int k = 0; k < 3; ++k) {
            auto& r = remap[s.triangles[i][k]];
            if (r < 0) {
                r = static_cast<std::int32_t>(out.vertices.size());
                out.vertices.push_back(s.vertices[s.triangles[i][k]]);
                out.vertex_edges.push_back(s.vertex_edges[s.triangles[i][k]]);
            }
            tri[k] = r;
        }
        out.triangles.push_back(tri);
        out.source_tets.push_back(s.source_tets[i]);
    }
    return out;
}

} // namespace

Type3Correction local_correction_type3(const TetMesh& mesh, const VectorField& field, const ScalarField& g,
    const SingularBoundary& sb, const std::vector<double>& iso_values, int ring_depth, const FieldOptConfig& cfg,
    const BoundaryCondition& bc)
{
    (void)bc; // the local solve only ever pins values already satisfying the global condition
    if (!sb.admissible) throw Error(ErrorCode::InadmissibleBoundary, "rim leaves the part boundary (Type IV)");
    if (sb.faces.empty()) throw Error(ErrorCode::InvalidArgument, "empty singular boundary");
    if (ring_depth < 1) throw Error(ErrorCode::InvalidArgument, "ring depth must be at least 1");

    // Split the two streams: of each conflicted pair, the tet agreeing more
    // with the reference direction goes to side 0.
    const Vec3 ref = field[sb.faces.front().tet];
    std::set<std::int32_t> seed_set[2];
    std::set<std::pair<std::int32_t, std::int32_t>> blocked;
    for (const auto& f : sb.faces) {
        const bool first_is_0 = field[f.tet].dot(ref) >= field[f.other].dot(ref);
        seed_set[first_is_0 ? 0 : 1].insert(f.tet);
        seed_set[first_is_0 ? 1 : 0].insert(f.other);
        blocked.insert({std::min(f.tet, f.other), std::max(f.tet, f.other)});
    }
    std::vector<std::int32_t> seeds[2];
    for (int s = 0; s < 2; ++s) {
        for (auto t : seed_set[s])
            if (!seed_set[1 - s].count(t)) seeds[s].push_back(t);
    }

    std::vector<std::uint8_t> off_part(mesh.num_tets(), 0);
    for (const auto& bf : mesh.boundary_faces())
        if (bf.tag != BoundaryTag::Part) off_part[bf.tet] = 1;

    std::vector<std::int32_t> rings[2];
    int depth = ring_depth;
    for (;; --depth) {
        if (depth < 1)
            throw Error(ErrorCode::RingTouchesDomainBoundary, "even a one-tet ring reaches a non-part boundary face");
        bool ok = true;
        for (int s = 0; s < 2 && ok; ++s) {
            rings[s] = grow_ring(mesh, seeds[s], blocked, depth);
            for (auto t : rings[s]) ok = ok && !off_part[t] && !seed_set[1 - s].count(t);
        }
        if (ok) break;
        log::info("local correction ring of depth " + std::to_string(depth) + " too large, retrying");
    }

    Type3Correction out;
    out.ring_depth_used = depth;
    out.broken_values = broken_iso_values(mesh, g, sb, iso_values);
    const double pull = cfg.alpha;

    std::vector<std::uint8_t> zone(mesh.num_tets(), 0);
    for (int s = 0; s < 2; ++s)
        for (auto t : rings[s]) {
            zone[t] = 1;
            for (auto nb : mesh.neighbors(t))
                if (nb >= 0) zone[nb] = 1;
        }

    for (int s = 0; s < 2; ++s) {
        const auto& ring = rings[s];
        std::vector<std::uint8_t> in_ring(mesh.num_tets(), 0);
        for (auto t : ring) in_ring[t] = 1;

        VectorField v = field;
        for (auto t : ring) v[t] = -field[t];
        smooth_ring(mesh, v, ring, cfg.alpha, pull);

        // The other side: tets reachable from its seeds without entering the ring.
        std::vector<std::uint8_t> other(mesh.num_tets(), 0);
        std::vector<std::int32_t> stack(seeds[1 - s].begin(), seeds[1 - s].end());
        for (auto t : stack) other[t] = 1;
        while (!stack.empty()) {
            const auto t = stack.back();
            stack.pop_back();
            for (auto nb : mesh.neighbors(t)) {
                if (nb < 0 || other[nb] || in_ring[nb]) continue;
                other[nb] = 1;
                stack.push_back(nb);
            }
        }
        std::vector<std::uint8_t> pinned(mesh.num_vertices(), 1);
        for (auto t : ring)
            for (auto x : mesh.tet(t)) pinned[x] = 0;
        for (std::size_t t = 0; t < mesh.num_tets(); ++t)
            if (other[t])
                for (auto x : mesh.tet(t)) pinned[x] = 1;

        ScalarField gs = g;
        local_poisson(mesh, v, gs, ring, pinned);
        for (double c : out.broken_values) {
            if (!(gs.minCoeff() < c && c < gs.maxCoeff())) continue;
            IsoSurface piece = components_touching(extract_isosurface(mesh, gs, c), zone);
            if (!piece.triangles.empty()) out.replacement_layers.push_back(std::move(piece));
        }
        out.pass_scalar[s] = std::move(gs);
    }
    std::stable_sort(out.replacement_layers.begin(), out.replacement_layers.end(),
        [](const IsoSurface& a, const IsoSurface& b) { return a.iso_value < b.iso_value; });
    return out;
}

// ---------------------------------------------------------------------------
// Processing loop

SingularityResult classify_and_iterate(const TetMesh& mesh, const VectorField& field, const AnchorSet& anchors,
    const std::vector<ResolutionDirective>& directives, const FieldOptConfig& cfg, const SingularityOptions& opts)
{
    for (const auto& d : directives) d.validate();
    if (opts.max_rounds < 1) throw Error(ErrorCode::InvalidArgument, "max_rounds must be at least 1");

    SingularityResult res;
    res.field = field;
    res.anchors = anchors;
    auto& rep = res.report;
    const PoissonContext ctx(mesh);
    std::vector<std::uint8_t> consumed(directives.size(), 0);

    std::vector<PointSingularity> interior;
    for (int round = 1; round <= opts.max_rounds; ++round) {
        rep.rounds = round;
        res.scalar = ctx.solve(res.field, opts.bc);
        const PointScan scan = scan_point_singularities(mesh, res.scalar);
        interior = interior_only(scan.extrema);
        rep.plateaus = scan.plateaus;
        rep.boundary_points.clear();
        for (const auto& p : scan.extrema)
            if (!p.interior) rep.boundary_points.push_back(p);
        if (round == 1) rep.found_points = interior;
        if (interior.empty()) break;

        bool applied = false;
        for (std::size_t i = 0; i < directives.size(); ++i) {
            const auto& d = directives[i];
            // Vertex-targeted directives are used once; the others keep
            // applying to whatever singularity the previous repair left behind.
            if (consumed[i] || d.action != DirectiveAction::AddAnchor) continue;
            std::vector<PointSingularity> targets;
            if (d.vertex) {
                for (const auto& p : interior)
                    if (p.vertex == *d.vertex) targets.push_back(p);
            } else if (d.near) {
                auto best = std::min_element(interior.begin(), interior.end(), [&](const auto& a, const auto& b) {
                    return (mesh.vertex(a.vertex) - *d.near).squaredNorm() < (mesh.vertex(b.vertex) - *d.near).squaredNorm();
                });
                targets.push_back(*best);
            } else {
                targets = interior;
            }
            if (targets.empty()) continue;
            for (const auto& p : targets) {
                AnchorSpec spec;
                spec.target = AnchorTarget::Vertex;
                spec.id = p.vertex;
                spec.direction = *d.anchor_direction;
                spec.critical = true;
                add_anchor(res.anchors, mesh, spec, cfg);
            }
            consumed[i] = d.vertex.has_value();
            applied = true;
            rep.notes.push_back("round " + std::to_string(round) + ": anchored " + std::to_string(targets.size())
                + " point singularities");
        }
        if (!applied) {
            rep.notes.push_back("interior point singularities remain and no directive applies");
            break;
        }
        res.field = interpolate_field(mesh, res.anchors, cfg);
        if (round == opts.max_rounds) {
            res.scalar = ctx.solve(res.field, opts.bc);
            interior = interior_only(detect_point_singularities(mesh, res.scalar));
        }
    }
    rep.remaining_points = interior;

    for (const auto& d : directives)
        if (d.action == DirectiveAction::ReorientSource)
            rep.notes.push_back("REORIENT_SOURCE applies while seeding from a source surface; ignored here");

    int ring_depth = 3;
    for (const auto& d : directives)
        if (d.action == DirectiveAction::LocalCorrection) ring_depth = d.ring_depth;

    rep.boundaries = detect_singular_boundary(mesh, res.field, opts.conflict_threshold);
    for (std::size_t i = 0; i < rep.boundaries.size(); ++i) {
        const auto& sb = rep.boundaries[i];
        if (!sb.admissible) {
            rep.unresolved_boundaries.push_back(i);
            rep.notes.push_back("singular boundary " + std::to_string(i) + " is Type IV (" + std::to_string(sb.rim.size())
                + " rim edges off the part); needs a new directive");
            continue;
        }
        if (opts.iso_values.empty()) continue;
        try {
            rep.corrections.push_back(
                local_correction_type3(mesh, res.field, res.scalar, sb, opts.iso_values, ring_depth, cfg, opts.bc));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::RingTouchesDomainBoundary) throw;
            rep.unresolved_boundaries.push_back(i);
            rep.notes.push_back("singular boundary " + std::to_string(i) + ": " + e.what());
        }
    }
    if (!rep.clean()) log::warn("singularities left unresolved; see the report");
    return res;
}

} // namespace peel
