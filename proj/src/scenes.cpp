#include "peel/scenes.hpp"

#include "peel/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace peel {

namespace {

constexpr std::array<std::array<int, 3>, 6> kAxisOrders = {{
    {0, 1, 2},
    {0, 2, 1},
    {1, 0, 2},
    {1, 2, 0},
    {2, 0, 1},
    {2, 1, 0},
}};

} // namespace

TetMesh labeled_grid_mesh(const Vec3& lo, const Vec3& hi, const std::array<int, 3>& cells,
    const std::function<CellLabel(const Vec3& center)>& label)
{
    for (int k = 0; k < 3; ++k)
        if (cells[k] < 1 || !(hi[k] > lo[k])) throw Error(ErrorCode::InvalidArgument, "bad grid extent");
    const Vec3 h = (hi - lo).cwiseQuotient(Vec3(cells[0], cells[1], cells[2]));
    const auto cell_center = [&](int i, int j, int k) {
        return Vec3(lo + h.cwiseProduct(Vec3(i + 0.5, j + 0.5, k + 0.5)));
    };
    std::vector<CellLabel> labels(static_cast<std::size_t>(cells[0]) * cells[1] * cells[2]);
    const auto cell_id = [&](int i, int j, int k) {
        return static_cast<std::size_t>(i) + static_cast<std::size_t>(cells[0]) * (j + static_cast<std::size_t>(cells[1]) * k);
    };
    for (int k = 0; k < cells[2]; ++k)
        for (int j = 0; j < cells[1]; ++j)
            for (int i = 0; i < cells[0]; ++i) labels[cell_id(i, j, k)] = label(cell_center(i, j, k));

    const int px = cells[0] + 1;
    const int py = cells[1] + 1;
    std::vector<std::int32_t> remap(static_cast<std::size_t>(px) * py * (cells[2] + 1), -1);
    std::vector<Vec3> vertices;
    std::vector<Tet> tets;
    const auto vid = [&](int i, int j, int k) {
        const std::size_t key = static_cast<std::size_t>(i) + static_cast<std::size_t>(px) * (j + static_cast<std::size_t>(py) * k);
        if (remap[key] < 0) {
            remap[key] = static_cast<std::int32_t>(vertices.size());
            vertices.push_back(lo + h.cwiseProduct(Vec3(i, j, k)));
        }
        return remap[key];
    };
    for (int k = 0; k < cells[2]; ++k) {
        for (int j = 0; j < cells[1]; ++j) {
            for (int i = 0; i < cells[0]; ++i) {
                if (labels[cell_id(i, j, k)] != CellLabel::Domain) continue;
                for (const auto& order : kAxisOrders) {
                    std::array<int, 3> c{i, j, k};
                    Tet tet{};
                    tet[0] = vid(c[0], c[1], c[2]);
                    for (int s = 0; s < 3; ++s) {
                        ++c[order[s]];
                        tet[s + 1] = vid(c[0], c[1], c[2]);
                    }
                    tets.push_back(tet);
                }
            }
        }
    }
    if (tets.empty()) throw Error(ErrorCode::EmptyMesh, "no cell is labelled as domain");
    TetMesh mesh(std::move(vertices), std::move(tets));

    const double probe = 0.25 * h.minCoeff();
    for (std::size_t b = 0; b < mesh.boundary_faces().size(); ++b) {
        const auto& bf = mesh.boundary_faces()[b];
        const auto f = mesh.face(bf.tet, bf.local_face);
        const Vec3 c = (mesh.vertex(f[0]) + mesh.vertex(f[1]) + mesh.vertex(f[2])) / 3.0;
        const Vec3 p = c + probe * face_area_vector(mesh, bf.tet, bf.local_face).normalized();
        const Vec3 q = (p - lo).cwiseQuotient(h);
        const int i = static_cast<int>(std::floor(q[0]));
        const int j = static_cast<int>(std::floor(q[1]));
        const int k = static_cast<int>(std::floor(q[2]));
        BoundaryTag tag = BoundaryTag::Stock;
        if (i >= 0 && j >= 0 && k >= 0 && i < cells[0] && j < cells[1] && k < cells[2]
            && labels[cell_id(i, j, k)] == CellLabel::Part)
            tag = BoundaryTag::Part;
        mesh.set_tag(b, tag);
    }
    return mesh;
}

TetMesh grid_mesh(const Vec3& lo, const Vec3& hi, const std::array<int, 3>& cells)
{
    return labeled_grid_mesh(lo, hi, cells, [](const Vec3&) { return CellLabel::Domain; });
}

TetMesh warp_mesh(const TetMesh& mesh, const std::function<Vec3(const Vec3&)>& map)
{
    std::vector<Vec3> vertices;
    vertices.reserve(mesh.num_vertices());
    for (const auto& v : mesh.vertices()) vertices.push_back(map(v));
    TetMesh out(std::move(vertices), mesh.tets());
    // Reorientation may permute local faces, so tags are matched by vertex triple.
    std::map<std::array<std::int32_t, 3>, BoundaryTag> tags;
    for (const auto& bf : mesh.boundary_faces()) {
        auto f = mesh.face(bf.tet, bf.local_face);
        std::sort(f.begin(), f.end());
        tags[f] = bf.tag;
    }
    for (std::size_t b = 0; b < out.boundary_faces().size(); ++b) {
        const auto& bf = out.boundary_faces()[b];
        auto f = out.face(bf.tet, bf.local_face);
        std::sort(f.begin(), f.end());
        if (auto it = tags.find(f); it != tags.end()) out.set_tag(b, it->second);
    }
    return out;
}

TriangleMesh part_surface(const TetMesh& mesh)
{
    TriangleMesh s = mesh.boundary_surface(BoundaryTag::Part);
    for (auto& t : s.triangles) std::swap(t[1], t[2]);
    return s;
}

std::int32_t tet_near(const TetMesh& mesh, const Vec3& x)
{
    if (auto t = locate_point(mesh, x)) return *t;
    std::int32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < mesh.num_tets(); ++t) {
        const double d = (mesh.centroid(t) - x).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<std::int32_t>(t);
        }
    }
    return best;
}

namespace {

void tag_by_normal(TetMesh& mesh, const Vec3& part_outward, BoundaryTag match)
{
    tag_boundary(mesh, [&](std::size_t t, int f) {
        const Vec3 n = face_area_vector(mesh, t, f).normalized();
        return n.dot(part_outward) > 1.0 - 1e-9 ? match : BoundaryTag::Stock;
    });
}

AnchorSpec tet_anchor(const TetMesh& mesh, const Vec3& at, const Vec3& dir, bool critical)
{
    AnchorSpec s;
    s.target = AnchorTarget::Tet;
    s.id = tet_near(mesh, at);
    s.direction = dir.normalized();
    s.critical = critical;
    return s;
}

} // namespace

Scene unit_cube_scene(int n)
{
    Scene s;
    s.name = "cube";
    s.mesh = grid_mesh(Vec3::Zero(), Vec3::Ones(), {n, n, n});
    tag_by_normal(s.mesh, -Vec3::UnitZ(), BoundaryTag::Part);
    s.part = part_surface(s.mesh);
    s.anchors.push_back(tet_anchor(s.mesh, Vec3(0.5, 0.5, 0.5), Vec3::UnitZ(), false));
    return s;
}

Scene freeform_scene(int nxy, int nz)
{
    Scene s;
    s.name = "freeform";
    TetMesh base = grid_mesh(Vec3::Zero(), Vec3(1.0, 1.0, 1.0), {nxy, nxy, nz});
    tag_by_normal(base, -Vec3::UnitZ(), BoundaryTag::Part);
    constexpr double kSize = 40.0; // mm
    constexpr double kTop = 24.0;
    const auto terrain = [](double x, double y) {
        return 6.0 + 5.0 * std::sin(M_PI * x) * std::sin(M_PI * y) + 2.5 * std::cos(2.0 * M_PI * x)
            + 1.5 * std::sin(1.5 * M_PI * y + 0.4);
    };
    s.mesh = warp_mesh(base, [&](const Vec3& p) {
        const double floor = terrain(p[0], p[1]);
        return Vec3(kSize * p[0], kSize * p[1], floor + p[2] * (kTop - floor));
    });
    s.part = part_surface(s.mesh);
    return s;
}

Scene cavity_scene(int n)
{
    Scene s;
    s.name = "cavity";
    constexpr double kOuter = 0.72;
    constexpr double kInner = 0.46;
    constexpr double kBottom = 0.2;
    constexpr double kFloor = 0.5;
    constexpr double kTop = 1.6;
    const auto label = [&](const Vec3& c) {
        const double r = std::hypot(c[0], c[1]);
        const double z = c[2];
        if (z < kBottom || z > kTop || r > kOuter) return CellLabel::Domain;
        if (z > kFloor && r < kInner) return CellLabel::Domain;
        return CellLabel::Part;
    };
    s.mesh = labeled_grid_mesh(Vec3(-1.0, -1.0, 0.0), Vec3(1.0, 1.0, 2.0), {n, n, n}, label);
    s.part = part_surface(s.mesh);
    return s;
}

Scene channel_scene(int nx, int nyz)
{
    Scene s;
    s.name = "channel";
    constexpr double kLength = 4.0;
    s.mesh = grid_mesh(Vec3::Zero(), Vec3(kLength, 1.0, 1.0), {nx, nyz, nyz});
    tag_boundary(s.mesh, [&](std::size_t t, int f) {
        const Vec3 n = face_area_vector(s.mesh, t, f).normalized();
        return std::abs(n[0]) > 0.5 ? BoundaryTag::Stock : BoundaryTag::Part;
    });
    s.part = part_surface(s.mesh);
    for (std::size_t t = 0; t < s.mesh.num_tets(); ++t) {
        const double x = s.mesh.centroid(t)[0];
        AnchorSpec a;
        a.target = AnchorTarget::Tet;
        a.id = static_cast<std::int64_t>(t);
        a.critical = true;
        if (x < 0.3) {
            a.direction = Vec3::UnitX();
        } else if (x > kLength - 0.7) {
            a.direction = -Vec3::UnitX();
        } else {
            continue;
        }
        s.anchors.push_back(a);
    }
    return s;
}

Scene conflict_scene(int n)
{
    Scene s;
    s.name = "conflict";
    s.mesh = grid_mesh(Vec3::Zero(), Vec3::Ones(), {n, n, n});
    tag_by_normal(s.mesh, -Vec3::UnitZ(), BoundaryTag::Part);
    s.part = part_surface(s.mesh);
    for (std::size_t t = 0; t < s.mesh.num_tets(); ++t) {
        if (s.mesh.centroid(t)[2] > 0.5 / n) continue;
        AnchorSpec a;
        a.target = AnchorTarget::Tet;
        a.id = static_cast<std::int64_t>(t);
        a.direction = Vec3::UnitZ();
        s.anchors.push_back(a);
    }
    s.anchors.push_back(tet_anchor(s.mesh, Vec3(0.38, 0.5, 0.55), Vec3(-1.0, 0.0, 1.0), true));
    s.anchors.push_back(tet_anchor(s.mesh, Vec3(0.62, 0.5, 0.55), Vec3(1.0, 0.0, 1.0), true));
    return s;
}

Scene ball_scene(int n)
{
    Scene s;
    s.name = "ball";
    s.mesh = labeled_grid_mesh(Vec3::Constant(-1.0), Vec3::Constant(1.0), {n, n, n},
        [](const Vec3& c) { return c.norm() < 0.95 ? CellLabel::Domain : CellLabel::Outside; });
    for (std::size_t b = 0; b < s.mesh.boundary_faces().size(); ++b) {
        const auto& bf = s.mesh.boundary_faces()[b];
        const auto f = s.mesh.face(bf.tet, bf.local_face);
        const Vec3 c = (s.mesh.vertex(f[0]) + s.mesh.vertex(f[1]) + s.mesh.vertex(f[2])) / 3.0;
        AnchorSpec a;
        a.target = AnchorTarget::Face;
        a.id = static_cast<std::int64_t>(b);
        a.direction = c[2] > 0.75 ? Vec3::UnitZ() : Vec3(-c.normalized());
        s.anchors.push_back(a);
    }
    return s;
}

std::vector<std::string> scene_names()
{
    return {"cube", "freeform", "cavity", "channel", "conflict", "ball"};
}

Scene make_scene(const std::string& name, double resolution)
{
    const auto scaled = [&](int base) { return std::max(2, static_cast<int>(std::lround(base * resolution))); };
    if (name == "cube") return unit_cube_scene(scaled(4));
    if (name == "freeform") return freeform_scene(scaled(16), scaled(8));
    if (name == "cavity") return cavity_scene(scaled(20));
    if (name == "channel") return channel_scene(scaled(24), scaled(6));
    if (name == "conflict") return conflict_scene(scaled(20));
    if (name == "ball") return ball_scene(scaled(12));
    throw Error(ErrorCode::InvalidArgument, "unknown scene '" + name + "'");
}

} // namespace peel
