#include "peel/hull.hpp"

#include "peel/error.hpp"

#include <algorithm>
#include <map>

namespace peel {

namespace {

constexpr double kTolerance = 1e-12;

struct Face {
    std::array<std::int32_t, 3> v;
    Vec3 normal; ///< unit
    double offset = 0.0;
    bool alive = true;
};

} // namespace

TriangleMesh convex_hull(const std::vector<Vec3>& input)
{
    std::vector<Vec3> pts = input;
    std::sort(pts.begin(), pts.end(), [](const Vec3& a, const Vec3& b) {
        return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
    });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 4) throw Error(ErrorCode::DegenerateInput, "convex hull needs at least 4 distinct points");

    Aabb box;
    for (const auto& p : pts) box.extend(p);
    const double scale = box.diagonal();
    const double eps = kTolerance * scale;

    // Initial simplex from extreme points.
    std::array<std::size_t, 4> seed{};
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (pts[i][0] < pts[seed[0]][0]) seed[0] = i;
    double best = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double d = (pts[i] - pts[seed[0]]).squaredNorm();
        if (d > best) {
            best = d;
            seed[1] = i;
        }
    }
    const Vec3 axis = (pts[seed[1]] - pts[seed[0]]).normalized();
    best = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double d = (pts[i] - pts[seed[0]]).cross(axis).norm();
        if (d > best) {
            best = d;
            seed[2] = i;
        }
    }
    if (best <= eps) throw Error(ErrorCode::DegenerateInput, "points are collinear");
    const Vec3 plane = (pts[seed[1]] - pts[seed[0]]).cross(pts[seed[2]] - pts[seed[0]]).normalized();
    best = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double d = std::abs(plane.dot(pts[i] - pts[seed[0]]));
        if (d > best) {
            best = d;
            seed[3] = i;
        }
    }
    if (best <= eps) throw Error(ErrorCode::DegenerateInput, "points are coplanar");

    std::vector<Face> faces;
    const auto add_face = [&](std::int32_t a, std::int32_t b, std::int32_t c) {
        Face f;
        f.v = {a, b, c};
        f.normal = (pts[b] - pts[a]).cross(pts[c] - pts[a]).normalized();
        f.offset = f.normal.dot(pts[a]);
        faces.push_back(f);
    };
    {
        auto [a, b, c, d] = seed;
        const auto ia = static_cast<std::int32_t>(a);
        const auto ib = static_cast<std::int32_t>(b);
        const auto ic = static_cast<std::int32_t>(c);
        const auto id = static_cast<std::int32_t>(d);
        if ((pts[b] - pts[a]).cross(pts[c] - pts[a]).dot(pts[d] - pts[a]) < 0.0) {
            add_face(ia, ib, ic);
            add_face(ia, id, ib);
            add_face(ib, id, ic);
            add_face(ic, id, ia);
        } else {
            add_face(ia, ic, ib);
            add_face(ia, ib, id);
            add_face(ib, ic, id);
            add_face(ic, ia, id);
        }
    }

    std::vector<std::uint8_t> used(pts.size(), 0);
    for (auto s : seed) used[s] = 1;
    std::vector<std::size_t> visible;
    for (std::size_t p = 0; p < pts.size(); ++p) {
        if (used[p]) continue;
        visible.clear();
        for (std::size_t f = 0; f < faces.size(); ++f)
            if (faces[f].alive && faces[f].normal.dot(pts[p]) - faces[f].offset > eps) visible.push_back(f);
        if (visible.empty()) continue;
        // Horizon: directed edges of visible faces whose twin is not visible.
        std::map<std::pair<std::int32_t, std::int32_t>, int> edges;
        for (auto f : visible) {
            const auto& v = faces[f].v;
            for (int k = 0; k < 3; ++k) edges[{v[k], v[(k + 1) % 3]}] += 1;
            faces[f].alive = false;
        }
        const auto ip = static_cast<std::int32_t>(p);
        for (const auto& [e, count] : edges) {
            if (edges.count({e.second, e.first})) continue;
            add_face(e.first, e.second, ip);
        }
    }

    TriangleMesh hull;
    std::vector<std::int32_t> remap(pts.size(), -1);
    for (const auto& f : faces) {
        if (!f.alive) continue;
        Tri t{};
        for (int k = 0; k < 3; ++k) {
            if (remap[f.v[k]] < 0) {
                remap[f.v[k]] = static_cast<std::int32_t>(hull.vertices.size());
                hull.vertices.push_back(pts[f.v[k]]);
            }
            t[k] = remap[f.v[k]];
        }
        hull.triangles.push_back(t);
    }
    return hull;
}

TriangleMesh convex_hull_source(const TriangleMesh& part_surface)
{
    return convex_hull(part_surface.vertices);
}

} // namespace peel
