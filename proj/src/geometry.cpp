#include "peel/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace peel {

Vec3 TriangleMesh::area_vector(std::size_t t) const
{
    const auto& f = triangles[t];
    const Vec3& a = vertices[f[0]];
    const Vec3& b = vertices[f[1]];
    const Vec3& c = vertices[f[2]];
    return 0.5 * (b - a).cross(c - a);
}

Vec3 TriangleMesh::normal(std::size_t t) const
{
    Vec3 n = area_vector(t);
    const double len = n.norm();
    return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

double TriangleMesh::area(std::size_t t) const { return area_vector(t).norm(); }

double TriangleMesh::total_area() const
{
    double sum = 0.0;
    for (std::size_t t = 0; t < triangles.size(); ++t) sum += area(t);
    return sum;
}

Vec3 TriangleMesh::centroid(std::size_t t) const
{
    const auto& f = triangles[t];
    return (vertices[f[0]] + vertices[f[1]] + vertices[f[2]]) / 3.0;
}

double TriangleMesh::signed_volume() const
{
    double vol = 0.0;
    for (const auto& f : triangles) {
        vol += vertices[f[0]].dot(vertices[f[1]].cross(vertices[f[2]]));
    }
    return vol / 6.0;
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c)
{
    return 0.5 * (b - a).cross(c - a).norm();
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c)
{
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    const Vec3 ap = p - a;
    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return a + v * ab;
    }

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return a + w * ac;
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + w * (c - b);
    }

    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom;
    const double w = vc * denom;
    return a + ab * v + ac * w;
}

std::optional<double> ray_triangle(
    const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b, const Vec3& c)
{
    constexpr double eps = 1e-14;
    const Vec3 e1 = b - a;
    const Vec3 e2 = c - a;
    const Vec3 pvec = dir.cross(e2);
    const double det = e1.dot(pvec);
    if (std::abs(det) < eps) return std::nullopt;
    const double inv = 1.0 / det;
    const Vec3 tvec = origin - a;
    const double u = tvec.dot(pvec) * inv;
    if (u < -1e-12 || u > 1.0 + 1e-12) return std::nullopt;
    const Vec3 qvec = tvec.cross(e1);
    const double v = dir.dot(qvec) * inv;
    if (v < -1e-12 || u + v > 1.0 + 1e-12) return std::nullopt;
    const double t = e2.dot(qvec) * inv;
    if (t < 0.0) return std::nullopt;
    return t;
}

double Aabb::squared_distance(const Vec3& p) const
{
    const Vec3 d = (lo - p).cwiseMax(Vec3::Zero()).cwiseMax(p - hi);
    return d.squaredNorm();
}

bool Aabb::hit_by_ray(const Vec3& origin, const Vec3& inv_dir, double t_max) const
{
    double t0 = 0.0;
    double t1 = t_max;
    for (int k = 0; k < 3; ++k) {
        double ta = (lo[k] - origin[k]) * inv_dir[k];
        double tb = (hi[k] - origin[k]) * inv_dir[k];
        if (std::isnan(ta) || std::isnan(tb)) {
            // ray parallel to the slab and origin on its plane
            if (origin[k] < lo[k] || origin[k] > hi[k]) return false;
            continue;
        }
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1 * (1.0 + 1e-12) + 1e-12) return false;
    }
    return true;
}

TriangleTree::TriangleTree(const TriangleMesh& mesh)
{
    const auto n = static_cast<std::int32_t>(mesh.triangles.size());
    if (n == 0) return;
    corners_.resize(n);
    tri_boxes_.resize(n);
    tri_centers_.resize(n);
    order_.resize(n);
    for (std::int32_t t = 0; t < n; ++t) {
        const auto& f = mesh.triangles[t];
        corners_[t] = {mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]};
        for (const auto& c : corners_[t]) tri_boxes_[t].extend(c);
        tri_centers_[t] = tri_boxes_[t].center();
        order_[t] = t;
    }
    nodes_.reserve(2 * n);
    build(0, n);
}

std::int32_t TriangleTree::build(std::int32_t begin, std::int32_t end)
{
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    Aabb box;
    for (std::int32_t i = begin; i < end; ++i) box.extend(tri_boxes_[order_[i]]);
    nodes_[id].box = box;
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    if (end - begin <= 4) return id;

    Aabb centers;
    for (std::int32_t i = begin; i < end; ++i) centers.extend(tri_centers_[order_[i]]);
    int axis = 0;
    (centers.hi - centers.lo).maxCoeff(&axis);
    const std::int32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
        [&](std::int32_t a, std::int32_t b) {
            if (tri_centers_[a][axis] != tri_centers_[b][axis])
                return tri_centers_[a][axis] < tri_centers_[b][axis];
            return a < b;
        });
    const std::int32_t left = build(begin, mid);
    const std::int32_t right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

TriangleTree::Hit TriangleTree::closest(const Vec3& p) const
{
    Hit best;
    if (nodes_.empty()) return best;
    double best_d2 = std::numeric_limits<double>::infinity();
    std::vector<std::int32_t> stack{0};
    while (!stack.empty()) {
        const Node& node = nodes_[stack.back()];
        stack.pop_back();
        if (node.box.squared_distance(p) > best_d2) continue;
        if (node.left < 0) {
            for (std::int32_t i = node.begin; i < node.end; ++i) {
                const std::int32_t t = order_[i];
                const auto& c = corners_[t];
                const Vec3 q = closest_point_on_triangle(p, c[0], c[1], c[2]);
                const double d2 = (q - p).squaredNorm();
                if (d2 < best_d2 || (d2 == best_d2 && t < best.triangle)) {
                    best_d2 = d2;
                    best.point = q;
                    best.triangle = t;
                }
            }
            continue;
        }
        const double dl = nodes_[node.left].box.squared_distance(p);
        const double dr = nodes_[node.right].box.squared_distance(p);
        if (dl < dr) {
            stack.push_back(node.right);
            stack.push_back(node.left);
        } else {
            stack.push_back(node.left);
            stack.push_back(node.right);
        }
    }
    best.distance = std::sqrt(best_d2);
    return best;
}

std::optional<TriangleTree::Hit> TriangleTree::raycast(const Vec3& origin, const Vec3& dir) const
{
    if (nodes_.empty()) return std::nullopt;
    const Vec3 inv(1.0 / dir[0], 1.0 / dir[1], 1.0 / dir[2]);
    double best_t = std::numeric_limits<double>::infinity();
    std::int32_t best_tri = -1;
    std::vector<std::int32_t> stack{0};
    while (!stack.empty()) {
        const Node& node = nodes_[stack.back()];
        stack.pop_back();
        if (!node.box.hit_by_ray(origin, inv, best_t)) continue;
        if (node.left < 0) {
            for (std::int32_t i = node.begin; i < node.end; ++i) {
                const std::int32_t t = order_[i];
                const auto& c = corners_[t];
                if (auto hit = ray_triangle(origin, dir, c[0], c[1], c[2])) {
                    if (*hit < best_t || (*hit == best_t && t < best_tri)) {
                        best_t = *hit;
                        best_tri = t;
                    }
                }
            }
            continue;
        }
        stack.push_back(node.left);
        stack.push_back(node.right);
    }
    if (best_tri < 0) return std::nullopt;
    Hit hit;
    hit.distance = best_t * dir.norm();
    hit.point = origin + best_t * dir;
    hit.triangle = best_tri;
    return hit;
}

} // namespace peel
