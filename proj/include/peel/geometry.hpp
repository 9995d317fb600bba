#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace peel {

using Vec3 = Eigen::Vector3d;
using Tri = std::array<std::int32_t, 3>;

/// Indexed triangle soup. Used for part surfaces, source surfaces and layers.
struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<Tri> triangles;

    bool empty() const { return triangles.empty(); }
    Vec3 normal(std::size_t t) const; ///< unit normal, right-hand rule
    Vec3 area_vector(std::size_t t) const;
    double area(std::size_t t) const;
    double total_area() const;
    Vec3 centroid(std::size_t t) const;
    /// Signed enclosed volume by the divergence theorem (positive for outward orientation).
    double signed_volume() const;
};

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);

/// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection 5.1.5).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Moller-Trumbore; returns ray parameter t >= 0 on hit.
std::optional<double> ray_triangle(
    const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b, const Vec3& c);

struct Aabb {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

    void extend(const Vec3& p)
    {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    void extend(const Aabb& b)
    {
        lo = lo.cwiseMin(b.lo);
        hi = hi.cwiseMax(b.hi);
    }
    double squared_distance(const Vec3& p) const;
    bool hit_by_ray(const Vec3& origin, const Vec3& inv_dir, double t_max) const;
    Vec3 center() const { return 0.5 * (lo + hi); }
    double diagonal() const { return (hi - lo).norm(); }
};

/// Static bounding-volume hierarchy over a triangle mesh.
class TriangleTree {
public:
    TriangleTree() = default;
    explicit TriangleTree(const TriangleMesh& mesh);

    struct Hit {
        double distance = 0.0;
        Vec3 point = Vec3::Zero();
        std::int32_t triangle = -1;
    };

    /// Nearest surface point; empty mesh yields triangle == -1.
    Hit closest(const Vec3& p) const;
    /// First intersection along the ray, if any.
    std::optional<Hit> raycast(const Vec3& origin, const Vec3& dir) const;

    bool empty() const { return nodes_.empty(); }

private:
    struct Node {
        Aabb box;
        std::int32_t left = -1;
        std::int32_t right = -1;
        std::int32_t begin = 0;
        std::int32_t end = 0;
    };

    std::int32_t build(std::int32_t begin, std::int32_t end);

    std::vector<std::array<Vec3, 3>> corners_;
    std::vector<Node> nodes_;
    std::vector<std::int32_t> order_;
    std::vector<Aabb> tri_boxes_;
    std::vector<Vec3> tri_centers_;
};

} // namespace peel
