#pragma once

#include "peel/geometry.hpp"

namespace peel {

/// Incremental 3D convex hull with outward-oriented triangles. The visibility
/// test uses a relative tolerance of 1e-12 on distances normalized by the
/// bounding-box diagonal. Throws DegenerateInput for fewer than 4 distinct or
/// coplanar points.
TriangleMesh convex_hull(const std::vector<Vec3>& points);

/// Hull of the part surface's vertices.
TriangleMesh convex_hull_source(const TriangleMesh& part_surface);

} // namespace peel
