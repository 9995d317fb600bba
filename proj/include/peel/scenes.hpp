#pragma once

#include "peel/fieldopt.hpp"

#include <functional>
#include <string>

namespace peel {

/// Axis-aligned block split into cells x 6 tets (Kuhn split, conforming).
TetMesh grid_mesh(const Vec3& lo, const Vec3& hi, const std::array<int, 3>& cells);

enum class CellLabel { Domain, Part, Outside };

/// Keeps the cells labelled Domain. A boundary face is PART when the cell
/// across it is labelled Part and STOCK otherwise (including the block boundary).
TetMesh labeled_grid_mesh(const Vec3& lo, const Vec3& hi, const std::array<int, 3>& cells,
    const std::function<CellLabel(const Vec3& center)>& label);

/// Moves every vertex through `map`; tags and connectivity are preserved.
TetMesh warp_mesh(const TetMesh& mesh, const std::function<Vec3(const Vec3&)>& map);

/// Part surface oriented out of the part (into the domain), from the PART faces.
TriangleMesh part_surface(const TetMesh& mesh);

/// Tet containing x (nearest centroid when x falls outside).
std::int32_t tet_near(const TetMesh& mesh, const Vec3& x);

/// Ready-made inputs for tests, demos and the acceptance run.
struct Scene {
    std::string name;
    TetMesh mesh;
    TriangleMesh part;              ///< empty when the scene has no part faces
    std::vector<AnchorSpec> anchors;
};

/// Unit cube, bottom face PART, the rest STOCK.
Scene unit_cube_scene(int n);
/// Slab between a smooth terrain (PART) and a flat top.
Scene freeform_scene(int nxy, int nz);
/// Open cup standing in a block; the stock around it and the cup cavity form the domain.
Scene cavity_scene(int n);
/// Rectangular channel through the part (lateral faces PART, ends STOCK),
/// critical anchors at both ends pointing into the channel.
Scene channel_scene(int nx, int nyz);
/// Box with two nearby critical anchors splaying apart at 90 degrees above a
/// layer of general upward anchors.
Scene conflict_scene(int n);
/// Ball with inward anchors and an outward cap on top.
Scene ball_scene(int n);

std::vector<std::string> scene_names();
/// Throws InvalidArgument for unknown names; `resolution` scales the default size.
Scene make_scene(const std::string& name, double resolution = 1.0);

} // namespace peel
