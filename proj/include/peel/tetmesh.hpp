#pragma once

#include "peel/geometry.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace peel {

using Tet = std::array<std::int32_t, 4>;

/// Provenance of a boundary face of the machining domain: the part surface
/// (material that stays) or the stock surface (outside of the raw block).
enum class BoundaryTag : std::uint8_t { Untagged = 0, Part = 1, Stock = 2 };

std::string_view to_string(BoundaryTag tag);
std::optional<BoundaryTag> parse_boundary_tag(std::string_view s);

struct BoundaryFace {
    std::int32_t tet = -1;
    std::int32_t local_face = -1; ///< local face f is opposite local vertex f
    BoundaryTag tag = BoundaryTag::Untagged;
};

/// Local vertex triples of the four faces, ordered so that the right-hand
/// normal points out of a positively oriented tet.
inline constexpr std::array<std::array<int, 3>, 4> kTetFaces = {{
    {1, 2, 3},
    {0, 3, 2},
    {0, 1, 3},
    {0, 2, 1},
}};

/// Minimum accepted |volume| of a tetrahedron, in mm^3.
inline constexpr double kDegenerateVolume = 1e-12;

/// Validated tetrahedral mesh of the machining domain.
///
/// Construction reorients negative tets, rejects degenerate and non-manifold
/// input and builds face adjacency and vertex incidence. After that the mesh
/// is only read; boundary tags are the one mutable attribute and are set by
/// the loaders and taggers before the mesh is shared.
class TetMesh {
public:
    TetMesh() = default;
    TetMesh(std::vector<Vec3> vertices, std::vector<Tet> tets);

    std::size_t num_vertices() const { return vertices_.size(); }
    std::size_t num_tets() const { return tets_.size(); }

    const std::vector<Vec3>& vertices() const { return vertices_; }
    const Vec3& vertex(std::size_t v) const { return vertices_[v]; }
    const std::vector<Tet>& tets() const { return tets_; }
    const Tet& tet(std::size_t t) const { return tets_[t]; }

    /// Tet across local face f, or -1 on the boundary.
    std::int32_t neighbor(std::size_t t, int f) const { return neighbors_[t][f]; }
    const std::array<std::int32_t, 4>& neighbors(std::size_t t) const { return neighbors_[t]; }
    /// Global vertex ids of local face f, outward oriented.
    std::array<std::int32_t, 3> face(std::size_t t, int f) const;

    const std::vector<BoundaryFace>& boundary_faces() const { return boundary_; }
    /// Index into boundary_faces() or -1 for an interior face.
    std::int32_t boundary_face_id(std::size_t t, int f) const { return boundary_id_[t][f]; }
    void set_tag(std::size_t boundary_face, BoundaryTag tag) { boundary_[boundary_face].tag = tag; }
    bool has_tag(BoundaryTag tag) const;

    std::span<const std::int32_t> vertex_tets(std::size_t v) const
    {
        return {vt_idx_.data() + vt_ptr_[v], vt_idx_.data() + vt_ptr_[v + 1]};
    }
    /// Sorted 1-ring (edge-connected vertices).
    std::span<const std::int32_t> vertex_neighbors(std::size_t v) const
    {
        return {vv_idx_.data() + vv_ptr_[v], vv_idx_.data() + vv_ptr_[v + 1]};
    }
    bool is_boundary_vertex(std::size_t v) const { return boundary_vertex_[v] != 0; }

    double volume(std::size_t t) const { return volumes_[t]; }
    double total_volume() const;
    Vec3 centroid(std::size_t t) const;
    Aabb bounds() const;

    /// Boundary faces with the given tag, outward oriented (normals point out of the domain).
    TriangleMesh boundary_surface(std::optional<BoundaryTag> tag = std::nullopt) const;

private:
    std::vector<Vec3> vertices_;
    std::vector<Tet> tets_;
    std::vector<double> volumes_;
    std::vector<std::array<std::int32_t, 4>> neighbors_;
    std::vector<std::array<std::int32_t, 4>> boundary_id_;
    std::vector<BoundaryFace> boundary_;
    std::vector<std::int32_t> vt_ptr_, vt_idx_;
    std::vector<std::int32_t> vv_ptr_, vv_idx_;
    std::vector<std::uint8_t> boundary_vertex_;
};

/// |det[x_i - x_l, x_j - x_l, x_k - x_l]| / 6
double tet_volume(const TetMesh& mesh, std::size_t t);

/// Area vector of the face opposite local vertex `opposite`, pointing away
/// from that vertex. The four vectors of a tet sum to zero.
Vec3 face_area_vector(const TetMesh& mesh, std::size_t t, int opposite);

/// Barycentric coordinates of x with respect to tet t.
std::array<double, 4> barycentric(const TetMesh& mesh, std::size_t t, const Vec3& x);

/// Uniform-grid point location. Ties on shared faces resolve to the lowest tet index.
class PointLocator {
public:
    explicit PointLocator(const TetMesh& mesh);
    std::optional<std::int32_t> locate(const Vec3& x) const;

private:
    const TetMesh& mesh_;
    Aabb box_;
    std::array<int, 3> dims_{1, 1, 1};
    Vec3 cell_ = Vec3::Ones();
    std::vector<std::vector<std::int32_t>> cells_;
};

std::optional<std::int32_t> locate_point(const TetMesh& mesh, const Vec3& x);

// ---------------------------------------------------------------------------
// File formats

enum class MeshFormat { TetgenNodeEle, VtkLegacy };

std::optional<MeshFormat> guess_format(const std::filesystem::path& path);

/// Loads a tet mesh. For TetGen input `path` may name the .node, the .ele or
/// the common stem. A boundary-tag sidecar is read from `tags` when given,
/// otherwise from `<stem>.tags` when that file exists.
TetMesh load_mesh(const std::filesystem::path& path, MeshFormat format,
    const std::optional<std::filesystem::path>& tags = std::nullopt);

/// Writes the mesh (and `<stem>.tags` when any face is tagged).
void save_mesh(const TetMesh& mesh, const std::filesystem::path& path, MeshFormat format);

void load_boundary_tags(TetMesh& mesh, const std::filesystem::path& path);
void save_boundary_tags(const TetMesh& mesh, const std::filesystem::path& path);

/// Tags every boundary face PART when all its corners and its centroid lie
/// within `eps` of `part_surface`, STOCK otherwise. eps <= 0 selects
/// 1e-4 x bounding-box diagonal.
void tag_boundary_by_surface(TetMesh& mesh, const TriangleMesh& part_surface, double eps = -1.0);

void tag_boundary(TetMesh& mesh,
    const std::function<BoundaryTag(std::size_t tet, int local_face)>& classify);

// Triangle surfaces (part / source meshes).
TriangleMesh load_surface(const std::filesystem::path& path);
void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path);
void save_stl(const TriangleMesh& mesh, const std::filesystem::path& path);
TriangleMesh load_stl(const std::filesystem::path& path);
TriangleMesh load_obj(const std::filesystem::path& path);

} // namespace peel
