#pragma once

#include "peel/diffops.hpp"

#include <filesystem>

namespace peel {

/// One working surface g = iso_value. Triangles are oriented along +grad g.
struct IsoSurface {
    double iso_value = 0.0;
    std::vector<Vec3> vertices;
    std::vector<Tri> triangles;
    std::vector<std::int32_t> source_tets; ///< per triangle
    /// Per vertex, the mesh edge (sorted vertex pair) it was interpolated on.
    std::vector<std::array<std::int32_t, 2>> vertex_edges;

    TriangleMesh surface() const { return {vertices, triangles}; }
    double area() const;
};

struct SpacingStats {
    double mean = 0.0;
    double stddev = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t samples = 0;
    std::size_t unmatched = 0; ///< samples not covered by the next layer
};

struct LayerSet {
    std::vector<IsoSurface> layers; ///< ascending iso-value
    SpacingStats spacing;

    std::vector<double> iso_values() const;
};

/// Marching tetrahedra at g = c. Vertex values equal to c are shifted up by
/// 1e-9 (max g - min g) first. Throws IsoValueOutOfRange unless min g < c < max g.
IsoSurface extract_isosurface(const TetMesh& mesh, const ScalarField& g, double c);

/// Same, restricted to the tets for which `keep(tet)` is true; no range check.
IsoSurface extract_isosurface(
    const TetMesh& mesh, const ScalarField& g, double c, const std::function<bool(std::int32_t)>& keep);

struct LayerSpacing {
    std::optional<double> target_depth;
    std::optional<int> layer_count;
};

/// Uniform iso-values over [min + d, max - d] with d = 0.1% of the range.
/// Throws ConstantField and InvalidArgument (unless exactly one of the two is set).
std::vector<double> layer_iso_values(const ScalarField& g, const LayerSpacing& spacing);

/// Extracts every layer and measures the spacing between consecutive layers
/// from `samples_per_layer` area-uniform samples (seeded, deterministic).
LayerSet generate_layer_set(const TetMesh& mesh, const ScalarField& g, const LayerSpacing& spacing,
    std::uint64_t seed = 42, int samples_per_layer = 200);

/// Spacing statistics of an existing set, same sampling as generate_layer_set.
/// Closest-point distances from layer i to layer i + 1; samples whose normal
/// ray misses layer i + 1 (clipped by the stock there) count as unmatched.
SpacingStats spacing_stats(const std::vector<IsoSurface>& layers, std::uint64_t seed = 42, int samples_per_layer = 200);

/// Which side of a layer is still material when that layer is being cut.
enum class RemainingSide { Above, Below };

struct FloatingViolation {
    double iso_value = 0.0;
    std::vector<std::int32_t> tets; ///< the detached component, sorted
    double volume = 0.0;
};

/// Components (face adjacency) of the remaining region {tets whose four vertex
/// values are all >= c} (or <= c for Below). A component touching no PART
/// face is a violation.
std::vector<FloatingViolation> floating_volume_check(const TetMesh& mesh, const ScalarField& g,
    const std::vector<double>& iso_values, RemainingSide side = RemainingSide::Above);

/// Side holding the part: Below when g is smaller on PART vertices than on the rest of the boundary.
RemainingSide part_side(const TetMesh& mesh, const ScalarField& g);

struct DepthVariationReport {
    std::vector<std::size_t> histogram; ///< counts over [0, max_depth]
    double bin_width = 0.0;
    double max_depth = 0.0;
    double mean_depth = 0.0;
    /// Mean |d_k - d_{k-1}| between consecutive samples ordered by angle inside
    /// height bands of the part surface, averaged over bands.
    double avg_variation = 0.0;
    std::size_t samples = 0;
    std::size_t fallback_samples = 0; ///< ray missed, closest-point distance used
};

/// Leftover thickness between the part surface and the last layer, measured
/// along the part's outward normal. Throws EmptyMesh.
DepthVariationReport depth_variation(const TriangleMesh& final_layer, const TriangleMesh& part_surface,
    std::size_t sample_count = 10000, std::uint64_t seed = 42, int bins = 32);

enum class LayerFormat { Obj, Stl };

/// Writes layer_000.<ext> ... plus manifest.json; returns the paths written.
std::vector<std::filesystem::path> export_layers(const LayerSet& layers, const std::filesystem::path& dir,
    LayerFormat format, const std::vector<FloatingViolation>& violations = {});

/// Edge-manifold audit: every edge has at most two triangles and edges with one
/// triangle lie on the domain boundary.
struct LayerTopology {
    std::size_t non_manifold_edges = 0;
    std::size_t interior_open_edges = 0;
    bool watertight() const { return non_manifold_edges == 0 && interior_open_edges == 0; }
};
LayerTopology audit_layer(const TetMesh& mesh, const IsoSurface& layer);

} // namespace peel
