#pragma once

#include "peel/fieldopt.hpp"
#include "peel/layers.hpp"

namespace peel {

enum class ExtremumKind { Min, Max };
std::string_view to_string(ExtremumKind k);

/// Strict local extremum of g over the vertex 1-ring.
struct PointSingularity {
    std::int32_t vertex = -1;
    ExtremumKind kind = ExtremumKind::Max;
    bool interior = false; ///< the vertex lies on no boundary face
};

struct PointScan {
    std::vector<PointSingularity> extrema;
    /// Vertices that are non-strict extrema with at least one tie in the 1-ring.
    std::vector<std::int32_t> plateaus;
};

/// Full scan of every vertex against its 1-ring. Plateaus are logged as warnings.
PointScan scan_point_singularities(const TetMesh& mesh, const ScalarField& g);
std::vector<PointSingularity> detect_point_singularities(const TetMesh& mesh, const ScalarField& g);
std::vector<PointSingularity> interior_only(const std::vector<PointSingularity>& points);

/// Interior face identified from its lower-indexed tet.
struct FaceRef {
    std::int32_t tet = -1;
    int local_face = 0;
    std::int32_t other = -1; ///< tet across the face

    friend bool operator==(const FaceRef&, const FaceRef&) = default;
};

using Edge = std::array<std::int32_t, 2>; ///< sorted vertex pair

/// Connected set of interior faces across which the field flips.
struct SingularBoundary {
    std::vector<FaceRef> faces; ///< ordered by (tet, local_face)
    std::vector<Edge> rim;      ///< edges used an odd number of times by the faces, sorted
    bool admissible = false;    ///< every rim edge is an edge of a PART boundary face
};

/// Faces with v1 . v2 < threshold, grouped through shared edges.
std::vector<SingularBoundary> detect_singular_boundary(
    const TetMesh& mesh, const VectorField& v, double conflict_threshold = 0.0);

enum class DirectiveAction { AddAnchor, LocalCorrection, ReorientSource };
std::string_view to_string(DirectiveAction a);
std::optional<DirectiveAction> parse_directive_action(std::string_view s);

/// User decision for one singularity. A directive without a target applies to
/// every open singularity of its kind; `vertex` matches a point singularity
/// exactly and `near` picks the closest one.
struct ResolutionDirective {
    DirectiveAction action = DirectiveAction::AddAnchor;
    std::optional<std::int32_t> vertex;
    std::optional<Vec3> near;
    std::optional<Vec3> anchor_direction; ///< required for AddAnchor
    int ring_depth = 3;                   ///< LocalCorrection only

    void validate() const;
};

/// Critical anchors on every tet around the singular vertex, then a fresh interpolation.
std::pair<VectorField, AnchorSet> resolve_type1(const TetMesh& mesh, const VectorField& field,
    const AnchorSet& anchors, const PointSingularity& singular, const Vec3& direction, const FieldOptConfig& cfg);

/// Anchors from one side of a closed or open oriented source surface. The
/// source is refined to the mesh scale and each piece lands in the tet that
/// contains its centroid; anchors opposing an already kept neighbour are dropped.
AnchorSet orient_source_surface(const TriangleMesh& source, const TetMesh& mesh, double weight = 1e5);

/// Iso-values c lying strictly inside the g-range of some face of the component.
std::vector<double> broken_iso_values(
    const TetMesh& mesh, const ScalarField& g, const SingularBoundary& sb, const std::vector<double>& iso_values);

struct Type3Correction {
    std::vector<IsoSurface> replacement_layers; ///< ascending iso-value, both passes
    std::vector<double> broken_values;
    int ring_depth_used = 0;
    ScalarField pass_scalar[2]; ///< corrected g of each pass
};

/// Pushes the singular region to each side in turn (flip + local smoothing on
/// a ring, local Poisson re-solve with the rest pinned) and re-extracts the
/// broken iso-values. Throws InadmissibleBoundary and RingTouchesDomainBoundary.
Type3Correction local_correction_type3(const TetMesh& mesh, const VectorField& field, const ScalarField& g,
    const SingularBoundary& sb, const std::vector<double>& iso_values, int ring_depth, const FieldOptConfig& cfg,
    const BoundaryCondition& bc = BoundaryCondition::natural());

struct SingularityOptions {
    int max_rounds = 20;
    double conflict_threshold = 0.0;
    BoundaryCondition bc;
    /// Layer stations used to find broken layers; without them Type III
    /// components are classified but not corrected.
    std::vector<double> iso_values;
};

struct SingularityReport {
    int rounds = 0;
    std::vector<PointSingularity> found_points;     ///< interior extrema of the first round
    std::vector<PointSingularity> remaining_points; ///< interior extrema still present
    std::vector<PointSingularity> boundary_points;  ///< reported only, never repaired
    std::vector<std::int32_t> plateaus;
    std::vector<SingularBoundary> boundaries;
    std::vector<Type3Correction> corrections; ///< one per corrected admissible component
    std::vector<std::size_t> unresolved_boundaries; ///< Type IV indices into `boundaries`
    std::vector<std::string> notes;

    bool clean() const { return remaining_points.empty() && unresolved_boundaries.empty(); }
};

struct SingularityResult {
    VectorField field;
    ScalarField scalar;
    AnchorSet anchors;
    SingularityReport report;
};

/// Poisson -> point singularities -> ADD_ANCHOR directives -> re-solve ->
/// singular boundaries -> local correction of admissible components. Directives
/// are applied in list order each round until no interior extremum is left;
/// one targeting a vertex is used up by its first application.
SingularityResult classify_and_iterate(const TetMesh& mesh, const VectorField& field, const AnchorSet& anchors,
    const std::vector<ResolutionDirective>& directives, const FieldOptConfig& cfg, const SingularityOptions& opts = {});

} // namespace peel
