#pragma once

#include "peel/curlfree.hpp"
#include "peel/hull.hpp"
#include "peel/layers.hpp"
#include "peel/singularity.hpp"

#include <functional>

namespace peel {

enum class Strategy { AnchorsOnly, ConvexHullSource, PartNormalsSource, Planar };
enum class BcChoice { Natural, DirichletPart, DirichletStock };

std::string_view to_string(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view s);
std::string_view to_string(BcChoice b);
std::optional<BcChoice> parse_bc_choice(std::string_view s);
BoundaryCondition boundary_condition(BcChoice b);

struct PlanConfig {
    Strategy strategy = Strategy::AnchorsOnly;
    BcChoice bc = BcChoice::Natural;
    LayerSpacing spacing{std::nullopt, 10};
    FieldOptConfig weights;
    std::optional<double> blend_alpha;
    int blend_ring_depth = 2;
    std::optional<Vec3> peel_direction; ///< PLANAR only
    std::vector<AnchorSpec> anchors;    ///< user anchors, applied after any source seeding
    /// CONVEX_HULL_SOURCE: also anchor part normals on PART faces strictly inside the hull.
    bool hull_concavities = true;
    std::vector<ResolutionDirective> directives;
    double curl_threshold = 4e-4;
    int curl_max_iters = 100;
    int max_rounds = 20;
    double conflict_threshold = 0.0;
    std::uint64_t seed = 42;
    std::size_t depth_samples = 10000;
    int spacing_samples = 200;
    LayerFormat layer_format = LayerFormat::Obj;

    /// Throws InvalidArgument on inconsistent settings.
    void validate() const;
};

/// One progress record. Curl events carry the iteration and its I_rot.
struct ProgressEvent {
    std::string stage;
    int iteration = 0;
    double i_rot = 0.0;
    std::string message;
};
using ProgressSink = std::function<void(const ProgressEvent&)>;

struct PlanMetrics {
    double i_rot = 0.0;             ///< recomputed from the final field
    std::size_t interior_extrema = 0; ///< recomputed by a full scan
    std::size_t unresolved_boundaries = 0;
    std::size_t floating_violations = 0;
    SpacingStats spacing;
    std::optional<DepthVariationReport> depth; ///< only when the mesh has PART faces
};

struct PeelingPlan {
    PlanConfig config;
    AnchorSet anchors;
    BoundaryCondition bc;
    VectorField field;
    ScalarField scalar;
    CurlRemovalReport curl;
    int curl_rounds = 0;
    SingularityReport initial_singularities; ///< before curl removal
    SingularityReport singularities;         ///< final re-check, with Type III corrections
    LayerSet layers;
    RemainingSide remaining_side = RemainingSide::Above;
    std::vector<FloatingViolation> violations;
    PlanMetrics metrics;
    bool valid = false;
    std::string failed_stage; ///< empty unless a stage threw
    std::string failure;
    std::vector<std::string> notes;
};

/// Part surface of the mesh's PART faces, oriented out of the part; empty when untagged.
TriangleMesh mesh_part_surface(const TetMesh& mesh);

/// Initial anchor set for the strategy (user anchors last). Not for PLANAR.
AnchorSet seed_anchors(const TetMesh& mesh, const PlanConfig& cfg);

/// Staged pipeline: seed -> field -> singularity loop -> curl removal ->
/// scalar -> re-check -> layers -> certificate. Stage errors are caught and
/// recorded; the returned plan is then INVALID.
PeelingPlan run_plan(const TetMesh& mesh, const PlanConfig& cfg, const ProgressSink& progress = {});

struct ComparisonRow {
    std::string label;
    bool valid = false;
    std::size_t layers = 0;
    double max_depth = 0.0;
    double avg_variation = 0.0;
    double mean_depth = 0.0;
    std::size_t fallback_samples = 0;
    std::string failure;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
    std::string table() const; ///< fixed-width text table
};

/// Runs every config (in parallel up to `threads`) and measures the depth
/// left between the part and the union of each plan's layers.
ComparisonReport compare_strategies(const TetMesh& mesh, const TriangleMesh& part_surface,
    const std::vector<PlanConfig>& configs, unsigned threads = 1);

/// Worker count from PEEL_THREADS (default: hardware concurrency, at least 1).
unsigned worker_threads();

} // namespace peel
