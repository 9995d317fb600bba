#pragma once

#include "peel/diffops.hpp"

#include <map>

namespace peel {

struct Anchor {
    std::int32_t tet = -1;
    Vec3 direction = Vec3::UnitZ(); ///< unit length
    double weight = 1e5;            ///< beta
    bool critical = false;
};

/// At most one anchor per tet; a later insert replaces the earlier one.
class AnchorSet {
public:
    void insert(const Anchor& a);
    bool erase(std::int32_t tet) { return anchors_.erase(tet) > 0; }
    void clear() { anchors_.clear(); }

    std::size_t size() const { return anchors_.size(); }
    bool empty() const { return anchors_.empty(); }
    const Anchor* find(std::int32_t tet) const;

    auto begin() const { return anchors_.begin(); }
    auto end() const { return anchors_.end(); }

    AnchorSet critical_only() const;
    std::size_t critical_count() const;

private:
    std::map<std::int32_t, Anchor> anchors_;
};

struct FieldOptConfig {
    double alpha = 1.0;
    double beta_general = 1e5;
    double beta_critical = 1e8;
    double gamma = 1e5;

    /// Throws InvalidArgument unless all weights are positive and ordered
    /// beta_critical >= beta_general >= alpha.
    void validate() const;
};

/// Where an anchor is attached before it is expanded to tets.
enum class AnchorTarget { Tet, Vertex, Face };

std::string_view to_string(AnchorTarget t);
std::optional<AnchorTarget> parse_anchor_target(std::string_view s);

/// User-level anchor. Face ids index TetMesh::boundary_faces().
struct AnchorSpec {
    AnchorTarget target = AnchorTarget::Tet;
    std::int64_t id = 0;
    Vec3 direction = Vec3::UnitZ();
    std::optional<double> weight; ///< defaults from the config by criticality
    bool critical = false;
};

/// Tets an anchor spec lands on: the tet itself, all tets around a vertex, or
/// the tet owning a boundary face.
std::vector<std::int32_t> anchor_tets(const TetMesh& mesh, const AnchorSpec& spec);

/// Expands the spec and inserts one normalized anchor per tet.
void add_anchor(AnchorSet& set, const TetMesh& mesh, const AnchorSpec& spec, const FieldOptConfig& cfg);

/// Line format: `tet|vertex|face id dx dy dz [weight|-] [critical]`; '#' comments.
std::vector<AnchorSpec> parse_anchor_specs(std::string_view text);
std::string format_anchor_specs(const std::vector<AnchorSpec>& specs);

/// Row i: v_i - mean of the face-adjacent tets of T_i (zero row without neighbours).
SparseMatrix uniform_laplacian(const TetMesh& mesh);

/// Sparse normal equations (a^2 Lu^T Lu + diag(w^2)) x = w^2 target, set up
/// once and shared by the three components. Systems whose diagonal weights
/// dominate every row go through Jacobi-preconditioned CG, the rest through a
/// sparse Cholesky factorization.
class FieldSystem {
public:
    FieldSystem(const SparseMatrix& lu_t_lu, double alpha, const Eigen::VectorXd& weights);
    ~FieldSystem();
    FieldSystem(const FieldSystem&) = delete;
    FieldSystem& operator=(const FieldSystem&) = delete;

    /// targets: one row per tet, only rows with non-zero weight are read.
    VectorField solve(const VectorField& targets) const;
    const SparseMatrix& matrix() const { return a_; }
    bool iterative() const { return !factor_; }

private:
    SparseMatrix a_;
    Eigen::VectorXd w2_;
    std::unique_ptr<detail::SpdFactor> factor_;
};

/// Least-squares solution before normalization.
VectorField solve_field_raw(const TetMesh& mesh, const AnchorSet& anchors, const FieldOptConfig& cfg);

/// Anchor-constrained smooth unit field. Throws EmptyAnchorSet and
/// ZeroVectorAfterSolve.
VectorField interpolate_field(const TetMesh& mesh, const AnchorSet& anchors, const FieldOptConfig& cfg);

/// max over anchors of |v_i - a_i|.
double anchor_residual(const VectorField& field, const AnchorSet& anchors);

/// Tets within `ring_depth` face-adjacency steps of a PART face (depth 1 = the
/// tets owning the faces), with the unit part normal (out of the part) they inherit.
std::vector<std::pair<std::int32_t, Vec3>> part_normal_ring(const TetMesh& mesh, int ring_depth);

/// v <- normalize(a v + (1 - a) n_part) near the part; throws NoPartFaces.
VectorField blend_with_normals(
    const VectorField& field, const TetMesh& mesh, double alpha_blend, int ring_depth = 2);

} // namespace peel
