#pragma once

#include "peel/tetmesh.hpp"

#include <Eigen/Sparse>

#include <memory>

namespace peel {

namespace detail {
class SpdFactor;
}

/// Piecewise-linear scalar field, one value per vertex.
using ScalarField = Eigen::VectorXd;
/// Element-constant vector field, one vector per tet.
using VectorField = std::vector<Vec3>;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Per-tet gradients of the four hat functions. Row i is grad h_i.
Eigen::Matrix<double, 4, 3> hat_gradients(const TetMesh& mesh, std::size_t t);

/// Per-tet gradient of a P1 field. Throws SingularTet when the edge matrix
/// has |det| < 1e-12.
VectorField gradient(const TetMesh& mesh, const ScalarField& g);

/// D_i = (1/3) sum_m s_im . v_m over the tets m around vertex i, with s_im the
/// area vector of the face opposite i pointing toward i. Equivalently
/// D_i = sum_m vol_m grad(h_i) . v_m, so sum_i g_i D_i = sum_t vol_t grad(g)_t . v_t.
Eigen::VectorXd integrated_divergence(const TetMesh& mesh, const VectorField& v);

/// Edge weight w_ij = (1/6) sum l_kl cot(theta_kl) contributed by one tet;
/// (k,l) is the edge opposite (i,j) and theta_kl its dihedral angle.
double cotan_weight(const Vec3& xi, const Vec3& xj, const Vec3& xk, const Vec3& xl);

/// L(i,j) = -w_ij, L(i,i) = sum_k w_ik. Positive semi-definite stiffness matrix.
/// `negative_weights` receives the number of assembled edges with w_ij < 0.
SparseMatrix cotan_laplacian(const TetMesh& mesh, std::size_t* negative_weights = nullptr);

/// Lumped mass: M_ii = (1/4) sum of incident tet volumes.
SparseMatrix mass_matrix(const TetMesh& mesh);
Eigen::VectorXd lumped_mass(const TetMesh& mesh);

enum class BcKind { Natural, Dirichlet };

struct BoundaryCondition {
    BcKind kind = BcKind::Natural;
    BoundaryTag tag = BoundaryTag::Part; ///< Dirichlet only
    double value = 0.0;                  ///< Dirichlet only

    static BoundaryCondition natural() { return {}; }
    static BoundaryCondition dirichlet(BoundaryTag tag, double value = 0.0) { return {BcKind::Dirichlet, tag, value}; }
};

/// Vertices on boundary faces carrying `tag`, sorted.
std::vector<std::int32_t> tagged_vertices(const TetMesh& mesh, BoundaryTag tag);

/// Factorizes L restricted to the free vertices once and solves
/// L g = b with g fixed on the pinned set.
class PoissonSolver {
public:
    PoissonSolver(const SparseMatrix& laplacian, std::vector<std::int32_t> pinned);
    ~PoissonSolver();
    PoissonSolver(const PoissonSolver&) = delete;
    PoissonSolver& operator=(const PoissonSolver&) = delete;

    /// `pinned_values` is indexed like the pinned list.
    ScalarField solve(const Eigen::VectorXd& rhs, const Eigen::VectorXd& pinned_values) const;

    const std::vector<std::int32_t>& pinned() const { return pinned_; }

private:
    std::size_t n_ = 0;
    std::vector<std::int32_t> pinned_;
    std::vector<std::int32_t> free_index_; ///< vertex -> row among free, or -1
    std::vector<std::int32_t> free_;
    SparseMatrix coupling_; ///< L restricted to free rows and pinned columns
    std::unique_ptr<detail::SpdFactor> factor_;
};

/// Reusable operators for repeated solves on one mesh.
class PoissonContext {
public:
    explicit PoissonContext(const TetMesh& mesh);

    const TetMesh& mesh() const { return mesh_; }
    const SparseMatrix& laplacian() const { return laplacian_; }

    /// g minimizing the integral of |grad g - v|^2 under the boundary condition.
    ScalarField solve(const VectorField& v, const BoundaryCondition& bc) const;

private:
    const TetMesh& mesh_;
    SparseMatrix laplacian_;
    mutable std::unique_ptr<PoissonSolver> natural_;
    mutable std::unique_ptr<PoissonSolver> dirichlet_;
    mutable BoundaryTag dirichlet_tag_ = BoundaryTag::Untagged;
};

ScalarField solve_poisson(const TetMesh& mesh, const VectorField& v, const BoundaryCondition& bc);

/// (1/|Omega|) sum_t vol_t |v_t - grad(g)_t|^2 for a given g.
double projection_residual(const TetMesh& mesh, const VectorField& v, const ScalarField& g);

/// Irrotationality metric: projection residual against the natural-bc Poisson solution.
double i_rot(const TetMesh& mesh, const VectorField& v);
double i_rot(const PoissonContext& ctx, const VectorField& v, ScalarField* g = nullptr);

/// Unit vectors; throws ZeroVectorAfterSolve naming the first tet with norm < 1e-12.
VectorField normalized(const VectorField& v);

} // namespace peel
