#include "peel/diffops.hpp"

#include "peel/error.hpp"
#include "peel/log.hpp"
#include "spd_solver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace peel {

Eigen::Matrix<double, 4, 3> hat_gradients(const TetMesh& mesh, std::size_t t)
{
    const auto& tet = mesh.tet(t);
    const Vec3& x0 = mesh.vertex(tet[0]);
    Eigen::Matrix3d e;
    e.row(0) = (mesh.vertex(tet[1]) - x0).transpose();
    e.row(1) = (mesh.vertex(tet[2]) - x0).transpose();
    e.row(2) = (mesh.vertex(tet[3]) - x0).transpose();
    const double det = e.determinant();
    if (!(std::abs(det) >= 1e-12)) {
        throw Error(ErrorCode::SingularTet, "edge matrix of tet " + std::to_string(t) + " is singular");
    }
    // grad g = E^-1 (g1-g0, g2-g0, g3-g0); column k of E^-1 is grad h_{k+1}.
    const Eigen::Matrix3d inv = e.inverse();
    Eigen::Matrix<double, 4, 3> grads;
    for (int k = 0; k < 3; ++k) grads.row(k + 1) = inv.col(k).transpose();
    grads.row(0) = -(grads.row(1) + grads.row(2) + grads.row(3));
    return grads;
}

VectorField gradient(const TetMesh& mesh, const ScalarField& g)
{
    if (static_cast<std::size_t>(g.size()) != mesh.num_vertices())
        throw Error(ErrorCode::InvalidArgument, "scalar field size does not match vertex count");
    VectorField out(mesh.num_tets());
    for (std::size_t t = 0; t < mesh.num_tets(); ++t) {
        const auto& tet = mesh.tet(t);
        const auto grads = hat_gradients(mesh, t);
        Vec3 d = Vec3::Zero();
        // Differences keep linear reproduction exact up to rounding of E^-1.
        for (int k = 1; k < 4; ++k) d += (g[tet[k]] - g[tet[0]]) * grads.row(k).transpose();
        out[t] = d;
    }
    return out;
}

Eigen::VectorXd integrated_divergence(const TetMesh& mesh, const VectorField& v)
{
    if (v.size() != mesh.num_tets())
        throw Error(ErrorCode::InvalidArgument, "vector field size does not match tet count");
    Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.num_vertices()));
    for (std::size_t t = 0; t < mesh.num_tets(); ++t) {
        const auto& tet = mesh.tet(t);
        for (int i = 0; i < 4; ++i) {
            // inward area vector of the face opposite i, divided by 3
            d[tet[i]] -= face_area_vector(mesh, t, i).dot(v[t]) / 3.0;
        }
    }
    return d;
}

double cotan_weight(const Vec3& xi, const Vec3& xj, const Vec3& xk, const Vec3& xl)
{
    const Vec3 e = xl - xk;
    const double len = e.norm();
    const Vec3 dir = e / len;
    Vec3 u = xi - xk;
    Vec3 w = xj - xk;
    u -= u.dot(dir) * dir;
    w -= w.dot(dir) * dir;
    const double cot = u.dot(w) / u.cross(w).norm();
    return len * cot / 6.0;
}

SparseMatrix cotan_laplacian(const TetMesh& mesh, std::size_t* negative_weights)
{
    static constexpr std::array<std::array<int, 4>, 6> kEdges = {{
        {0, 1, 2, 3},
        {0, 2, 1, 3},
        {0, 3, 1, 2},
        {1, 2, 0, 3},
        {1, 3, 0, 2},
        {2, 3, 0, 1},
    }};
    const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(12 * mesh.num_tets());
    for (std::size_t t = 0; t < mesh.num_tets(); ++t) {
        const auto& tet = mesh.tet(t);
        for (const auto& e : kEdges) {
            const auto i = tet[e[0]];
            const auto j = tet[e[1]];
            const double w = cotan_weight(
                mesh.vertex(i), mesh.vertex(j), mesh.vertex(tet[e[2]]), mesh.vertex(tet[e[3]]));
            trips.emplace_back(i, j, -w);
            trips.emplace_back(j, i, -w);
        }
    }
    SparseMatrix off(n, n);
    off.setFromTriplets(trips.begin(), trips.end());

    // Right-angle dihedrals give weights that are zero up to rounding; only
    // clearly negative ones count.
    double scale = 0.0;
    for (Eigen::Index k = 0; k < off.nonZeros(); ++k) scale = std::max(scale, std::abs(off.valuePtr()[k]));
    const double tol = 1e-10 * scale;
    std::size_t negative = 0;
    trips.clear();
    trips.reserve(off.nonZeros() + n);
    for (Eigen::Index c = 0; c < off.outerSize(); ++c) {
        double sum = 0.0;
        for (SparseMatrix::InnerIterator it(off, c); it; ++it) {
            trips.emplace_back(it.row(), it.col(), it.value());
            sum += it.value();
            if (it.value() > tol && it.row() < it.col()) ++negative;
        }
        trips.emplace_back(c, c, -sum);
    }
    SparseMatrix lap(n, n);
    lap.setFromTriplets(trips.begin(), trips.end());
    if (negative > 0) log::warn(std::to_string(negative) + " negative cotangent weights (poor tet quality)");
    if (negative_weights) *negative_weights = negative;
    return lap;
}

Eigen::VectorXd lumped_mass(const TetMesh& mesh)
{
    Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.num_vertices()));
    for (std::size_t t = 0; t < mesh.num_tets(); ++t)
        for (auto v : mesh.tet(t)) m[v] += mesh.volume(t) / 4.0;
    return m;
}

SparseMatrix mass_matrix(const TetMesh& mesh)
{
    const Eigen::VectorXd m = lumped_mass(mesh);
    SparseMatrix out(m.size(), m.size());
    out.reserve(Eigen::VectorXi::Constant(m.size(), 1));
    for (Eigen::Index i = 0; i < m.size(); ++i) out.insert(i, i) = m[i];
    out.makeCompressed();
    return out;
}

std::vector<std::int32_t> tagged_vertices(const TetMesh& mesh, BoundaryTag tag)
{
    std::vector<std::uint8_t> mark(mesh.num_vertices(), 0);
    for (const auto& bf : mesh.boundary_faces()) {
        if (bf.tag != tag) continue;
        for (auto v : mesh.face(bf.tet, bf.local_face)) mark[v] = 1;
    }
    std::vector<std::int32_t> out;
    for (std::size_t v = 0; v < mark.size(); ++v)
        if (mark[v]) out.push_back(static_cast<std::int32_t>(v));
    return out;
}

PoissonSolver::PoissonSolver(const SparseMatrix& laplacian, std::vector<std::int32_t> pinned)
    : n_(static_cast<std::size_t>(laplacian.rows())), pinned_(std::move(pinned))
{
    std::sort(pinned_.begin(), pinned_.end());
    pinned_.erase(std::unique(pinned_.begin(), pinned_.end()), pinned_.end());
    if (pinned_.empty()) throw Error(ErrorCode::InvalidArgument, "Poisson solve needs at least one pinned vertex");

    std::vector<std::int32_t> pin_index(n_, -1);
    for (std::size_t k = 0; k < pinned_.size(); ++k) pin_index[pinned_[k]] = static_cast<std::int32_t>(k);
    free_index_.assign(n_, -1);
    for (std::size_t v = 0; v < n_; ++v) {
        if (pin_index[v] >= 0) continue;
        free_index_[v] = static_cast<std::int32_t>(free_.size());
        free_.push_back(static_cast<std::int32_t>(v));
    }

    const auto nf = static_cast<Eigen::Index>(free_.size());
    const auto np = static_cast<Eigen::Index>(pinned_.size());
    std::vector<Eigen::Triplet<double>> aa;
    std::vector<Eigen::Triplet<double>> ap;
    for (Eigen::Index c = 0; c < laplacian.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(laplacian, c); it; ++it) {
            const auto r = free_index_[it.row()];
            if (r < 0) continue;
            if (const auto fc = free_index_[it.col()]; fc >= 0)
                aa.emplace_back(r, fc, it.value());
            else
                ap.emplace_back(r, pin_index[it.col()], it.value());
        }
    }
    coupling_.resize(nf, np);
    coupling_.setFromTriplets(ap.begin(), ap.end());
    if (nf == 0) return;
    SparseMatrix a(nf, nf);
    a.setFromTriplets(aa.begin(), aa.end());
    factor_ = std::make_unique<detail::SpdFactor>();
    if (!factor_->compute(a)) throw Error(ErrorCode::SolverFailure, "factorization of the Laplacian failed");
}

PoissonSolver::~PoissonSolver() = default;

ScalarField PoissonSolver::solve(const Eigen::VectorXd& rhs, const Eigen::VectorXd& pinned_values) const
{
    if (static_cast<std::size_t>(rhs.size()) != n_ || static_cast<std::size_t>(pinned_values.size()) != pinned_.size())
        throw Error(ErrorCode::InvalidArgument, "Poisson right-hand side has the wrong size");
    ScalarField g(static_cast<Eigen::Index>(n_));
    for (std::size_t k = 0; k < pinned_.size(); ++k) g[pinned_[k]] = pinned_values[static_cast<Eigen::Index>(k)];
    if (free_.empty()) return g;
    Eigen::VectorXd b(static_cast<Eigen::Index>(free_.size()));
    for (std::size_t k = 0; k < free_.size(); ++k) b[static_cast<Eigen::Index>(k)] = rhs[free_[k]];
    b -= coupling_ * pinned_values;
    const Eigen::VectorXd x = factor_->solve(b);
    if (!x.allFinite())
        throw Error(ErrorCode::SolverFailure, "Poisson back-substitution failed");
    for (std::size_t k = 0; k < free_.size(); ++k) g[free_[k]] = x[static_cast<Eigen::Index>(k)];
    return g;
}

PoissonContext::PoissonContext(const TetMesh& mesh) : mesh_(mesh), laplacian_(cotan_laplacian(mesh)) {}

ScalarField PoissonContext::solve(const VectorField& v, const BoundaryCondition& bc) const
{
    for (const auto& x : v)
        if (!x.allFinite()) throw Error(ErrorCode::InvalidArgument, "vector field has non-finite entries");
    const Eigen::VectorXd d = integrated_divergence(mesh_, v);
    if (bc.kind == BcKind::Natural) {
        if (!natural_) natural_ = std::make_unique<PoissonSolver>(laplacian_, std::vector<std::int32_t>{0});
        ScalarField g = natural_->solve(d, Eigen::VectorXd::Zero(1));
        g.array() -= g.mean();
        return g;
    }
    if (!dirichlet_ || dirichlet_tag_ != bc.tag) {
        auto pinned = tagged_vertices(mesh_, bc.tag);
        if (pinned.empty())
            throw Error(ErrorCode::IncompatibleBC, "no boundary faces tagged " + std::string(to_string(bc.tag)));
        dirichlet_ = std::make_unique<PoissonSolver>(laplacian_, std::move(pinned));
        dirichlet_tag_ = bc.tag;
    }
    return dirichlet_->solve(d, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dirichlet_->pinned().size()), bc.value));
}

ScalarField solve_poisson(const TetMesh& mesh, const VectorField& v, const BoundaryCondition& bc)
{
    return PoissonContext(mesh).solve(v, bc);
}

double projection_residual(const TetMesh& mesh, const VectorField& v, const ScalarField& g)
{
    const VectorField grad = gradient(mesh, g);
    double sum = 0.0;
    double vol = 0.0;
    for (std::size_t t = 0; t < mesh.num_tets(); ++t) {
        sum += mesh.volume(t) * (v[t] - grad[t]).squaredNorm();
        vol += mesh.volume(t);
    }
    return sum / vol;
}

double i_rot(const PoissonContext& ctx, const VectorField& v, ScalarField* g)
{
    ScalarField phi = ctx.solve(v, BoundaryCondition::natural());
    const double r = projection_residual(ctx.mesh(), v, phi);
    if (g) *g = std::move(phi);
    return r;
}

double i_rot(const TetMesh& mesh, const VectorField& v)
{
    return i_rot(PoissonContext(mesh), v);
}

VectorField normalized(const VectorField& v)
{
    VectorField out(v.size());
    for (std::size_t t = 0; t < v.size(); ++t) {
        const double n = v[t].norm();
        if (!(n >= 1e-12))
            throw Error(ErrorCode::ZeroVectorAfterSolve, "tet " + std::to_string(t) + " has a zero field vector");
        out[t] = v[t] / n;
    }
    return out;
}

} // namespace peel
