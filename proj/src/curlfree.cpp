#include "peel/curlfree.hpp"

#include "peel/error.hpp"
#include "peel/log.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace peel {

CurlRemovalReport remove_curl(const TetMesh& mesh, const VectorField& field, const AnchorSet& anchors,
    const FieldOptConfig& cfg, const CurlRemovalOptions& opts)
{
    cfg.validate();
    if (field.size() != mesh.num_tets())
        throw Error(ErrorCode::InvalidArgument, "vector field size does not match tet count");
    if (opts.max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters must be at least 1");

    const AnchorSet critical = anchors.critical_only();
    const PoissonContext ctx(mesh);
    const SparseMatrix lu = uniform_laplacian(mesh);
    const SparseMatrix ltl = SparseMatrix(lu.transpose()) * lu;
    const auto n = static_cast<Eigen::Index>(mesh.num_tets());

    CurlRemovalReport report;
    std::set<std::int32_t> zero_tets;
    std::unique_ptr<FieldSystem> system;
    Eigen::VectorXd system_weights;

    VectorField v = field;
    ScalarField phi;
    for (int k = 1; k <= opts.max_iters; ++k) {
        const double r = i_rot(ctx, v, &phi);
        report.i_rot_history.push_back(r);
        report.iterations = k;
        if (opts.progress) opts.progress(k, r);
        log::debug("curl iteration " + std::to_string(k) + " I_rot " + std::to_string(r));
        if (r <= opts.threshold) {
            report.converged = true;
            break;
        }
        if (k == opts.max_iters) break;

        const VectorField grad = gradient(mesh, phi);
        Eigen::VectorXd w(n);
        VectorField targets(mesh.num_tets(), Vec3::Zero());
        for (Eigen::Index t = 0; t < n; ++t) {
            const auto ti = static_cast<std::size_t>(t);
            if (const Anchor* a = critical.find(static_cast<std::int32_t>(t))) {
                w[t] = cfg.beta_critical;
                targets[ti] = a->direction;
                continue;
            }
            const double len = grad[ti].norm();
            if (len < 1e-12) {
                w[t] = 0.0;
                zero_tets.insert(static_cast<std::int32_t>(t));
                continue;
            }
            w[t] = cfg.gamma;
            targets[ti] = grad[ti] / len;
        }
        if (!system || w != system_weights) {
            system = std::make_unique<FieldSystem>(ltl, cfg.alpha, w);
            system_weights = w;
        }
        v = normalized(system->solve(targets));
    }
    if (!report.converged)
        log::warn("curl removal did not reach the threshold in " + std::to_string(report.iterations) + " iterations");
    report.final_field = std::move(v);
    report.final_scalar = std::move(phi);
    report.zero_gradient_tets.assign(zero_tets.begin(), zero_tets.end());
    return report;
}

double angle_percentile(const TetMesh& mesh, const VectorField& v, const ScalarField& g, double fraction)
{
    const VectorField grad = gradient(mesh, g);
    std::vector<double> angles(mesh.num_tets());
    for (std::size_t t = 0; t < mesh.num_tets(); ++t) {
        const double len = grad[t].norm() * v[t].norm();
        const double c = len > 0.0 ? std::clamp(grad[t].dot(v[t]) / len, -1.0, 1.0) : -1.0;
        angles[t] = std::acos(c) * 180.0 / M_PI;
    }
    if (angles.empty()) return 0.0;
    std::sort(angles.begin(), angles.end());
    const auto idx = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(angles.size()))) - 1;
    return angles[std::min(idx, angles.size() - 1)];
}

} // namespace peel
