#pragma once

#include "peel/fieldopt.hpp"

#include <functional>

namespace peel {

struct CurlRemovalReport {
    int iterations = 0;
    std::vector<double> i_rot_history; ///< entry k is I_rot of the field entering iteration k+1
    bool converged = false;
    VectorField final_field;
    ScalarField final_scalar; ///< phi of the final field (natural bc)
    /// Tets whose grad(phi) vanished in some iteration; their pull term was dropped there.
    std::vector<std::int32_t> zero_gradient_tets;
};

struct CurlRemovalOptions {
    double threshold = 4e-4;
    int max_iters = 100;
    /// Called once per I_rot evaluation, in order, before the convergence test.
    std::function<void(int iteration, double i_rot)> progress;
};

/// Alternates phi <- Poisson(v) and
///   v <- normalize(argmin a^2|Lu v|^2 + sum_crit b^2|v - a|^2 + sum_other g^2|v - grad(phi)/|grad(phi)||^2)
/// until I_rot <= threshold. Only critical anchors survive into the loop.
CurlRemovalReport remove_curl(const TetMesh& mesh, const VectorField& field, const AnchorSet& anchors,
    const FieldOptConfig& cfg, const CurlRemovalOptions& opts = {});

/// Max angle in degrees between grad(g) and v over the best `fraction` of tets
/// (fraction = 0.99 gives the 99th percentile).
double angle_percentile(const TetMesh& mesh, const VectorField& v, const ScalarField& g, double fraction);

} // namespace peel
