#pragma once

#include <Eigen/CholmodSupport>
#include <Eigen/Sparse>

namespace peel::detail {

/// Supernodal Cholesky (CHOLMOD) of a symmetric positive definite matrix.
class SpdFactor {
public:
    /// Returns false when the matrix is not numerically positive definite.
    bool compute(const Eigen::SparseMatrix<double>& a)
    {
        llt_.compute(a);
        return llt_.info() == Eigen::Success;
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return llt_.solve(b); }
    bool ok() const { return llt_.info() == Eigen::Success; }

private:
    Eigen::CholmodSupernodalLLT<Eigen::SparseMatrix<double>> llt_;
};

} // namespace peel::detail
