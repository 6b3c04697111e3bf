#ifndef FLUXFIT_EIGENSOLVE_HPP
#define FLUXFIT_EIGENSOLVE_HPP

#include <sstream>

#include <Eigen/Dense>

#include "fluxfit/errors.hpp"

namespace fluxfit
{
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct EigenSystem
{
    Vector values;  // ascending
    Matrix vectors; // column k belongs to values[k]
};

// Dense real-symmetric eigendecomposition. Only the lower triangle is read.
inline EigenSystem eigensolve(const Matrix &m, bool with_vectors = true)
{
    if (m.rows() != m.cols())
        throw NumericalError("eigensolve: matrix is not square");
    if (!m.allFinite())
        throw NumericalError("eigensolve: matrix has non-finite entries (" + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()) + ")");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(m, with_vectors ? Eigen::ComputeEigenvectors
                                                                 : Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
    {
        std::ostringstream os;
        os << "eigensolve: solver failed on " << m.rows() << "x" << m.cols() << " matrix, max|a|="
           << m.cwiseAbs().maxCoeff() << ", asymmetry=" << (m - m.transpose()).cwiseAbs().maxCoeff();
        throw NumericalError(os.str());
    }
    EigenSystem out;
    out.values = solver.eigenvalues();
    if (with_vectors)
        out.vectors = solver.eigenvectors();
    return out;
}

} // namespace fluxfit

#endif // FLUXFIT_EIGENSOLVE_HPP
