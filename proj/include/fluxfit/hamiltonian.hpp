#ifndef FLUXFIT_HAMILTONIAN_HPP
#define FLUXFIT_HAMILTONIAN_HPP

#include <algorithm>
#include <cmath>

#include "fluxfit/circuit.hpp"
#include "fluxfit/eigensolve.hpp"
#include "fluxfit/quadrature.hpp"

namespace fluxfit
{
// Truncation of the fluxonium oscillator basis and of the resonator Fock space.
struct BasisSpec
{
    int n_fluxonium = 60;
    int n_resonator = 8;
    int max_dimension = 4000;

    int dimension() const { return n_fluxonium * n_resonator; }
};

inline void validate(const BasisSpec &b)
{
    if (b.n_fluxonium < 10)
        throw InvalidParameter("n_fluxonium must be >= 10, got " + std::to_string(b.n_fluxonium));
    if (b.n_resonator < 1)
        throw InvalidParameter("n_resonator must be >= 1, got " + std::to_string(b.n_resonator));
    if (static_cast<long long>(b.n_fluxonium) * b.n_resonator > b.max_dimension)
        throw InvalidParameter("basis dimension " + std::to_string(b.dimension()) + " exceeds cap " +
                               std::to_string(b.max_dimension));
}

struct QuadratureOptions
{
    int extra_nodes = 32;      // node count = 2 * n_fluxonium + extra_nodes
    bool verify = true;        // rebuild with doubled nodes and compare
    double rel_tol = 1e-9;     // allowed change relative to max |H|
    int max_doublings = 4;     // node count may grow up to 2^max_doublings times before giving up
};

// Zero-point amplitude of phi_f - phi_ext in the (E_C, E_L) oscillator: phi = phi_zpf (a + a^dag).
inline double fluxonium_phi_zpf(double E_C, double E_L) { return std::pow(2.0 * E_C / E_L, 0.25); }
inline double plasma_frequency(double E_C, double E_L) { return std::sqrt(8.0 * E_C * E_L); }

// <j| V_J(phi_ext + phi') |k> in the oscillator basis by Gauss-Hermite quadrature.
inline Matrix junction_matrix(const JunctionModel &junction, double phi_ext, double phi_zpf, int n, int nodes)
{
    const auto basis = sampled_basis(n, nodes);
    const double scale = std::sqrt(2.0) * phi_zpf;
    Vector weighted(nodes);
    for (int i = 0; i < nodes; ++i)
        weighted[i] = basis->rule.weights[i] * junction.energy(phi_ext + scale * basis->rule.nodes[i]);
    Matrix m = basis->psi * weighted.asDiagonal() * basis->psi.transpose();
    return 0.5 * (m + m.transpose());
}

// Fluxonium Hamiltonian 4 E_C n^2 + V_J(phi) + E_L (phi - phi_ext)^2 / 2 in the eigenbasis of its LC part.
inline Matrix build_fluxonium_matrix(const JunctionModel &junction, const CircuitParams &params, double phi_ext,
                                     const BasisSpec &basis, const QuadratureOptions &quad = {})
{
    validate(params);
    validate(basis);
    if (!std::isfinite(phi_ext))
        throw InvalidParameter("phi_ext must be finite");
    const int n = basis.n_fluxonium;
    const double omega = plasma_frequency(params.E_C, params.E_L);
    Matrix h = Matrix::Zero(n, n);
    for (int k = 0; k < n; ++k)
        h(k, k) = omega * (k + 0.5);
    if (junction.is_trivial())
        return h;

    const double zpf = fluxonium_phi_zpf(params.E_C, params.E_L);
    int nodes = 2 * n + quad.extra_nodes;
    Matrix vj = junction_matrix(junction, phi_ext, zpf, n, nodes);
    if (quad.verify)
    {
        // Nearly transparent channels have a sharp potential near phi = pi; keep doubling until stable.
        double change = 0.0;
        for (int round = 0;; ++round)
        {
            Matrix fine = junction_matrix(junction, phi_ext, zpf, n, 2 * nodes);
            const double scale = std::max((h + fine).cwiseAbs().maxCoeff(), 1e-300);
            change = (fine - vj).cwiseAbs().maxCoeff() / scale;
            vj = std::move(fine);
            nodes *= 2;
            if (change <= quad.rel_tol)
                break;
            if (round + 1 >= quad.max_doublings)
                throw NumericalError("junction quadrature not converged: going to " + std::to_string(nodes) +
                                     " nodes changed the matrix by " + std::to_string(change) + " (relative)");
        }
    }
    h += vj;
    return h;
}

// Matrix of (a + a^dag) truncated to n states.
inline Matrix ladder_position(int n)
{
    Matrix x = Matrix::Zero(n, n);
    for (int k = 0; k + 1 < n; ++k)
        x(k, k + 1) = x(k + 1, k) = std::sqrt(static_cast<double>(k + 1));
    return x;
}

// Product-basis assembly; index = photon * n_f + fluxonium_state.
// `coupling` is the coefficient g of -g phi_r (phi_f - phi_ext).
inline Matrix assemble_coupled_matrix(const Matrix &fluxonium, double fluxonium_zpf, const ResonatorEnergies &res,
                                      double coupling, int n_resonator)
{
    const int nf = static_cast<int>(fluxonium.rows());
    const int dim = nf * n_resonator;
    const double omega_r = plasma_frequency(res.E_Cr, res.E_Lr);
    const double res_zpf = fluxonium_phi_zpf(res.E_Cr, res.E_Lr);
    Matrix h = Matrix::Zero(dim, dim);
    for (int r = 0; r < n_resonator; ++r)
    {
        h.block(r * nf, r * nf, nf, nf) = fluxonium;
        h.diagonal().segment(r * nf, nf).array() += omega_r * (r + 0.5);
    }
    if (coupling != 0.0 && n_resonator > 1)
    {
        const Matrix phi_f = fluxonium_zpf * ladder_position(nf);
        for (int r = 0; r + 1 < n_resonator; ++r)
        {
            const Matrix block = (-coupling * res_zpf * std::sqrt(static_cast<double>(r + 1))) * phi_f;
            h.block(r * nf, (r + 1) * nf, nf, nf) = block;
            h.block((r + 1) * nf, r * nf, nf, nf) = block;
        }
    }
    return h;
}

// Coupled fluxonium-resonator Hamiltonian in the product basis (resonator Fock x fluxonium oscillator).
inline Matrix build_coupled_matrix(const JunctionModel &junction, const CircuitParams &params, double phi_ext,
                                   const BasisSpec &basis, const QuadratureOptions &quad = {})
{
    validate(basis);
    if (basis.n_resonator < 2)
        throw InvalidParameter("coupled model needs n_resonator >= 2");
    const Matrix hf = build_fluxonium_matrix(junction, params, phi_ext, basis, quad);
    return assemble_coupled_matrix(hf, fluxonium_phi_zpf(params.E_C, params.E_L), resonator_energies(params),
                                   coupling_coefficient(params), basis.n_resonator);
}

} // namespace fluxfit

#endif // FLUXFIT_HAMILTONIAN_HPP
