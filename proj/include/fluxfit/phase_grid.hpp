#ifndef FLUXFIT_PHASE_GRID_HPP
#define FLUXFIT_PHASE_GRID_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fluxfit/circuit.hpp"

namespace fluxfit
{
// Finite-difference reference solver for the uncoupled fluxonium. Shares nothing with the
// oscillator-basis path except the potential definition: a uniform phase grid, a three-point
// stencil for 4 E_C n^2 = -4 E_C d^2/dphi^2, hard walls, and Sturm-sequence bisection.
struct PhaseGrid
{
    double span = 24.0;  // total width, centered on phi_ext
    int points = 32001;
};

struct PhaseGridOptions
{
    int levels = 6;
    double convergence_tol = 1e-5; // GHz; max level shift when the grid spacing is halved
    bool verify = true;
};

namespace detail
{
// Symmetric tridiagonal matrix: diag[i], constant off-diagonal `off`.
struct Tridiagonal
{
    std::vector<double> diag;
    double off = 0.0;

    // Number of eigenvalues strictly below x (Sturm count via LDL^T pivots).
    int count_below(double x) const
    {
        int count = 0;
        double d = 1.0;
        const double off2 = off * off;
        for (std::size_t i = 0; i < diag.size(); ++i)
        {
            d = diag[i] - x - (i == 0 ? 0.0 : off2 / d);
            if (d == 0.0)
                d = -std::numeric_limits<double>::epsilon() * (std::abs(diag[i]) + std::abs(off) + std::abs(x));
            if (d < 0.0)
                ++count;
        }
        return count;
    }

    // k-th smallest eigenvalue (0-based) by bisection.
    double eigenvalue(int k) const
    {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (double a : diag)
        {
            lo = std::min(lo, a - 2.0 * std::abs(off));
            hi = std::max(hi, a + 2.0 * std::abs(off));
        }
        for (int iter = 0; iter < 200; ++iter)
        {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi)
                break;
            if (count_below(mid) > k)
                hi = mid;
            else
                lo = mid;
        }
        return 0.5 * (lo + hi);
    }
};

inline std::vector<double> grid_levels(const JunctionModel &junction, const CircuitParams &params, double phi_ext,
                                       double span, int points, int levels)
{
    const double h = span / (points - 1);
    const double start = phi_ext - 0.5 * span;
    Tridiagonal t;
    t.diag.resize(static_cast<std::size_t>(points));
    const double kinetic = 4.0 * params.E_C / (h * h);
    for (int i = 0; i < points; ++i)
        t.diag[static_cast<std::size_t>(i)] = 2.0 * kinetic + potential_eval(junction, params.E_L, start + i * h, phi_ext);
    t.off = -kinetic;
    std::vector<double> out(static_cast<std::size_t>(levels));
    for (int k = 0; k < levels; ++k)
        out[static_cast<std::size_t>(k)] = t.eigenvalue(k);
    return out;
}
} // namespace detail

// Lowest eigenvalues of the uncoupled fluxonium on a phase grid, GHz.
// With verification on, the grid spacing is halved once and the finer values are returned.
inline std::vector<double> phase_grid_oracle(const JunctionModel &junction, const CircuitParams &params,
                                             double phi_ext, const PhaseGrid &grid = {},
                                             const PhaseGridOptions &opt = {})
{
    validate(params);
    if (!(grid.span >= 24.0))
        throw InvalidParameter("phase grid must span at least phi_ext +/- 12 rad");
    if (grid.points < 2001)
        throw InvalidParameter("phase grid needs at least 2001 points");
    if (opt.levels < 6)
        throw InvalidParameter("phase grid oracle reports at least 6 levels");
    auto coarse = detail::grid_levels(junction, params, phi_ext, grid.span, grid.points, opt.levels);
    if (!opt.verify)
        return coarse;
    auto fine = detail::grid_levels(junction, params, phi_ext, grid.span, 2 * grid.points - 1, opt.levels);
    double worst = 0.0;
    for (std::size_t k = 0; k < fine.size(); ++k)
        worst = std::max(worst, std::abs(fine[k] - coarse[k]));
    if (worst > opt.convergence_tol)
        throw ConvergenceError("phase grid too coarse: halving the spacing moved a level by " +
                                   std::to_string(worst) + " GHz",
                               worst);
    return fine;
}

} // namespace fluxfit

#endif // FLUXFIT_PHASE_GRID_HPP
