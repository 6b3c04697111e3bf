#ifndef FLUXFIT_LEAST_SQUARES_HPP
#define FLUXFIT_LEAST_SQUARES_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fluxfit/errors.hpp"
#include "fluxfit/parallel.hpp"

namespace fluxfit
{
// Bounded nonlinear least squares: minimize sum_i r_i(x)^2 subject to lower <= x <= upper.
//
// Trust-region Levenberg-Marquardt with Moré column scaling. The Jacobian is built by central
// differences (one-sided next to a bound). Variables sitting on a bound whose gradient points
// outward are held fixed for the step; the step is then projected onto the box and accepted only
// if the actual reduction is a positive fraction of the predicted one, so the accepted objective
// never increases.

struct LeastSquaresOptions
{
    int max_iter = 100;
    double x_tol = 1e-10;
    double f_tol = 1e-12;
    double g_tol = 1e-12;
    double rel_step = 1e-6;   // finite-difference step relative to |x|
    double abs_step = 1e-8;   // floor on the step
    double initial_radius_factor = 100.0;
    unsigned threads = 1;
};

struct IterationRecord
{
    int iteration = 0;
    double objective = 0.0;    // sum of squares after the iteration
    double trust_radius = 0.0; // scaled radius after the update
    double step_norm = 0.0;    // scaled length of the trial step
    bool accepted = false;
};

struct LeastSquaresResult
{
    Eigen::VectorXd x;
    Eigen::VectorXd residuals;
    Eigen::MatrixXd jacobian; // at x
    double objective = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::string status;
    std::vector<IterationRecord> log;
};

namespace detail
{
template <class F>
Eigen::MatrixXd finite_difference_jacobian(const F &fn, const Eigen::VectorXd &x, Eigen::Index m,
                                           const Eigen::VectorXd &lower, const Eigen::VectorXd &upper,
                                           const LeastSquaresOptions &opt, const Eigen::VectorXd &r0,
                                           int &evaluations)
{
    const Eigen::Index n = x.size();
    Eigen::MatrixXd jac(m, n);
    // Per column: (x_plus, x_minus, divisor); a collapsed side reuses r0.
    struct Plan
    {
        double plus, minus;
        bool use_plus, use_minus;
    };
    std::vector<Plan> plans(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j)
    {
        const double h = std::max(opt.rel_step * std::abs(x[j]), opt.abs_step);
        Plan p{x[j] + h, x[j] - h, true, true};
        if (p.plus > upper[j])
        {
            p.use_plus = false;
            p.plus = x[j];
            p.minus = std::max(x[j] - h, lower[j]);
        }
        else if (p.minus < lower[j])
        {
            p.use_minus = false;
            p.minus = x[j];
        }
        plans[static_cast<std::size_t>(j)] = p;
    }
    std::vector<Eigen::VectorXd> evals(static_cast<std::size_t>(2 * n));
    parallel_for(static_cast<std::size_t>(2 * n), opt.threads, [&](std::size_t k) {
        const auto j = static_cast<Eigen::Index>(k / 2);
        const auto &p = plans[k / 2];
        const bool plus = (k % 2) == 0;
        if ((plus && !p.use_plus) || (!plus && !p.use_minus))
            return;
        Eigen::VectorXd xt = x;
        xt[j] = plus ? p.plus : p.minus;
        evals[k] = fn(xt);
    });
    for (Eigen::Index j = 0; j < n; ++j)
    {
        const auto &p = plans[static_cast<std::size_t>(j)];
        const Eigen::VectorXd &rp = p.use_plus ? evals[static_cast<std::size_t>(2 * j)] : r0;
        const Eigen::VectorXd &rm = p.use_minus ? evals[static_cast<std::size_t>(2 * j + 1)] : r0;
        evaluations += int(p.use_plus) + int(p.use_minus);
        const double span = p.plus - p.minus;
        if (span <= 0.0)
            jac.col(j).setZero();
        else
            jac.col(j) = (rp - rm) / span;
    }
    return jac;
}

// Solves (J^T J + lambda D^2) d = -J^T r on the given columns, returning d (size = cols).
inline Eigen::VectorXd damped_step(const Eigen::MatrixXd &J, const Eigen::VectorXd &r, const Eigen::VectorXd &D,
                                   double lambda)
{
    if (lambda == 0.0)
        return J.completeOrthogonalDecomposition().solve(-r);
    const Eigen::Index n = J.cols();
    Eigen::MatrixXd A(J.rows() + n, n);
    A.topRows(J.rows()) = J;
    A.bottomRows(n) = (std::sqrt(lambda) * D).asDiagonal();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(J.rows() + n);
    b.head(J.rows()) = -r;
    return A.colPivHouseholderQr().solve(b);
}

// Step minimizing the linear model inside ||D d|| <= radius (log-bisection on the damping).
inline Eigen::VectorXd trust_region_step(const Eigen::MatrixXd &J, const Eigen::VectorXd &r,
                                         const Eigen::VectorXd &D, double radius)
{
    Eigen::VectorXd step = damped_step(J, r, D, 0.0);
    if ((D.cwiseProduct(step)).norm() <= radius * 1.1)
        return step;
    const Eigen::VectorXd g = J.transpose() * r;
    // At lambda = ||D^-1 g|| / radius the damped step is inside the region.
    double hi = g.cwiseQuotient(D).norm() / radius;
    if (!(hi > 0.0) || !std::isfinite(hi))
        return step;
    double lo = hi * 1e-14;
    Eigen::VectorXd inside = damped_step(J, r, D, hi);
    for (int it = 0; it < 100; ++it)
    {
        const double lambda = std::sqrt(lo * hi);
        step = damped_step(J, r, D, lambda);
        const double len = (D.cwiseProduct(step)).norm();
        if (std::abs(len - radius) <= 0.1 * radius)
            return step;
        if (len > radius)
            lo = lambda;
        else
        {
            hi = lambda;
            inside = step;
        }
        if (hi <= lo * (1.0 + 1e-12))
            break;
    }
    return inside;
}
} // namespace detail

template <class F>
LeastSquaresResult minimize_least_squares(const F &fn, Eigen::VectorXd x0, const Eigen::VectorXd &lower,
                                          const Eigen::VectorXd &upper, const LeastSquaresOptions &opt = {})
{
    const Eigen::Index n = x0.size();
    if (lower.size() != n || upper.size() != n)
        throw InvalidParameter("minimize_least_squares: bound sizes do not match x0");
    for (Eigen::Index j = 0; j < n; ++j)
    {
        if (!(lower[j] <= upper[j]))
            throw InvalidParameter("minimize_least_squares: lower bound above upper bound");
        x0[j] = std::clamp(x0[j], lower[j], upper[j]);
    }

    LeastSquaresResult res;
    res.x = x0;
    res.residuals = fn(res.x);
    res.evaluations = 1;
    res.objective = res.residuals.squaredNorm();
    const Eigen::Index m = res.residuals.size();
    if (n == 0)
    {
        res.converged = true;
        res.status = "no free parameters";
        return res;
    }

    Eigen::VectorXd scale = Eigen::VectorXd::Zero(n);
    double radius = 0.0;
    bool need_jacobian = true;
    Eigen::MatrixXd J;

    for (int iter = 1; iter <= opt.max_iter; ++iter)
    {
        res.iterations = iter;
        if (need_jacobian)
        {
            J = detail::finite_difference_jacobian(fn, res.x, m, lower, upper, opt, res.residuals, res.evaluations);
            need_jacobian = false;
            for (Eigen::Index j = 0; j < n; ++j)
                scale[j] = std::max(scale[j], J.col(j).norm());
        }
        Eigen::VectorXd D = scale;
        for (Eigen::Index j = 0; j < n; ++j)
            if (!(D[j] > 0.0))
                D[j] = 1.0;
        if (radius == 0.0)
        {
            const double dx = D.cwiseProduct(res.x).norm();
            radius = opt.initial_radius_factor * (dx > 0.0 ? dx : 1.0);
        }

        if (res.objective == 0.0)
        {
            res.converged = true;
            res.status = "zero residual";
            break;
        }

        const Eigen::VectorXd g = J.transpose() * res.residuals;
        std::vector<Eigen::Index> free;
        for (Eigen::Index j = 0; j < n; ++j)
        {
            const double span = std::max(upper[j] - lower[j], 1.0) * 1e-14;
            const bool at_lower = res.x[j] <= lower[j] + span && g[j] > 0.0;
            const bool at_upper = res.x[j] >= upper[j] - span && g[j] < 0.0;
            if (!at_lower && !at_upper)
                free.push_back(j);
        }
        double gnorm = 0.0;
        const double rnorm = std::sqrt(res.objective);
        for (auto j : free)
            gnorm = std::max(gnorm, std::abs(g[j]) / (D[j] * rnorm));
        if (free.empty() || gnorm <= opt.g_tol)
        {
            res.converged = true;
            res.status = "gradient tolerance";
            break;
        }

        const auto nf = static_cast<Eigen::Index>(free.size());
        Eigen::MatrixXd Jf(m, nf);
        Eigen::VectorXd Df(nf);
        for (Eigen::Index k = 0; k < nf; ++k)
        {
            Jf.col(k) = J.col(free[static_cast<std::size_t>(k)]);
            Df[k] = D[free[static_cast<std::size_t>(k)]];
        }
        const Eigen::VectorXd df = detail::trust_region_step(Jf, res.residuals, Df, radius);

        Eigen::VectorXd trial = res.x;
        for (Eigen::Index k = 0; k < nf; ++k)
        {
            const auto j = free[static_cast<std::size_t>(k)];
            trial[j] = std::clamp(res.x[j] + df[k], lower[j], upper[j]);
        }
        const Eigen::VectorXd step = trial - res.x;
        const double step_norm = D.cwiseProduct(step).norm();
        const double predicted = res.objective - (res.residuals + J * step).squaredNorm();

        Eigen::VectorXd trial_r;
        double trial_obj = std::numeric_limits<double>::infinity();
        try
        {
            trial_r = fn(trial);
            ++res.evaluations;
            if (trial_r.allFinite())
                trial_obj = trial_r.squaredNorm();
        }
        catch (const NumericalError &)
        {
            ++res.evaluations;
        }
        const double actual = res.objective - trial_obj;
        const double rho = predicted > 0.0 ? actual / predicted : -1.0;

        if (rho < 0.25)
            radius = 0.25 * std::max(step_norm, 1e-300);
        else if (rho > 0.75)
            radius = std::max(radius, 2.0 * step_norm);

        const bool accepted = rho > 1e-4 && actual > 0.0;
        const double before = res.objective;
        if (accepted)
        {
            res.x = trial;
            res.residuals = trial_r;
            res.objective = trial_obj;
            need_jacobian = true;
        }
        res.log.push_back({iter, res.objective, radius, step_norm, accepted});

        const double xnorm = D.cwiseProduct(res.x).norm();
        if (accepted)
        {
            if (actual <= opt.f_tol * before && predicted <= opt.f_tol * before)
            {
                res.converged = true;
                res.status = "objective tolerance";
                break;
            }
            if (step_norm <= opt.x_tol * (xnorm + opt.x_tol))
            {
                res.converged = true;
                res.status = "step tolerance";
                break;
            }
        }
        else if (radius <= opt.x_tol * (xnorm + opt.x_tol))
        {
            res.converged = true;
            res.status = "trust region collapsed below step tolerance";
            break;
        }
    }
    if (!res.converged)
        res.status = "maximum iterations reached";
    if (need_jacobian)
        J = detail::finite_difference_jacobian(fn, res.x, m, lower, upper, opt, res.residuals, res.evaluations);
    res.jacobian = J;
    return res;
}

// Near-degenerate parameter directions from the column-normalized Jacobian.
struct RankDiagnosis
{
    Eigen::VectorXd singular_values; // of the normalized Jacobian, descending
    double condition_ratio = 1.0;    // smallest / largest
    std::vector<std::vector<Eigen::Index>> weak_directions; // parameter indices with |v| > 0.3 per weak direction
};

inline RankDiagnosis diagnose_rank(const Eigen::MatrixXd &J, double rank_tol)
{
    RankDiagnosis out;
    const Eigen::Index n = J.cols();
    if (n == 0)
        return out;
    Eigen::MatrixXd Jn = J;
    for (Eigen::Index j = 0; j < n; ++j)
    {
        const double c = J.col(j).norm();
        if (c > 0.0)
            Jn.col(j) /= c;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Jn, Eigen::ComputeFullV);
    out.singular_values = svd.singularValues();
    Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
    s.head(out.singular_values.size()) = out.singular_values;
    const double smax = s.maxCoeff();
    out.condition_ratio = smax > 0.0 ? s.minCoeff() / smax : 0.0;
    for (Eigen::Index k = 0; k < n; ++k)
    {
        if (smax > 0.0 && s[k] >= rank_tol * smax)
            continue;
        std::vector<Eigen::Index> involved;
        for (Eigen::Index j = 0; j < n; ++j)
            if (std::abs(svd.matrixV()(j, k)) > 0.3)
                involved.push_back(j);
        out.weak_directions.push_back(std::move(involved));
    }
    return out;
}

} // namespace fluxfit

#endif // FLUXFIT_LEAST_SQUARES_HPP
