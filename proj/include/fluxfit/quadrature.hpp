#ifndef FLUXFIT_QUADRATURE_HPP
#define FLUXFIT_QUADRATURE_HPP

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <utility>

#include <Eigen/Dense>

#include "fluxfit/constants.hpp"
#include "fluxfit/errors.hpp"

namespace fluxfit
{
// Normalized harmonic-oscillator eigenfunctions psi_0..psi_{count-1} at x,
// psi_k(x) = H_k(x) exp(-x^2/2) / sqrt(2^k k! sqrt(pi)).
// The recurrence carries a separate log scale so large |x| does not underflow psi_0.
inline Eigen::VectorXd hermite_functions(double x, int count)
{
    Eigen::VectorXd out(count);
    if (count == 0)
        return out;
    constexpr double kRescale = 1e150;
    const double log_rescale = std::log(kRescale);
    double log_scale = -0.5 * x * x;
    double prev = 0.0;
    double cur = std::pow(kPi, -0.25);
    out[0] = cur * std::exp(log_scale);
    for (int k = 0; k + 1 < count; ++k)
    {
        const double next = std::sqrt(2.0 / (k + 1)) * x * cur - std::sqrt(static_cast<double>(k) / (k + 1)) * prev;
        prev = cur;
        cur = next;
        if (std::abs(cur) > kRescale)
        {
            cur /= kRescale;
            prev /= kRescale;
            log_scale += log_rescale;
        }
        out[k + 1] = cur * std::exp(log_scale);
    }
    return out;
}

// Gauss-Hermite rule with weights folded into the Gaussian: for f = psi_j psi_k g,
// integral f dx ~ sum_i weights[i] * f(nodes[i]) exactly when g is a polynomial of low enough degree.
struct HermiteRule
{
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights; // w_i exp(x_i^2)
};

inline HermiteRule make_hermite_rule(int n)
{
    if (n < 1)
        throw InvalidParameter("Gauss-Hermite rule needs at least one node");
    // Golub-Welsch: nodes are eigenvalues of the Jacobi matrix.
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sub(std::max(n - 1, 0));
    for (int k = 1; k < n; ++k)
        sub[k - 1] = std::sqrt(0.5 * k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw NumericalError("Gauss-Hermite node computation failed for n=" + std::to_string(n));
    HermiteRule rule;
    rule.nodes = solver.eigenvalues();
    rule.weights.resize(n);
    // Christoffel numbers of the Hermite-function basis.
    for (int i = 0; i < n; ++i)
        rule.weights[i] = 1.0 / hermite_functions(rule.nodes[i], n).squaredNorm();
    return rule;
}

// Basis functions sampled at the nodes of a rule: rows = basis index, cols = node.
struct SampledBasis
{
    HermiteRule rule;
    Eigen::MatrixXd psi;
};

// Process-wide cache; sampled bases are immutable once built.
inline std::shared_ptr<const SampledBasis> sampled_basis(int basis_size, int node_count)
{
    static std::mutex mutex;
    static std::map<std::pair<int, int>, std::shared_ptr<const SampledBasis>> cache;
    const auto key = std::make_pair(basis_size, node_count);
    {
        std::lock_guard lock(mutex);
        if (auto it = cache.find(key); it != cache.end())
            return it->second;
    }
    auto built = std::make_shared<SampledBasis>();
    built->rule = make_hermite_rule(node_count);
    built->psi.resize(basis_size, node_count);
    for (int i = 0; i < node_count; ++i)
        built->psi.col(i) = hermite_functions(built->rule.nodes[i], basis_size);
    std::lock_guard lock(mutex);
    return cache.emplace(key, std::move(built)).first->second;
}

} // namespace fluxfit

#endif // FLUXFIT_QUADRATURE_HPP
