#ifndef FLUXFIT_SPECTRUM_HPP
#define FLUXFIT_SPECTRUM_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fluxfit/hamiltonian.hpp"
#include "fluxfit/labeling.hpp"
#include "fluxfit/parallel.hpp"

namespace fluxfit
{
enum class ModelKind
{
    Uncoupled,
    Coupled
};

inline std::string to_string(ModelKind m) { return m == ModelKind::Coupled ? "coupled" : "uncoupled"; }

inline ModelKind parse_model_kind(const std::string &s)
{
    if (s == "coupled")
        return ModelKind::Coupled;
    if (s == "uncoupled")
        return ModelKind::Uncoupled;
    throw ConfigError("unknown model '" + s + "' (expected coupled or uncoupled)");
}

struct SpectrumOptions
{
    ModelKind model = ModelKind::Uncoupled;
    BasisSpec basis{};
    QuadratureOptions quadrature{};
    LabelingOptions labeling{};
    int levels = 12;      // lowest levels retained per point
    unsigned threads = 1; // workers across phi points
};

// Lowest levels at one external phase, ascending, with their product labels.
struct PointSpectrum
{
    Vector eigenvalues;
    std::vector<LevelLabel> labels;

    std::optional<double> energy_of(const StateLabel &s) const
    {
        for (std::size_t k = 0; k < labels.size(); ++k)
            if (labels[k].label == s)
                return eigenvalues[static_cast<Eigen::Index>(k)];
        return std::nullopt;
    }
};

inline PointSpectrum compute_point(const JunctionModel &junction, const CircuitParams &params, double phi_ext,
                                   const SpectrumOptions &opt)
{
    const Matrix hf = build_fluxonium_matrix(junction, params, phi_ext, opt.basis, opt.quadrature);
    PointSpectrum out;
    if (opt.model == ModelKind::Uncoupled)
    {
        const auto sys = eigensolve(hf, false);
        const int keep = std::min<int>(opt.levels, static_cast<int>(sys.values.size()));
        out.eigenvalues = sys.values.head(keep);
        out.labels = label_uncoupled(keep);
        return out;
    }
    if (opt.basis.n_resonator < 2)
        throw InvalidParameter("coupled model needs n_resonator >= 2");
    const auto fluxonium = eigensolve(hf, true);
    const auto res = resonator_energies(params);
    const Matrix h = assemble_coupled_matrix(hf, fluxonium_phi_zpf(params.E_C, params.E_L), res,
                                             coupling_coefficient(params), opt.basis.n_resonator);
    const auto coupled = eigensolve(h, true);
    auto labels = label_states(coupled, fluxonium, plasma_frequency(res.E_Cr, res.E_Lr), opt.basis.n_resonator,
                               opt.labeling);
    const int keep = std::min<int>(opt.levels, static_cast<int>(coupled.values.size()));
    out.eigenvalues = coupled.values.head(keep);
    labels.resize(keep);
    out.labels = std::move(labels);
    return out;
}

// Transition frequencies, one array per requested transition, in request order.
using NamedCurves = std::vector<std::pair<std::string, std::vector<double>>>;

struct SpectrumResult
{
    std::vector<double> phi_ext;                 // radians
    Matrix eigenvalues;                          // [point x level], GHz, raw
    std::vector<std::vector<LevelLabel>> labels; // [point][level]

    // Energies relative to the ground level at each point (plotting convention).
    Matrix relative_eigenvalues() const
    {
        Matrix out = eigenvalues;
        for (Eigen::Index i = 0; i < out.rows(); ++i)
            out.row(i).array() -= eigenvalues(i, 0);
        return out;
    }
};

inline SpectrumResult compute_spectrum(const JunctionModel &junction, const CircuitParams &params,
                                       const std::vector<double> &phi_axis, const SpectrumOptions &opt)
{
    std::vector<PointSpectrum> points(phi_axis.size());
    parallel_for(phi_axis.size(), opt.threads,
                 [&](std::size_t i) { points[i] = compute_point(junction, params, phi_axis[i], opt); });
    SpectrumResult out;
    out.phi_ext = phi_axis;
    const Eigen::Index levels = points.empty() ? 0 : points.front().eigenvalues.size();
    out.eigenvalues.resize(static_cast<Eigen::Index>(phi_axis.size()), levels);
    out.labels.resize(phi_axis.size());
    for (std::size_t i = 0; i < points.size(); ++i)
    {
        out.eigenvalues.row(static_cast<Eigen::Index>(i)) = points[i].eigenvalues.transpose();
        out.labels[i] = std::move(points[i].labels);
    }
    return out;
}

// f(initial -> final) = |E_final - E_initial| at every phi point.
inline NamedCurves transition_frequencies(const SpectrumResult &spectrum, const StateLabel &initial,
                                          const std::vector<StateLabel> &finals)
{
    auto level_of = [&](std::size_t point, const StateLabel &s) -> Eigen::Index {
        const auto &labels = spectrum.labels[point];
        for (std::size_t k = 0; k < labels.size(); ++k)
            if (labels[k].label == s)
                return static_cast<Eigen::Index>(k);
        throw LabelingError("state " + to_string(s) + " not found among the retained levels at phi_ext = " +
                            std::to_string(spectrum.phi_ext[point]) + " (point " + std::to_string(point) + ")");
    };
    NamedCurves out;
    for (const auto &fin : finals)
    {
        std::vector<double> f(spectrum.phi_ext.size());
        for (std::size_t i = 0; i < f.size(); ++i)
        {
            const auto ii = static_cast<Eigen::Index>(i);
            f[i] = std::abs(spectrum.eigenvalues(ii, level_of(i, fin)) - spectrum.eigenvalues(ii, level_of(i, initial)));
        }
        out.emplace_back(to_string(TransitionSpec{initial, fin}), std::move(f));
    }
    return out;
}

// Arbitrary list of transitions (each with its own initial state), request order preserved.
inline NamedCurves transition_frequencies(const SpectrumResult &spectrum, const std::vector<TransitionSpec> &specs)
{
    NamedCurves out;
    for (const auto &t : specs)
    {
        auto one = transition_frequencies(spectrum, t.initial, {t.final});
        out.push_back(std::move(one.front()));
    }
    return out;
}

// Retained level count needed to resolve every label in `specs` (uncoupled: rank = m).
inline int levels_needed(const std::vector<TransitionSpec> &specs)
{
    int top = 0;
    for (const auto &t : specs)
        top = std::max({top, t.initial.m, t.final.m});
    return top + 1;
}

struct BasisConvergenceOptions
{
    int start = 10;
    double growth = 1.5;
    QuadratureOptions quadrature{};
};

// Smallest fluxonium basis whose lowest `target_levels` eigenvalues move by less than rel_tol
// (relative to max(|E|, plasma frequency)) on the next geometric growth step.
inline BasisSpec converge_basis(const JunctionModel &junction, const CircuitParams &params, double phi_ext,
                                int target_levels, double rel_tol = 1e-7, BasisSpec base = {},
                                const BasisConvergenceOptions &opt = {})
{
    if (!(rel_tol > 0.0))
        throw InvalidParameter("converge_basis: rel_tol must be positive");
    if (target_levels < 1)
        throw InvalidParameter("converge_basis: target_levels must be >= 1");
    const double scale = plasma_frequency(params.E_C, params.E_L);
    auto levels_at = [&](int n) {
        BasisSpec b = base;
        b.n_fluxonium = n;
        b.n_resonator = 1;
        return eigensolve(build_fluxonium_matrix(junction, params, phi_ext, b, opt.quadrature), false).values;
    };
    int n = std::max(opt.start, target_levels);
    Vector current = levels_at(n);
    double last_delta = std::numeric_limits<double>::infinity();
    for (;;)
    {
        const int next = static_cast<int>(std::ceil(n * opt.growth));
        if (static_cast<long long>(next) * std::max(base.n_resonator, 1) > base.max_dimension)
            throw ConvergenceError("converge_basis: cap " + std::to_string(base.max_dimension) +
                                       " reached, last relative delta " + std::to_string(last_delta),
                                   last_delta);
        const Vector grown = levels_at(next);
        last_delta = 0.0;
        for (int k = 0; k < target_levels; ++k)
            last_delta = std::max(last_delta, std::abs(grown[k] - current[k]) / std::max(std::abs(current[k]), scale));
        if (last_delta < rel_tol)
        {
            BasisSpec out = base;
            out.n_fluxonium = n;
            return out;
        }
        n = next;
        current = grown;
    }
}

} // namespace fluxfit

#endif // FLUXFIT_SPECTRUM_HPP
