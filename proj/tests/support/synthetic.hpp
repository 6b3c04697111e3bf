#ifndef FLUXFIT_TESTS_SYNTHETIC_HPP
#define FLUXFIT_TESTS_SYNTHETIC_HPP

// Ground-truth generators shared by the unit tests and the acceptance binary.

#include <random>
#include <string>
#include <vector>

#include "fluxfit/fluxfit.hpp"

namespace fluxfit::synthetic
{
inline std::vector<double> linspace(double lo, double hi, int n)
{
    std::vector<double> out;
    for (int i = 0; i < n; ++i)
        out.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
    return out;
}

inline std::vector<TransitionSpec> parse_transitions(const std::vector<std::string> &names)
{
    std::vector<TransitionSpec> out;
    for (const auto &n : names)
        out.push_back(parse_transition(n));
    return out;
}

// Transition curves of the device-A circuit with a sinusoidal junction.
inline TransitionTable device_a_table(double E_J, const std::vector<double> &x, const std::vector<std::string> &names,
                                      ModelKind model, BasisSpec basis, double phi_offset = 0.0)
{
    SpectrumOptions o;
    o.model = model;
    o.basis = basis;
    o.levels = model == ModelKind::Coupled ? basis.n_fluxonium * basis.n_resonator : basis.n_fluxonium;
    std::vector<double> phi;
    for (double v : x)
        phi.push_back(v + phi_offset);
    const auto s = compute_spectrum(JunctionModel::sinusoidal(E_J), device_a_params(), phi, o);
    return {x, transition_frequencies(s, parse_transitions(names))};
}

// Labeled markers sitting on the model curves with Gaussian frequency noise.
inline FitDataset noisy_markers(const TransitionTable &table, double sigma_GHz, std::mt19937_64 &rng)
{
    std::normal_distribution<double> nd(0.0, sigma_GHz);
    FitDataset d;
    for (const auto &[name, f] : table.curves)
        for (std::size_t i = 0; i < table.x.size(); ++i)
            d.markers.push_back({table.x[i], f[i] + (sigma_GHz > 0.0 ? nd(rng) : 0.0), Polarity::Max, 1.0, name});
    return d;
}

struct PipelineScore
{
    std::size_t markers = 0;
    std::size_t labeled = 0;
    std::size_t correct = 0;    // labeled markers whose label is the nearest true curve
    std::size_t resolvable = 0; // isolated in-band lines, one per (column, transition)
    std::size_t recovered = 0;  // of those, found within one FWHM with the right label
    double precision() const { return labeled == 0 ? 0.0 : static_cast<double>(correct) / labeled; }
    double recall() const { return resolvable == 0 ? 0.0 : static_cast<double>(recovered) / resolvable; }
    double accuracy() const { return markers == 0 ? 0.0 : static_cast<double>(correct) / markers; }
};

// Scores markers against the generating curves. A line is resolvable in a column when it lies
// at least 5 FWHM inside the frequency band and no other line is within 4 FWHM.
inline PipelineScore score_markers(const PeakSet &markers, const TransitionTable &truth, double fwhm_GHz,
                                   double f_min, double f_max)
{
    PipelineScore s;
    s.markers = markers.size();
    for (const auto &m : markers)
    {
        if (m.label == kUnassigned)
            continue;
        ++s.labeled;
        double best = std::numeric_limits<double>::infinity();
        std::string nearest;
        for (std::size_t k = 0; k < truth.curves.size(); ++k)
        {
            const double d = std::abs(m.f_GHz - truth.at(k, m.x));
            if (d < best - 1e-9 || (std::abs(d - best) <= 1e-9 && truth.curves[k].first < nearest))
            {
                best = std::min(best, d);
                nearest = truth.curves[k].first;
            }
        }
        if (nearest == m.label)
            ++s.correct;
    }
    for (std::size_t i = 0; i < truth.x.size(); ++i)
        for (std::size_t k = 0; k < truth.curves.size(); ++k)
        {
            const double f = truth.curves[k].second[i];
            if (f < f_min + 5.0 * fwhm_GHz || f > f_max - 5.0 * fwhm_GHz)
                continue;
            bool isolated = true;
            for (std::size_t q = 0; q < truth.curves.size(); ++q)
                if (q != k && std::abs(truth.curves[q].second[i] - f) < 4.0 * fwhm_GHz)
                    isolated = false;
            if (!isolated)
                continue;
            ++s.resolvable;
            for (const auto &m : markers)
                if (m.x == truth.x[i] && m.label == truth.curves[k].first && std::abs(m.f_GHz - f) <= fwhm_GHz)
                {
                    ++s.recovered;
                    break;
                }
        }
    return s;
}

inline const std::vector<std::string> &coupled_transitions()
{
    static const std::vector<std::string> names{"g0->e0", "g0->f0", "g0->g1", "g1->f1", "e0->f0"};
    return names;
}

struct PipelineRun
{
    Scan scan;
    PeakSet markers;
    PipelineScore score;
};

// Device A at E_J = 6.7 GHz, coupled model, five transitions, one scan through the whole pipeline.
inline PipelineRun coupled_pipeline(double noise_sigma, std::uint64_t seed, int columns = 81)
{
    const auto x = linspace(-kPi, kPi, columns);
    const auto truth = device_a_table(6.7, x, coupled_transitions(), ModelKind::Coupled, BasisSpec{40, 5});
    const auto f = linspace(0.0, 16.0, 1601);
    Lineshape shape;
    shape.fwhm_GHz = 0.03;
    PipelineRun run;
    run.scan = synthesize_scan(truth, shape, noise_sigma, seed, x, f);
    // Kernel of half the linewidth: wider kernels merge lines 4 FWHM apart.
    const Scan smoothed = smooth_frequency_axis(run.scan, 0.5 * shape.fwhm_GHz);
    run.markers = assign_markers(find_extrema(smoothed, 0.4, PolarityFilter::Max), truth, 0.05);
    run.score = score_markers(run.markers, truth, shape.fwhm_GHz, f.front(), f.back());
    return run;
}
} // namespace fluxfit::synthetic

#endif // FLUXFIT_TESTS_SYNTHETIC_HPP
