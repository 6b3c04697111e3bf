#ifndef FLUXFIT_LINESHAPE_HPP
#define FLUXFIT_LINESHAPE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fluxfit/least_squares.hpp"
#include "fluxfit/peaks.hpp"
#include "fluxfit/scan.hpp"

namespace fluxfit
{
// Unit-height Lorentzian with full width at half maximum `fwhm`.
inline double lorentzian(double f, double center, double fwhm)
{
    const double u = 2.0 * (f - center) / fwhm;
    return 1.0 / (1.0 + u * u);
}

struct Lineshape
{
    double fwhm_GHz = 0.02;
    double amplitude = 1.0;
    Polarity polarity = Polarity::Max;
    double baseline = 0.0;
};

// baseline + sum over transitions of +/- amplitude * Lorentzian + seeded Gaussian noise.
// Model curves are interpolated onto x_axis. Noise is drawn row-major (x outer, f inner).
inline Scan synthesize_scan(const TransitionTable &model, const Lineshape &shape, double noise_sigma,
                            std::uint64_t seed, const std::vector<double> &x_axis, const std::vector<double> &f_axis,
                            ScanKind kind = ScanKind::TwoTone)
{
    if (!(shape.fwhm_GHz > 0.0))
        throw InvalidParameter("lineshape FWHM must be positive");
    if (!(noise_sigma >= 0.0))
        throw InvalidParameter("noise sigma must be non-negative");
    Scan scan;
    scan.x_axis = x_axis;
    scan.f_axis = f_axis;
    scan.kind = kind;
    scan.amplitude.resize(static_cast<Eigen::Index>(x_axis.size()), static_cast<Eigen::Index>(f_axis.size()));
    const double sign = shape.polarity == Polarity::Max ? 1.0 : -1.0;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t r = 0; r < x_axis.size(); ++r)
    {
        std::vector<double> centers(model.curves.size());
        for (std::size_t k = 0; k < centers.size(); ++k)
            centers[k] = model.at(k, x_axis[r]);
        for (std::size_t c = 0; c < f_axis.size(); ++c)
        {
            double v = shape.baseline;
            for (double f0 : centers)
                v += sign * shape.amplitude * lorentzian(f_axis[c], f0, shape.fwhm_GHz);
            if (noise_sigma > 0.0)
                v += noise_sigma * noise(rng);
            scan.amplitude(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
        }
    }
    GeneratorInfo info;
    info.seed = seed;
    info.noise_sigma = noise_sigma;
    info.fwhm_GHz = shape.fwhm_GHz;
    info.amplitude = shape.amplitude;
    info.baseline = shape.baseline;
    for (const auto &c : model.curves)
        info.transitions.push_back(c.first);
    scan.generator = info;
    validate(scan);
    return scan;
}

struct LinewidthSample
{
    double x_lo = 0.0;
    double x_hi = 0.0;
    double center_GHz = 0.0;
    double fwhm_MHz = 0.0;
    double amplitude = 0.0;
    double offset = 0.0;
    double fit_residual = 0.0; // rms of the profile fit
};

struct LinewidthOptions
{
    double window_width = 0.05 * kPi; // in x units, symmetric about the center
    double fit_half_span_GHz = 0.25;  // frequency range fitted around the expected center
};

// Averages the columns within the flux window and fits a Lorentzian plus offset to the profile.
inline LinewidthSample extract_linewidth(const Scan &scan, double x_center, double expected_GHz,
                                         const LinewidthOptions &opt = {})
{
    validate(scan);
    LinewidthSample out;
    out.x_lo = x_center - 0.5 * opt.window_width;
    out.x_hi = x_center + 0.5 * opt.window_width;
    std::vector<Eigen::Index> cols;
    for (std::size_t i = 0; i < scan.x_axis.size(); ++i)
        if (scan.x_axis[i] >= out.x_lo && scan.x_axis[i] <= out.x_hi)
            cols.push_back(static_cast<Eigen::Index>(i));
    if (cols.size() < 3)
        throw InvalidParameter("linewidth window holds " + std::to_string(cols.size()) + " columns, need >= 3");

    std::vector<double> f, v;
    for (std::size_t c = 0; c < scan.f_axis.size(); ++c)
    {
        if (std::abs(scan.f_axis[c] - expected_GHz) > opt.fit_half_span_GHz)
            continue;
        double acc = 0.0;
        for (auto r : cols)
            acc += scan.amplitude(r, static_cast<Eigen::Index>(c));
        f.push_back(scan.f_axis[c]);
        v.push_back(acc / static_cast<double>(cols.size()));
    }
    if (f.size() < 6)
        throw InvalidParameter("linewidth fit window holds too few frequency points");
    const double step = scan.f_step();

    std::vector<double> sorted = v;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double median = sorted[sorted.size() / 2];
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const bool peak = (*hi_it - median) >= (median - *lo_it);
    const auto ext = static_cast<std::size_t>((peak ? hi_it : lo_it) - v.begin());
    const double amp0 = v[ext] - median;
    std::size_t above = 0;
    for (double y : v)
        if ((y - median) / amp0 >= 0.5)
            ++above;
    const double width0 = std::max(2.0 * step, static_cast<double>(above) * step);

    auto model = [&](const Eigen::VectorXd &p) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(f.size()));
        for (std::size_t i = 0; i < f.size(); ++i)
            r[static_cast<Eigen::Index>(i)] = p[3] + p[2] * lorentzian(f[i], p[0], p[1]) - v[i];
        return r;
    };
    Eigen::VectorXd x0(4), lower(4), upper(4);
    x0 << f[ext], width0, amp0, median;
    const double amp_bound = 10.0 * std::abs(amp0) + 1.0;
    lower << f.front(), 0.1 * step, peak ? 0.0 : -amp_bound, -1e300;
    upper << f.back(), f.back() - f.front(), peak ? amp_bound : 0.0, 1e300;
    LeastSquaresOptions lso;
    lso.max_iter = 200;
    lso.x_tol = 1e-13;
    lso.f_tol = 1e-15;
    lso.g_tol = 1e-15;
    const auto fit = minimize_least_squares(model, x0, lower, upper, lso);
    out.center_GHz = fit.x[0];
    out.fwhm_MHz = fit.x[1] * 1e3;
    out.amplitude = fit.x[2];
    out.offset = fit.x[3];
    out.fit_residual = std::sqrt(fit.objective / static_cast<double>(f.size()));
    if (!fit.converged)
        throw UnreliableFit("linewidth fit did not converge: " + fit.status);
    if (fit.x[1] < 2.0 * step)
        throw UnreliableFit("fitted FWHM " + std::to_string(out.fwhm_MHz) + " MHz is below two frequency steps");
    return out;
}

} // namespace fluxfit

#endif // FLUXFIT_LINESHAPE_HPP
