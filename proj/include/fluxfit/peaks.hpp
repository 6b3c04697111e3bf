#ifndef FLUXFIT_PEAKS_HPP
#define FLUXFIT_PEAKS_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fluxfit/scan.hpp"
#include "fluxfit/spectrum.hpp"

namespace fluxfit
{
// Model transition curves sampled on an x grid, in request order.
struct TransitionTable
{
    std::vector<double> x;
    NamedCurves curves;

    // Linear interpolation of curve k at x (held constant beyond the ends).
    double at(std::size_t k, double xq) const
    {
        const auto &f = curves[k].second;
        if (x.size() == 1 || xq <= x.front())
            return f.front();
        if (xq >= x.back())
            return f.back();
        const auto it = std::upper_bound(x.begin(), x.end(), xq);
        const auto i = static_cast<std::size_t>(it - x.begin());
        const double t = (xq - x[i - 1]) / (x[i] - x[i - 1]);
        return f[i - 1] + t * (f[i] - f[i - 1]);
    }
};

inline TransitionTable make_transition_table(const SpectrumResult &spectrum, const std::vector<TransitionSpec> &specs)
{
    return {spectrum.phi_ext, transition_frequencies(spectrum, specs)};
}

// Gaussian convolution along the frequency axis with reflective edges ("d c b a | a b c d").
// Kernels narrower than half a frequency step act as the identity.
inline Scan smooth_frequency_axis(const Scan &scan, double sigma_GHz)
{
    validate(scan);
    const double f_range = scan.f_axis.back() - scan.f_axis.front();
    if (!(sigma_GHz > 0.0) || !(sigma_GHz < f_range / 4.0))
        throw InvalidParameter("smoothing sigma must lie in (0, (f_max - f_min)/4), got " + std::to_string(sigma_GHz));
    const double step = scan.f_step();
    if (sigma_GHz < 0.5 * step)
        return scan;
    const double sigma = sigma_GHz / step;
    const int radius = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int k = -radius; k <= radius; ++k)
        total += w[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * k * k / (sigma * sigma));
    for (auto &v : w)
        v /= total;

    const auto n = static_cast<long>(scan.f_axis.size());
    auto reflect = [n](long i) {
        const long period = 2 * n;
        i %= period;
        if (i < 0)
            i += period;
        return i < n ? i : period - i - 1;
    };
    Scan out = scan;
    for (Eigen::Index r = 0; r < scan.amplitude.rows(); ++r)
    {
        for (long i = 0; i < n; ++i)
        {
            // Written as a correction to the center sample so constant data is reproduced exactly.
            const double center = scan.amplitude(r, i);
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k)
                acc += w[static_cast<std::size_t>(k + radius)] * (scan.amplitude(r, reflect(i + k)) - center);
            out.amplitude(r, i) = center + acc;
        }
    }
    return out;
}

namespace detail
{
struct ColumnPeak
{
    std::size_t index; // plateau midpoint
    double prominence;
};

// Local maxima (plateaus collapse to their midpoint) and their topographic prominence.
inline std::vector<ColumnPeak> column_maxima(const std::vector<double> &v)
{
    std::vector<ColumnPeak> out;
    const std::size_t n = v.size();
    if (n < 3)
        return out;
    std::size_t i = 1;
    while (i + 1 < n)
    {
        if (v[i - 1] < v[i])
        {
            std::size_t ahead = i + 1;
            while (ahead + 1 < n && v[ahead] == v[i])
                ++ahead;
            if (v[ahead] < v[i])
            {
                const std::size_t left_edge = i;
                const std::size_t right_edge = ahead - 1;
                const double peak = v[i];
                double left_min = peak;
                for (std::size_t j = left_edge + 1; j-- > 0;)
                {
                    if (v[j] > peak)
                        break;
                    left_min = std::min(left_min, v[j]);
                }
                double right_min = peak;
                for (std::size_t j = right_edge; j < n; ++j)
                {
                    if (v[j] > peak)
                        break;
                    right_min = std::min(right_min, v[j]);
                }
                out.push_back({(left_edge + right_edge) / 2, peak - std::max(left_min, right_min)});
                i = ahead;
                continue;
            }
        }
        ++i;
    }
    return out;
}

// Vertex of the parabola through three samples, clamped to half a step around the center.
inline double refine_position(const std::vector<double> &f, const std::vector<double> &v, std::size_t i)
{
    if (i == 0 || i + 1 >= v.size())
        return f[i];
    const double denom = v[i - 1] - 2.0 * v[i] + v[i + 1];
    if (denom == 0.0)
        return f[i];
    const double shift = std::clamp(0.5 * (v[i - 1] - v[i + 1]) / denom, -0.5, 0.5);
    const double step = shift >= 0.0 ? f[i + 1] - f[i] : f[i] - f[i - 1];
    return f[i] + shift * step;
}
} // namespace detail

// Extrema along frequency in every x column whose prominence reaches min_height.
// Markers are ordered by column, then by frequency.
inline PeakSet find_extrema(const Scan &scan, double min_height, PolarityFilter polarity = PolarityFilter::Both)
{
    validate(scan);
    if (!(min_height > 0.0))
        throw InvalidParameter("min_height must be positive");
    PeakSet out;
    const auto nf = scan.f_axis.size();
    std::vector<double> column(nf);
    std::vector<double> negated(nf);
    for (Eigen::Index r = 0; r < scan.amplitude.rows(); ++r)
    {
        for (std::size_t i = 0; i < nf; ++i)
        {
            column[i] = scan.amplitude(r, static_cast<Eigen::Index>(i));
            negated[i] = -column[i];
        }
        PeakSet col;
        auto emit = [&](const std::vector<double> &v, Polarity p) {
            for (const auto &pk : detail::column_maxima(v))
                if (pk.prominence >= min_height)
                    col.push_back({scan.x_axis[static_cast<std::size_t>(r)], detail::refine_position(scan.f_axis, v, pk.index),
                                   p, pk.prominence, kUnassigned});
        };
        if (polarity != PolarityFilter::Min)
            emit(column, Polarity::Max);
        if (polarity != PolarityFilter::Max)
            emit(negated, Polarity::Min);
        std::stable_sort(col.begin(), col.end(), [](const Marker &a, const Marker &b) { return a.f_GHz < b.f_GHz; });
        out.insert(out.end(), col.begin(), col.end());
    }
    return out;
}

// Labels each marker with the nearest model transition within tol_GHz, else "unassigned".
// Distances closer than 1e-9 GHz count as ties and go to the lexicographically first name.
inline PeakSet assign_markers(const PeakSet &peaks, const TransitionTable &model, double tol_GHz)
{
    if (!(tol_GHz >= 0.0))
        throw InvalidParameter("assignment tolerance must be non-negative");
    PeakSet out = peaks;
    for (auto &m : out)
    {
        m.label = kUnassigned;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < model.curves.size(); ++k)
        {
            const double d = std::abs(m.f_GHz - model.at(k, m.x));
            if (d > tol_GHz)
                continue;
            const auto &name = model.curves[k].first;
            if (d < best - 1e-9 || (std::abs(d - best) <= 1e-9 && name < m.label))
            {
                best = std::min(best, d);
                m.label = name;
            }
        }
    }
    return out;
}

} // namespace fluxfit

#endif // FLUXFIT_PEAKS_HPP
