#ifndef FLUXFIT_FIT_LAYOUT_HPP
#define FLUXFIT_FIT_LAYOUT_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fluxfit/circuit.hpp"
#include "fluxfit/errors.hpp"
#include "fluxfit/scan.hpp"
#include "fluxfit/spectrum.hpp"

namespace fluxfit
{
struct Param
{
    double value = 0.0;
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
    bool frozen = false;

    static Param free(double v, double lo, double hi) { return {v, lo, hi, false}; }
    static Param fixed(double v) { return {v, v, v, true}; }
};

// Device parameters common to every spectrum; C_r is never fitted.
struct SharedParameters
{
    Param E_C = Param::free(2.35, 0.1, 20.0);
    Param E_L = Param::free(0.7, 0.02, 10.0);
    Param L_r = Param::free(47.0, 1.0, 500.0);
    Param L_s = Param::free(8.5, 0.0, 100.0);
    double C_r = 26.0;
};

struct JunctionParameters
{
    bool channels = false;
    Param E_J = Param::free(1.0, 0.0, 50.0);   // sinusoidal
    Param Delta = Param::free(26.0, 1.0, 200.0); // channels, unless shared
    std::vector<Param> T;                        // channels

    static JunctionParameters sinusoidal(Param ej)
    {
        JunctionParameters j;
        j.E_J = ej;
        return j;
    }
    static JunctionParameters channel_model(Param delta, std::vector<Param> t)
    {
        JunctionParameters j;
        j.channels = true;
        j.Delta = delta;
        j.T = std::move(t);
        return j;
    }
};

struct SpectrumParameters
{
    JunctionParameters junction;
    Param phi_offset = Param::free(0.0, -kTwoPi, kTwoPi);
    Param flux_period_scale = Param::fixed(1.0);
    SpectrumConditions conditions{};
};

struct ParameterLayout
{
    SharedParameters shared;
    std::optional<Param> shared_delta; // one Delta for every channel-model spectrum
    std::vector<SpectrumParameters> spectra;
};

// Visits every parameter slot in canonical order with its public name.
template <class Layout, class Fn>
void for_each_param(Layout &layout, Fn &&fn)
{
    fn(std::string("E_C"), layout.shared.E_C);
    fn(std::string("E_L"), layout.shared.E_L);
    fn(std::string("L_r"), layout.shared.L_r);
    fn(std::string("L_s"), layout.shared.L_s);
    if (layout.shared_delta)
        fn(std::string("Delta"), *layout.shared_delta);
    for (std::size_t i = 0; i < layout.spectra.size(); ++i)
    {
        auto &s = layout.spectra[i];
        const std::string prefix = "spectrum[" + std::to_string(i) + "].";
        if (!s.junction.channels)
            fn(prefix + "E_J", s.junction.E_J);
        else
        {
            if (!layout.shared_delta)
                fn(prefix + "Delta", s.junction.Delta);
            for (std::size_t k = 0; k < s.junction.T.size(); ++k)
                fn(prefix + "T[" + std::to_string(k) + "]", s.junction.T[k]);
        }
        fn(prefix + "phi_offset", s.phi_offset);
        fn(prefix + "flux_period_scale", s.flux_period_scale);
    }
}

inline std::vector<std::string> free_parameter_names(const ParameterLayout &layout)
{
    std::vector<std::string> out;
    for_each_param(layout, [&](const std::string &name, const Param &p) {
        if (!p.frozen)
            out.push_back(name);
    });
    return out;
}

inline void validate(const ParameterLayout &layout)
{
    if (layout.spectra.empty())
        throw ConfigError("parameter layout has no spectra");
    if (!(layout.shared.C_r > 0.0))
        throw ConfigError("fixed C_r must be positive");
    int free = 0;
    for_each_param(layout, [&](const std::string &name, const Param &p) {
        if (!std::isfinite(p.value))
            throw ConfigError("parameter " + name + " has a non-finite value");
        if (p.frozen)
            return;
        ++free;
        if (!(p.lower <= p.value && p.value <= p.upper))
            throw ConfigError("initial value of " + name + " (" + std::to_string(p.value) + ") is outside [" +
                              std::to_string(p.lower) + ", " + std::to_string(p.upper) + "]");
    });
    for (std::size_t i = 0; i < layout.spectra.size(); ++i)
        if (layout.spectra[i].junction.channels && layout.spectra[i].junction.T.empty())
            throw ConfigError("spectrum[" + std::to_string(i) + "] channel junction has no transparencies");
    if (free == 0)
        throw ConfigError("parameter layout has no free parameters");
}

// Sets a parameter (and freezes it) by public name. "Delta" also matches every per-spectrum Delta,
// and "E_J" every per-spectrum E_J. Returns the number of slots changed.
inline int freeze_parameter(ParameterLayout &layout, const std::string &name, double value)
{
    int hits = 0;
    for_each_param(layout, [&](const std::string &slot, Param &p) {
        const auto dot = slot.rfind('.');
        const std::string tail = dot == std::string::npos ? slot : slot.substr(dot + 1);
        if (slot == name || tail == name)
        {
            p = Param::fixed(value);
            ++hits;
        }
    });
    if (hits == 0)
        throw ConfigError("unknown parameter '" + name + "'");
    return hits;
}

// A layout with every parameter resolved to concrete physics for one spectrum.
struct ResolvedSpectrum
{
    JunctionModel junction;
    double phi_offset = 0.0;
    double flux_period_scale = 1.0;
};

inline CircuitParams resolve_circuit(const ParameterLayout &layout)
{
    return {layout.shared.E_C.value, layout.shared.E_L.value, layout.shared.C_r, layout.shared.L_r.value,
            layout.shared.L_s.value};
}

inline ResolvedSpectrum resolve_spectrum(const ParameterLayout &layout, std::size_t i)
{
    const auto &s = layout.spectra.at(i);
    ResolvedSpectrum out;
    out.phi_offset = s.phi_offset.value;
    out.flux_period_scale = s.flux_period_scale.value;
    if (!s.junction.channels)
        out.junction = JunctionModel::sinusoidal(s.junction.E_J.value);
    else
    {
        std::vector<double> t;
        for (const auto &p : s.junction.T)
            t.push_back(p.value);
        out.junction = JunctionModel::channels(layout.shared_delta ? layout.shared_delta->value : s.junction.Delta.value,
                                               std::move(t));
    }
    return out;
}

struct FitDataset
{
    PeakSet markers;             // labeled markers; "unassigned" ones are ignored
    std::vector<double> weights; // empty = all 1
    SpectrumConditions conditions{};
};

struct FitProblem
{
    std::vector<FitDataset> datasets;
    ParameterLayout layout;
    ModelKind model = ModelKind::Uncoupled;
    BasisSpec basis{};
    QuadratureOptions quadrature{};
};

} // namespace fluxfit

#endif // FLUXFIT_FIT_LAYOUT_HPP
