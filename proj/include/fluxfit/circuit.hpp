#ifndef FLUXFIT_CIRCUIT_HPP
#define FLUXFIT_CIRCUIT_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fluxfit/constants.hpp"
#include "fluxfit/errors.hpp"

namespace fluxfit
{
// All energies are frequencies E/h in GHz. Inductances in nH, capacitance in fF.
struct CircuitParams
{
    double E_C = 0.0;
    double E_L = 0.0;
    double C_r = 0.0;
    double L_r = 0.0;
    double L_s = 0.0;
};

// Table values of the two measured devices (fit results, not design targets).
inline CircuitParams device_a_params() { return {2.35, 0.7, 26.0, 47.0, 8.5}; }
inline CircuitParams device_b_params() { return {1.75, 1.1, 26.0, 42.0, 4.6}; }

// Superinductance L_f in nH implied by E_L.
inline double fluxonium_inductance_nH(double E_L_GHz)
{
    constexpr double phi = PhysicalConstants::reduced_flux;
    return phi * phi / (PhysicalConstants::h * E_L_GHz * kGHz) / kNanoHenry;
}

// L_s = 0 is accepted as the decoupled limit; every other field must be strictly positive.
inline void validate(const CircuitParams &p)
{
    auto positive = [](double v, const char *name) {
        if (!(std::isfinite(v) && v > 0.0))
            throw InvalidParameter(std::string("circuit parameter ") + name + " must be positive, got " +
                                   std::to_string(v));
    };
    positive(p.E_C, "E_C");
    positive(p.E_L, "E_L");
    positive(p.C_r, "C_r");
    positive(p.L_r, "L_r");
    if (!(std::isfinite(p.L_s) && p.L_s >= 0.0))
        throw InvalidParameter("circuit parameter L_s must be non-negative, got " + std::to_string(p.L_s));
}

// Soft checks on the weak-coupling approximation. Empty when the parameters are comfortably in range.
inline std::vector<std::string> validation_warnings(const CircuitParams &p)
{
    std::vector<std::string> out;
    const double L_f = fluxonium_inductance_nH(p.E_L);
    const double worst = std::max(p.L_s, p.L_r);
    if (L_f < 5.0 * worst)
        out.push_back("superinductance L_f = " + std::to_string(L_f) + " nH is below 5x max(L_s, L_r) = " +
                      std::to_string(5.0 * worst) + " nH; the weak-coupling Hamiltonian may be inaccurate");
    return out;
}

struct SinusoidalJunction
{
    double E_J = 0.0;
};

// Short multi-channel junction; ground Andreev branch of every channel.
struct ChannelJunction
{
    double Delta = 0.0;
    std::vector<double> transparencies;
};

class JunctionModel
{
public:
    using Variant = std::variant<SinusoidalJunction, ChannelJunction>;

    JunctionModel() : model_(SinusoidalJunction{}) {}
    JunctionModel(SinusoidalJunction s) : model_(std::move(s)) { validate(); }
    JunctionModel(ChannelJunction c) : model_(std::move(c)) { validate(); }

    static JunctionModel sinusoidal(double E_J) { return JunctionModel(SinusoidalJunction{E_J}); }
    static JunctionModel channels(double Delta, std::vector<double> T)
    {
        return JunctionModel(ChannelJunction{Delta, std::move(T)});
    }

    bool is_sinusoidal() const { return std::holds_alternative<SinusoidalJunction>(model_); }
    const SinusoidalJunction *as_sinusoidal() const { return std::get_if<SinusoidalJunction>(&model_); }
    const ChannelJunction *as_channels() const { return std::get_if<ChannelJunction>(&model_); }
    const Variant &variant() const { return model_; }

    // Junction part of the potential at phase drop phi, GHz.
    double energy(double phi) const
    {
        if (const auto *s = as_sinusoidal())
            return -s->E_J * std::cos(phi);
        const auto &c = std::get<ChannelJunction>(model_);
        const double s2 = std::sin(0.5 * phi) * std::sin(0.5 * phi);
        double sum = 0.0;
        for (double T : c.transparencies)
            sum += std::sqrt(std::max(0.0, 1.0 - T * s2));
        return -c.Delta * sum;
    }

    // Zero when the junction contributes nothing (E_J = 0); lets the Hamiltonian skip quadrature.
    bool is_trivial() const
    {
        if (const auto *s = as_sinusoidal())
            return s->E_J == 0.0;
        return false;
    }

private:
    void validate() const
    {
        if (const auto *s = as_sinusoidal())
        {
            if (!(std::isfinite(s->E_J) && s->E_J >= 0.0))
                throw InvalidParameter("E_J must be finite and non-negative, got " + std::to_string(s->E_J));
            return;
        }
        const auto &c = std::get<ChannelJunction>(model_);
        if (!(std::isfinite(c.Delta) && c.Delta > 0.0))
            throw InvalidParameter("Delta must be positive, got " + std::to_string(c.Delta));
        if (c.transparencies.empty())
            throw InvalidParameter("channel junction needs at least one transparency");
        for (double T : c.transparencies)
            if (!(T > 0.0 && T <= 1.0))
                throw InvalidParameter("channel transparency must lie in (0, 1], got " + std::to_string(T));
    }

    Variant model_;
};

// Metadata only; never enters a computation.
struct SpectrumConditions
{
    double V_j = 0.0; // V
    double B_z = 0.0; // T
};

struct ResonatorEnergies
{
    double E_Cr = 0.0; // GHz
    double E_Lr = 0.0; // GHz
};

inline ResonatorEnergies resonator_energies(const CircuitParams &p)
{
    if (!(p.C_r > 0.0) || !(p.L_r + p.L_s > 0.0))
        throw InvalidParameter("resonator needs positive C_r and L_r + L_s");
    constexpr double e = PhysicalConstants::e;
    constexpr double h = PhysicalConstants::h;
    constexpr double phi = PhysicalConstants::reduced_flux;
    ResonatorEnergies out;
    out.E_Cr = e * e / (2.0 * p.C_r * kFemtoFarad) / h / kGHz;
    out.E_Lr = phi * phi / ((p.L_r + p.L_s) * kNanoHenry) / h / kGHz;
    return out;
}

// Coefficient g of the -g phi_r phi_f coupling term, GHz.
inline double coupling_coefficient(const CircuitParams &p)
{
    validate(p);
    return 0.5 * p.E_L * p.L_s / (p.L_r + p.L_s);
}

// Full fluxonium potential: junction energy plus inductive parabola.
inline double potential_eval(const JunctionModel &junction, double E_L, double phi, double phi_ext)
{
    if (!std::isfinite(phi) || !std::isfinite(phi_ext))
        throw InvalidParameter("potential_eval: non-finite phase");
    const double d = phi - phi_ext;
    return junction.energy(phi) + 0.5 * E_L * d * d;
}

// Tunneling-limit Josephson energy of a channel junction.
inline double effective_EJ_low_T(double Delta, std::span<const double> transparencies)
{
    if (transparencies.empty())
        throw InvalidParameter("effective_EJ_low_T: empty transparency list");
    return Delta * std::accumulate(transparencies.begin(), transparencies.end(), 0.0) / 4.0;
}

inline double effective_EJ_low_T(const ChannelJunction &c) { return effective_EJ_low_T(c.Delta, c.transparencies); }

} // namespace fluxfit

#endif // FLUXFIT_CIRCUIT_HPP
