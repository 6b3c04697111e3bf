#ifndef FLUXFIT_CONSTANTS_HPP
#define FLUXFIT_CONSTANTS_HPP

#include <numbers>

namespace fluxfit
{
// SI values (2019 redefinition, exact).
struct PhysicalConstants
{
    static constexpr double h = 6.62607015e-34;  // J s
    static constexpr double e = 1.602176634e-19; // C
    static constexpr double Phi0 = h / (2.0 * e); // Wb
    static constexpr double reduced_flux = Phi0 / (2.0 * std::numbers::pi);
};

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Unit scales used at the module boundary.
inline constexpr double kGHz = 1e9;
inline constexpr double kNanoHenry = 1e-9;
inline constexpr double kFemtoFarad = 1e-15;

} // namespace fluxfit

#endif // FLUXFIT_CONSTANTS_HPP
