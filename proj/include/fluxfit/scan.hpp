#ifndef FLUXFIT_SCAN_HPP
#define FLUXFIT_SCAN_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fluxfit/circuit.hpp"
#include "fluxfit/errors.hpp"

namespace fluxfit
{
enum class ScanKind
{
    SingleTone,
    TwoTone
};

enum class XAxisUnit
{
    PhiExt, // radians
    BxMicroTesla
};

inline std::string to_string(ScanKind k) { return k == ScanKind::SingleTone ? "single-tone" : "two-tone"; }
inline std::string to_string(XAxisUnit u) { return u == XAxisUnit::PhiExt ? "phi_ext" : "B_x_uT"; }

struct FluxCalibration
{
    double period_uT = 0.0;
    double offset_uT = 0.0;
};

// Ground truth recorded by the synthetic generator.
struct GeneratorInfo
{
    std::uint64_t seed = 0;
    double noise_sigma = 0.0;
    double fwhm_GHz = 0.0;
    double amplitude = 0.0;
    double baseline = 0.0;
    std::vector<std::string> transitions;
};

// Gridded |S21| over (x, drive frequency); amplitude is [x x f].
struct Scan
{
    std::vector<double> x_axis;
    std::vector<double> f_axis; // GHz
    Eigen::MatrixXd amplitude;
    ScanKind kind = ScanKind::TwoTone;
    XAxisUnit x_unit = XAxisUnit::PhiExt;
    SpectrumConditions conditions{};
    std::optional<FluxCalibration> calibration;
    std::optional<GeneratorInfo> generator;

    Eigen::Index columns() const { return static_cast<Eigen::Index>(x_axis.size()); }
    double f_step() const { return f_axis.size() < 2 ? 0.0 : (f_axis.back() - f_axis.front()) / (f_axis.size() - 1); }
};

inline void validate(const Scan &s)
{
    auto strictly_ascending = [](const std::vector<double> &v) {
        for (std::size_t i = 1; i < v.size(); ++i)
            if (!(v[i] > v[i - 1]))
                return false;
        return true;
    };
    if (s.x_axis.empty() || s.f_axis.empty())
        throw InvalidParameter("scan axes must be non-empty");
    if (!strictly_ascending(s.x_axis) || !strictly_ascending(s.f_axis))
        throw InvalidParameter("scan axes must be strictly ascending");
    if (s.amplitude.rows() != static_cast<Eigen::Index>(s.x_axis.size()) ||
        s.amplitude.cols() != static_cast<Eigen::Index>(s.f_axis.size()))
        throw InvalidParameter("scan amplitude dimensions do not match its axes");
    if (!s.amplitude.allFinite())
        throw InvalidParameter("scan amplitude contains non-finite values");
}

enum class Polarity
{
    Max,
    Min
};

enum class PolarityFilter
{
    Max,
    Min,
    Both
};

inline std::string to_string(Polarity p) { return p == Polarity::Max ? "max" : "min"; }

inline Polarity parse_polarity(const std::string &s)
{
    if (s == "max")
        return Polarity::Max;
    if (s == "min")
        return Polarity::Min;
    throw ConfigError("unknown polarity '" + s + "'");
}

inline PolarityFilter parse_polarity_filter(const std::string &s)
{
    if (s == "both")
        return PolarityFilter::Both;
    return parse_polarity(s) == Polarity::Max ? PolarityFilter::Max : PolarityFilter::Min;
}

inline const std::string kUnassigned = "unassigned";

struct Marker
{
    double x = 0.0;
    double f_GHz = 0.0;
    Polarity polarity = Polarity::Max;
    double height = 0.0; // prominence
    std::string label = kUnassigned;

    bool operator==(const Marker &) const = default;
};

using PeakSet = std::vector<Marker>;

// Maps a B_x axis (uT) to external phase: phi = 2 pi (B_x - offset) / period.
inline Scan calibrate_flux_axis(const Scan &scan, double period_uT, double offset_uT)
{
    if (!(period_uT > 0.0))
        throw InvalidParameter("flux period must be positive");
    Scan out = scan;
    for (auto &x : out.x_axis)
        x = kTwoPi * (x - offset_uT) / period_uT;
    out.x_unit = XAxisUnit::PhiExt;
    out.calibration = FluxCalibration{period_uT, offset_uT};
    return out;
}

} // namespace fluxfit

#endif // FLUXFIT_SCAN_HPP
