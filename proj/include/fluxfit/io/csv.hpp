#ifndef FLUXFIT_IO_CSV_HPP
#define FLUXFIT_IO_CSV_HPP

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "fluxfit/least_squares.hpp"
#include "fluxfit/peaks.hpp"
#include "fluxfit/scan.hpp"
#include "fluxfit/spectrum.hpp"

namespace fluxfit::io
{
// Shortest decimal form that reads back to the same double.
inline std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::size_t row, const char *what)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    if (!s.empty() && s.front() == '+')
        s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ParseError("row " + std::to_string(row) + ": cannot parse " + what + " '" + std::string(s) + "'", row);
    return v;
}

inline std::vector<std::string_view> split_commas(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true)
    {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos)
            return out;
        start = comma + 1;
    }
}

// Long-format scan: header x,f_GHz,amplitude; rows grouped by x with the same f sequence in each group.
// Row numbers in errors count the header as row 1.
inline Scan read_scan_csv(std::istream &in)
{
    std::string line;
    if (!std::getline(in, line))
        throw ParseError("scan CSV is empty", 1);
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != "x,f_GHz,amplitude")
        throw ParseError("row 1: expected header 'x,f_GHz,amplitude'", 1);
    Scan s;
    std::vector<double> values;
    std::size_t row = 1;
    std::size_t in_group = 0;
    while (std::getline(in, line))
    {
        ++row;
        if (line.empty() || line == "\r")
            continue;
        const auto cells = split_commas(line);
        if (cells.size() != 3)
            throw ParseError("row " + std::to_string(row) + ": expected 3 columns, got " + std::to_string(cells.size()), row);
        const double x = parse_double(cells[0], row, "x");
        const double f = parse_double(cells[1], row, "f_GHz");
        const double a = parse_double(cells[2], row, "amplitude");
        if (!std::isfinite(x) || !std::isfinite(f) || !std::isfinite(a))
            throw ParseError("row " + std::to_string(row) + ": non-finite value", row);
        if (s.x_axis.empty() || x != s.x_axis.back())
        {
            if (!s.x_axis.empty())
            {
                if (x < s.x_axis.back())
                    throw ParseError("row " + std::to_string(row) + ": x must be ascending", row);
                if (in_group != s.f_axis.size())
                    throw ParseError("row " + std::to_string(row) + ": previous x group has " +
                                         std::to_string(in_group) + " rows, expected " + std::to_string(s.f_axis.size()),
                                     row);
            }
            s.x_axis.push_back(x);
            in_group = 0;
        }
        if (s.x_axis.size() == 1)
        {
            if (!s.f_axis.empty() && !(f > s.f_axis.back()))
                throw ParseError("row " + std::to_string(row) + ": f_GHz must be strictly ascending", row);
            s.f_axis.push_back(f);
        }
        else if (in_group >= s.f_axis.size() || f != s.f_axis[in_group])
            throw ParseError("row " + std::to_string(row) + ": f_GHz does not match the frequency grid", row);
        ++in_group;
        values.push_back(a);
    }
    if (s.x_axis.empty())
        throw ParseError("scan CSV has no data rows", row);
    if (in_group != s.f_axis.size())
        throw ParseError("row " + std::to_string(row) + ": last x group is incomplete", row);
    s.amplitude.resize(static_cast<Eigen::Index>(s.x_axis.size()), static_cast<Eigen::Index>(s.f_axis.size()));
    for (std::size_t i = 0; i < values.size(); ++i)
        s.amplitude(static_cast<Eigen::Index>(i / s.f_axis.size()), static_cast<Eigen::Index>(i % s.f_axis.size())) =
            values[i];
    return s;
}

inline Scan read_scan_csv(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open " + path.string());
    return read_scan_csv(in);
}

inline std::string scan_csv(const Scan &s)
{
    std::ostringstream out;
    out << "x,f_GHz,amplitude\n";
    for (std::size_t r = 0; r < s.x_axis.size(); ++r)
        for (std::size_t c = 0; c < s.f_axis.size(); ++c)
            out << format_double(s.x_axis[r]) << ',' << format_double(s.f_axis[c]) << ','
                << format_double(s.amplitude(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))) << '\n';
    return out.str();
}

// phi_ext_over_pi, then one column per transition in request order.
inline std::string transitions_csv(const std::vector<double> &phi, const NamedCurves &curves)
{
    std::ostringstream out;
    out << "phi_ext_over_pi";
    for (const auto &c : curves)
        out << ',' << c.first;
    out << '\n';
    for (std::size_t i = 0; i < phi.size(); ++i)
    {
        out << format_double(phi[i] / kPi);
        for (const auto &c : curves)
            out << ',' << format_double(c.second[i]);
        out << '\n';
    }
    return out.str();
}

// Reads a transitions table written by transitions_csv back into radians.
inline TransitionTable read_transitions_csv(std::istream &in)
{
    std::string line;
    if (!std::getline(in, line))
        throw ParseError("transitions CSV is empty", 1);
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    const auto header = split_commas(line);
    if (header.size() < 2 || header[0] != "phi_ext_over_pi")
        throw ParseError("row 1: expected header 'phi_ext_over_pi,<transition>,...'", 1);
    TransitionTable t;
    for (std::size_t k = 1; k < header.size(); ++k)
        t.curves.emplace_back(std::string(header[k]), std::vector<double>{});
    std::size_t row = 1;
    while (std::getline(in, line))
    {
        ++row;
        if (line.empty() || line == "\r")
            continue;
        const auto cells = split_commas(line);
        if (cells.size() != header.size())
            throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) + " columns", row);
        const double x = parse_double(cells[0], row, "phi_ext_over_pi") * kPi;
        if (!t.x.empty() && !(x > t.x.back()))
            throw ParseError("row " + std::to_string(row) + ": phi_ext must be strictly ascending", row);
        t.x.push_back(x);
        for (std::size_t k = 1; k < cells.size(); ++k)
            t.curves[k - 1].second.push_back(parse_double(cells[k], row, "frequency"));
    }
    if (t.x.empty())
        throw ParseError("transitions CSV has no data rows", row);
    return t;
}

inline TransitionTable read_transitions_csv(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open " + path.string());
    return read_transitions_csv(in);
}

// Eigenenergies relative to the ground level, one column per level.
inline std::string levels_csv(const SpectrumResult &r)
{
    const Matrix rel = r.relative_eigenvalues();
    std::ostringstream out;
    out << "phi_ext_over_pi";
    for (Eigen::Index k = 0; k < rel.cols(); ++k)
        out << ",E" << k << "_GHz";
    out << '\n';
    for (Eigen::Index i = 0; i < rel.rows(); ++i)
    {
        out << format_double(r.phi_ext[static_cast<std::size_t>(i)] / kPi);
        for (Eigen::Index k = 0; k < rel.cols(); ++k)
            out << ',' << format_double(rel(i, k));
        out << '\n';
    }
    return out.str();
}

inline std::string iteration_log_csv(const std::vector<IterationRecord> &log)
{
    std::ostringstream out;
    out << "iter,objective,trust_radius,step_norm,accepted\n";
    for (const auto &r : log)
        out << r.iteration << ',' << format_double(r.objective) << ',' << format_double(r.trust_radius) << ','
            << format_double(r.step_norm) << ',' << (r.accepted ? 1 : 0) << '\n';
    return out.str();
}

inline std::string peaks_csv(const PeakSet &peaks)
{
    std::ostringstream out;
    out << "x,f_GHz,polarity,height,label\n";
    for (const auto &m : peaks)
        out << format_double(m.x) << ',' << format_double(m.f_GHz) << ',' << to_string(m.polarity) << ','
            << format_double(m.height) << ',' << m.label << '\n';
    return out.str();
}

} // namespace fluxfit::io

#endif // FLUXFIT_IO_CSV_HPP
