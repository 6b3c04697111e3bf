#ifndef FLUXFIT_IO_JSON_HPP
#define FLUXFIT_IO_JSON_HPP

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fluxfit/fit_layout.hpp"
#include "fluxfit/fitter.hpp"
#include "fluxfit/scan.hpp"
#include "fluxfit/spectrum.hpp"

// nlohmann writes doubles in shortest round-trip form, so every value survives a write/read cycle.

namespace fluxfit
{
using Json = nlohmann::ordered_json;

namespace io
{
template <class T>
T get_or(const Json &j, const char *key, T fallback)
{
    const auto it = j.find(key);
    return it == j.end() || it->is_null() ? fallback : it->get<T>();
}

inline const Json &require(const Json &j, const char *key, const std::string &where)
{
    const auto it = j.find(key);
    if (it == j.end())
        throw ConfigError(where + ": missing key '" + key + "'");
    return *it;
}

inline Json read_json_file(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open " + path.string());
    try
    {
        return Json::parse(in);
    }
    catch (const nlohmann::json::exception &e)
    {
        throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

inline void write_text_file(const std::filesystem::path &path, const std::string &text)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ConfigError("cannot write " + path.string());
    out << text;
}

inline void write_json_file(const std::filesystem::path &path, const Json &j)
{
    write_text_file(path, j.dump(2) + "\n");
}

// --- circuit and junction -------------------------------------------------------------------

inline Json to_json(const CircuitParams &p)
{
    return Json{{"E_C_GHz", p.E_C}, {"E_L_GHz", p.E_L}, {"C_r_fF", p.C_r}, {"L_r_nH", p.L_r}, {"L_s_nH", p.L_s}};
}

// Missing keys fall back to `base`.
inline CircuitParams circuit_from_json(const Json &j, CircuitParams base = device_a_params())
{
    if (!j.is_object())
        throw ConfigError("circuit: expected an object");
    base.E_C = get_or(j, "E_C_GHz", base.E_C);
    base.E_L = get_or(j, "E_L_GHz", base.E_L);
    base.C_r = get_or(j, "C_r_fF", base.C_r);
    base.L_r = get_or(j, "L_r_nH", base.L_r);
    base.L_s = get_or(j, "L_s_nH", base.L_s);
    return base;
}

inline Json to_json(const JunctionModel &m)
{
    if (const auto *s = m.as_sinusoidal())
        return Json{{"type", "sinusoidal"}, {"E_J_GHz", s->E_J}};
    const auto *c = m.as_channels();
    return Json{{"type", "channels"}, {"Delta_GHz", c->Delta}, {"T", c->transparencies}};
}

inline JunctionModel junction_from_json(const Json &j)
{
    const auto type = require(j, "type", "junction").get<std::string>();
    try
    {
        if (type == "sinusoidal")
            return JunctionModel::sinusoidal(require(j, "E_J_GHz", "junction").get<double>());
        if (type == "channels")
            return JunctionModel::channels(require(j, "Delta_GHz", "junction").get<double>(),
                                           require(j, "T", "junction").get<std::vector<double>>());
    }
    catch (const InvalidParameter &e)
    {
        throw ConfigError(std::string("junction: ") + e.what());
    }
    throw ConfigError("junction: unknown type '" + type + "'");
}

inline Json to_json(const SpectrumConditions &c) { return Json{{"V_j", c.V_j}, {"B_z", c.B_z}}; }

inline SpectrumConditions conditions_from_json(const Json &j)
{
    return {get_or(j, "V_j", 0.0), get_or(j, "B_z", 0.0)};
}

// --- peaks ----------------------------------------------------------------------------------

inline Json to_json(const Marker &m)
{
    return Json{{"x", m.x}, {"f_GHz", m.f_GHz}, {"polarity", to_string(m.polarity)}, {"height", m.height},
                {"label", m.label}};
}

inline Json to_json(const PeakSet &peaks)
{
    Json a = Json::array();
    for (const auto &m : peaks)
        a.push_back(to_json(m));
    return a;
}

inline PeakSet peaks_from_json(const Json &j)
{
    if (!j.is_array())
        throw ConfigError("peak set: expected an array");
    PeakSet out;
    for (const auto &e : j)
    {
        Marker m;
        m.x = require(e, "x", "marker").get<double>();
        m.f_GHz = require(e, "f_GHz", "marker").get<double>();
        m.polarity = parse_polarity(get_or<std::string>(e, "polarity", "max"));
        m.height = get_or(e, "height", 0.0);
        m.label = get_or<std::string>(e, "label", kUnassigned);
        out.push_back(m);
    }
    return out;
}

// --- scans ----------------------------------------------------------------------------------

inline Json to_json(const Scan &s)
{
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < s.amplitude.rows(); ++r)
    {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < s.amplitude.cols(); ++c)
            row.push_back(s.amplitude(r, c));
        rows.push_back(std::move(row));
    }
    Json j{{"kind", to_string(s.kind)},
           {"x_unit", to_string(s.x_unit)},
           {"conditions", to_json(s.conditions)},
           {"x_axis", s.x_axis},
           {"f_axis_GHz", s.f_axis},
           {"amplitude", rows}};
    if (s.calibration)
        j["calibration"] = {{"period_uT", s.calibration->period_uT}, {"offset_uT", s.calibration->offset_uT}};
    if (s.generator)
        j["generator"] = {{"seed", s.generator->seed},
                          {"noise_sigma", s.generator->noise_sigma},
                          {"fwhm_GHz", s.generator->fwhm_GHz},
                          {"amplitude", s.generator->amplitude},
                          {"baseline", s.generator->baseline},
                          {"transitions", s.generator->transitions}};
    return j;
}

inline Scan scan_from_json(const Json &j)
{
    Scan s;
    const auto kind = get_or<std::string>(j, "kind", "two-tone");
    if (kind != "two-tone" && kind != "single-tone")
        throw ConfigError("scan: unknown kind '" + kind + "'");
    s.kind = kind == "two-tone" ? ScanKind::TwoTone : ScanKind::SingleTone;
    const auto unit = get_or<std::string>(j, "x_unit", "phi_ext");
    if (unit != "phi_ext" && unit != "B_x_uT")
        throw ConfigError("scan: unknown x_unit '" + unit + "'");
    s.x_unit = unit == "phi_ext" ? XAxisUnit::PhiExt : XAxisUnit::BxMicroTesla;
    if (j.contains("conditions"))
        s.conditions = conditions_from_json(j["conditions"]);
    s.x_axis = require(j, "x_axis", "scan").get<std::vector<double>>();
    s.f_axis = require(j, "f_axis_GHz", "scan").get<std::vector<double>>();
    const auto &rows = require(j, "amplitude", "scan");
    if (!rows.is_array() || rows.size() != s.x_axis.size())
        throw ConfigError("scan: amplitude must have one row per x value");
    s.amplitude.resize(static_cast<Eigen::Index>(s.x_axis.size()), static_cast<Eigen::Index>(s.f_axis.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
    {
        if (!rows[r].is_array() || rows[r].size() != s.f_axis.size())
            throw ParseError("scan: amplitude row " + std::to_string(r) + " has the wrong length", r);
        for (std::size_t c = 0; c < s.f_axis.size(); ++c)
            s.amplitude(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c].get<double>();
    }
    if (j.contains("calibration"))
        s.calibration = FluxCalibration{j["calibration"].at("period_uT").get<double>(),
                                        j["calibration"].at("offset_uT").get<double>()};
    if (j.contains("generator"))
    {
        const auto &g = j["generator"];
        GeneratorInfo info;
        info.seed = get_or<std::uint64_t>(g, "seed", 0);
        info.noise_sigma = get_or(g, "noise_sigma", 0.0);
        info.fwhm_GHz = get_or(g, "fwhm_GHz", 0.0);
        info.amplitude = get_or(g, "amplitude", 0.0);
        info.baseline = get_or(g, "baseline", 0.0);
        info.transitions = get_or(g, "transitions", std::vector<std::string>{});
        s.generator = info;
    }
    try
    {
        validate(s);
    }
    catch (const InvalidParameter &e)
    {
        throw ConfigError(std::string("scan: ") + e.what());
    }
    return s;
}

// --- spectra --------------------------------------------------------------------------------

inline Json to_json(const SpectrumResult &r, const NamedCurves &transitions = {})
{
    Json points = Json::array();
    for (std::size_t i = 0; i < r.phi_ext.size(); ++i)
    {
        Json levels = Json::array();
        for (std::size_t k = 0; k < r.labels[i].size(); ++k)
        {
            const auto &l = r.labels[i][k];
            levels.push_back({{"E_GHz", r.eigenvalues(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k))},
                              {"label", to_string(l.label)},
                              {"overlap", l.overlap},
                              {"mixed", l.mixed}});
        }
        points.push_back({{"phi_ext", r.phi_ext[i]}, {"levels", levels}});
    }
    Json j{{"points", points}};
    if (!transitions.empty())
    {
        Json t = Json::object();
        for (const auto &[name, f] : transitions)
            t[name] = f;
        j["transitions_GHz"] = t;
    }
    return j;
}

// --- parameter layout -----------------------------------------------------------------------

inline Json to_json(const Param &p)
{
    return Json{{"value", p.value}, {"lower", p.lower}, {"upper", p.upper}, {"frozen", p.frozen}};
}

// A bare number sets the value and keeps the other fields of `base`.
inline Param param_from_json(const Json &j, Param base)
{
    if (j.is_number())
    {
        base.value = j.get<double>();
        if (base.frozen)
            base = Param::fixed(base.value);
        return base;
    }
    if (!j.is_object())
        throw ConfigError("parameter: expected a number or an object");
    base.value = get_or(j, "value", base.value);
    base.lower = get_or(j, "lower", base.lower);
    base.upper = get_or(j, "upper", base.upper);
    base.frozen = get_or(j, "frozen", base.frozen);
    return base;
}

inline Json to_json(const ParameterLayout &l)
{
    Json shared{{"E_C", to_json(l.shared.E_C)},
                {"E_L", to_json(l.shared.E_L)},
                {"L_r", to_json(l.shared.L_r)},
                {"L_s", to_json(l.shared.L_s)},
                {"C_r_fF", l.shared.C_r}};
    Json j{{"shared", shared}};
    if (l.shared_delta)
        j["shared_delta"] = to_json(*l.shared_delta);
    Json spectra = Json::array();
    for (const auto &s : l.spectra)
    {
        Json junction;
        if (!s.junction.channels)
            junction = {{"type", "sinusoidal"}, {"E_J", to_json(s.junction.E_J)}};
        else
        {
            Json t = Json::array();
            for (const auto &p : s.junction.T)
                t.push_back(to_json(p));
            junction = {{"type", "channels"}, {"Delta", to_json(s.junction.Delta)}, {"T", t}};
        }
        spectra.push_back({{"junction", junction},
                           {"phi_offset", to_json(s.phi_offset)},
                           {"flux_period_scale", to_json(s.flux_period_scale)},
                           {"conditions", to_json(s.conditions)}});
    }
    j["spectra"] = spectra;
    return j;
}

inline ParameterLayout layout_from_json(const Json &j)
{
    ParameterLayout l;
    if (j.contains("shared"))
    {
        const auto &s = j["shared"];
        if (s.contains("E_C"))
            l.shared.E_C = param_from_json(s["E_C"], l.shared.E_C);
        if (s.contains("E_L"))
            l.shared.E_L = param_from_json(s["E_L"], l.shared.E_L);
        if (s.contains("L_r"))
            l.shared.L_r = param_from_json(s["L_r"], l.shared.L_r);
        if (s.contains("L_s"))
            l.shared.L_s = param_from_json(s["L_s"], l.shared.L_s);
        l.shared.C_r = get_or(s, "C_r_fF", l.shared.C_r);
    }
    if (j.contains("shared_delta") && !j["shared_delta"].is_null())
        l.shared_delta = param_from_json(j["shared_delta"], Param::free(26.0, 1.0, 200.0));
    for (const auto &s : require(j, "spectra", "layout"))
    {
        SpectrumParameters sp;
        const auto &junction = require(s, "junction", "layout spectrum");
        const auto type = get_or<std::string>(junction, "type", "sinusoidal");
        if (type == "sinusoidal")
        {
            sp.junction.channels = false;
            if (junction.contains("E_J"))
                sp.junction.E_J = param_from_json(junction["E_J"], sp.junction.E_J);
        }
        else if (type == "channels")
        {
            sp.junction.channels = true;
            if (junction.contains("Delta"))
                sp.junction.Delta = param_from_json(junction["Delta"], sp.junction.Delta);
            for (const auto &t : require(junction, "T", "channel junction"))
                sp.junction.T.push_back(param_from_json(t, Param::free(0.5, 1e-4, 1.0)));
        }
        else
            throw ConfigError("layout: unknown junction type '" + type + "'");
        if (s.contains("phi_offset"))
            sp.phi_offset = param_from_json(s["phi_offset"], sp.phi_offset);
        if (s.contains("flux_period_scale"))
            sp.flux_period_scale = param_from_json(s["flux_period_scale"], sp.flux_period_scale);
        if (s.contains("conditions"))
            sp.conditions = conditions_from_json(s["conditions"]);
        l.spectra.push_back(sp);
    }
    return l;
}

// --- fit results ----------------------------------------------------------------------------

inline Json to_json(const IterationRecord &r)
{
    return Json{{"iter", r.iteration},
                {"objective", r.objective},
                {"trust_radius", r.trust_radius},
                {"step_norm", r.step_norm},
                {"accepted", r.accepted}};
}

inline Json to_json(const FitResult &r)
{
    Json values = Json::object();
    for_each_param(r.layout, [&](const std::string &name, const Param &p) { values[name] = p.value; });
    Json residuals = Json::array();
    for (const auto &m : r.residuals)
        residuals.push_back({{"dataset", m.dataset},
                             {"index", m.index},
                             {"label", m.label},
                             {"x", m.x},
                             {"f_GHz", m.f_GHz},
                             {"model_GHz", m.model_GHz},
                             {"residual_GHz", m.residual_GHz}});
    return Json{{"model", to_string(r.model)},
                {"converged", r.converged},
                {"status", r.status},
                {"iterations", r.iterations},
                {"evaluations", r.evaluations},
                {"rms_residual_GHz", r.rms_residual_GHz},
                {"objective", r.objective},
                {"free_parameters", r.free_parameters},
                {"warnings", r.warnings},
                {"values", values},
                {"layout", to_json(r.layout)},
                {"residuals", residuals}};
}

// Enough of a stored result for phi0 extraction and reporting.
inline FitResult fit_result_from_json(const Json &j)
{
    FitResult r;
    r.model = parse_model_kind(get_or<std::string>(j, "model", "uncoupled"));
    r.converged = require(j, "converged", "fit result").get<bool>();
    r.status = get_or<std::string>(j, "status", "");
    r.iterations = get_or(j, "iterations", 0);
    r.evaluations = get_or(j, "evaluations", 0);
    r.rms_residual_GHz = get_or(j, "rms_residual_GHz", 0.0);
    r.objective = get_or(j, "objective", 0.0);
    r.free_parameters = get_or(j, "free_parameters", std::vector<std::string>{});
    r.warnings = get_or(j, "warnings", std::vector<std::string>{});
    r.layout = layout_from_json(require(j, "layout", "fit result"));
    return r;
}

} // namespace io
} // namespace fluxfit

#endif // FLUXFIT_IO_JSON_HPP
