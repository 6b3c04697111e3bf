#ifndef FLUXFIT_CLI_APP_HPP
#define FLUXFIT_CLI_APP_HPP

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fluxfit/fluxfit.hpp"
#include "fluxfit/io/csv.hpp"
#include "fluxfit/io/json.hpp"

// Batch front end. Every command resolves its settings into one JSON object
// (built-in defaults <- --config file <- flags), runs from that object only, and stores it in
// <out>/manifest.json. Passing a manifest back as --config replays the run.

namespace fluxfit::cli
{
namespace fs = std::filesystem;

inline constexpr const char *kVersion = "0.1.0";

enum ExitCode : int
{
    kOk = 0,
    kConfig = 2,
    kNotConverged = 3,
    kNumerical = 4
};

struct Globals
{
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
};

inline Json default_config(const std::string &command)
{
    const Json basis{{"n_fluxonium", 60}, {"n_resonator", 8}};
    if (command == "simulate")
        return Json{{"circuit", io::to_json(device_a_params())},
                    {"junction", io::to_json(JunctionModel::sinusoidal(6.7))},
                    {"model", "uncoupled"},
                    {"basis", basis},
                    {"phi_min_over_pi", -1.0},
                    {"phi_max_over_pi", 1.0},
                    {"phi_steps", 201},
                    {"transitions", {"g0->e0", "g0->f0", "g0->h0"}},
                    {"levels", false},
                    {"level_count", 8},
                    {"potential", false},
                    {"potential_phi_ext_over_pi", {0.0, 0.5, 1.0}},
                    {"potential_span_over_pi", 6.0},
                    {"potential_points", 601}};
    if (command == "synth")
        return Json{{"transitions_csv", ""},
                    {"circuit", io::to_json(device_a_params())},
                    {"junction", io::to_json(JunctionModel::sinusoidal(6.7))},
                    {"model", "uncoupled"},
                    {"basis", basis},
                    {"transitions", {"g0->e0", "g0->f0", "e0->f0"}},
                    {"x_min_over_pi", -1.0},
                    {"x_max_over_pi", 1.0},
                    {"x_steps", 101},
                    {"f_min_GHz", 0.0},
                    {"f_max_GHz", 16.0},
                    {"f_steps", 1601},
                    {"fwhm_GHz", 0.03},
                    {"amplitude", 1.0},
                    {"baseline", 0.0},
                    {"polarity", "max"},
                    {"noise_sigma", 0.0},
                    {"seed", 0},
                    {"conditions", {{"V_j", 0.0}, {"B_z", 0.0}}}};
    if (command == "peaks")
        return Json{{"scan", ""},
                    {"smooth_sigma_steps", 3.0},
                    {"min_height", 0.3},
                    {"polarity", "both"},
                    {"assign_csv", ""},
                    {"tol_GHz", 0.05}};
    if (command == "fit")
        return Json{{"peaks", Json::array()},
                    {"layout", ""},
                    {"model", "uncoupled"},
                    {"basis", basis},
                    {"junction_type", "sinusoidal"},
                    {"channels", 1},
                    {"delta_seed_GHz", 26.0},
                    {"share_delta", false},
                    {"fit_offsets", true},
                    {"design", {{"C_r_fF", 26.0}, {"L_r_nH", 47.0}, {"L_s_nH", 8.5}}},
                    {"freeze", Json::array()},
                    {"compare_freeze", Json::array()},
                    {"optimizer", {{"max_iter", 100}, {"x_tol", 1e-10}, {"f_tol", 1e-12}, {"g_tol", 1e-12}}},
                    {"multistart", 0},
                    {"seed", 0}};
    if (command == "phi0")
        return Json{{"results", ""}, {"reference_vj", nullptr}};
    throw ConfigError("unknown command '" + command + "'");
}

// defaults <- file (shared "circuit"/"junction" blocks and the command's own section) <- flags.
// A manifest replaces defaults and file sections wholesale.
inline Json resolve_config(const std::string &command, const Globals &g, const Json &flags)
{
    Json cfg = default_config(command);
    if (!g.config.empty())
    {
        const Json file = io::read_json_file(g.config);
        if (file.contains("fluxfit_manifest"))
        {
            if (file.value("command", "") != command)
                throw ConfigError("manifest " + g.config + " was written by '" + file.value("command", "") +
                                  "', not '" + command + "'");
            cfg = file.at("config");
        }
        else
        {
            for (const char *shared : {"circuit", "junction"})
                if (file.contains(shared) && cfg.contains(shared))
                {
                    if (std::string(shared) == "junction")
                        cfg[shared] = file[shared];
                    else
                        cfg[shared].merge_patch(file[shared]);
                }
            if (file.contains(command))
                cfg.merge_patch(file[command]);
        }
    }
    for (const auto &[key, value] : flags.items())
    {
        if (key == "circuit")
            cfg["circuit"].merge_patch(value);
        else if (key == "basis")
            cfg["basis"].merge_patch(value);
        else
            cfg[key] = value;
    }
    if (g.seed && cfg.contains("seed"))
        cfg["seed"] = *g.seed;
    return cfg;
}

inline std::string utc_timestamp()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct RunContext
{
    std::string command;
    Globals globals;
    Json config;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string started;

    fs::path out_path(const std::string &name)
    {
        outputs.push_back(name);
        return fs::path(globals.out) / name;
    }

    void write_manifest() const
    {
        Json m{{"fluxfit_manifest", 1},
               {"tool", "fluxfit"},
               {"version", kVersion},
               {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                             std::to_string(EIGEN_MINOR_VERSION)},
               {"command", command},
               {"seed", config.contains("seed") ? config["seed"] : Json(nullptr)},
               {"threads", globals.threads},
               {"started_utc", started},
               {"finished_utc", utc_timestamp()},
               {"inputs", inputs},
               {"outputs", outputs},
               {"config", config}};
        io::write_json_file(fs::path(globals.out) / "manifest.json", m);
    }
};

inline BasisSpec basis_from(const Json &cfg)
{
    BasisSpec b;
    b.n_fluxonium = cfg["basis"].value("n_fluxonium", b.n_fluxonium);
    b.n_resonator = cfg["basis"].value("n_resonator", b.n_resonator);
    if (cfg.value("model", "uncoupled") == "uncoupled")
        b.n_resonator = 1;
    return b;
}

inline std::vector<double> linspace(double lo, double hi, int n)
{
    if (n < 1)
        throw ConfigError("step count must be >= 1");
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
    return v;
}

inline std::vector<TransitionSpec> transitions_from(const Json &cfg)
{
    std::vector<TransitionSpec> specs;
    for (const auto &t : cfg.at("transitions"))
        specs.push_back(parse_transition(t.get<std::string>()));
    if (specs.empty())
        throw ConfigError("no transitions requested");
    return specs;
}

// Model transitions from circuit/junction settings on the given phi axis.
inline std::pair<SpectrumResult, NamedCurves> model_curves(const Json &cfg, const std::vector<double> &phi,
                                                          unsigned threads)
{
    const CircuitParams circuit = io::circuit_from_json(cfg.at("circuit"));
    validate(circuit);
    for (const auto &w : validation_warnings(circuit))
        std::cerr << "warning: " << w << "\n";
    const JunctionModel junction = io::junction_from_json(cfg.at("junction"));
    const auto specs = transitions_from(cfg);
    SpectrumOptions opt;
    opt.model = parse_model_kind(cfg.at("model").get<std::string>());
    opt.basis = basis_from(cfg);
    opt.threads = threads;
    for (const auto &s : specs)
        if (opt.model == ModelKind::Uncoupled && (s.initial.n != 0 || s.final.n != 0))
            throw ConfigError("transition " + to_string(s) + " needs the coupled model");
    opt.levels = opt.model == ModelKind::Uncoupled
                     ? std::max(levels_needed(specs), cfg.value("level_count", 1))
                     : opt.basis.dimension();
    auto spectrum = compute_spectrum(junction, circuit, phi, opt);
    auto curves = transition_frequencies(spectrum, specs);
    return {std::move(spectrum), std::move(curves)};
}

inline int cmd_simulate(RunContext &ctx)
{
    const Json &cfg = ctx.config;
    const auto phi = linspace(cfg.at("phi_min_over_pi").get<double>() * kPi,
                              cfg.at("phi_max_over_pi").get<double>() * kPi, cfg.at("phi_steps").get<int>());
    const auto [spectrum, curves] = model_curves(cfg, phi, ctx.globals.threads);
    io::write_text_file(ctx.out_path("transitions.csv"), io::transitions_csv(phi, curves));
    io::write_json_file(ctx.out_path("spectrum.json"), io::to_json(spectrum, curves));
    if (cfg.at("levels").get<bool>())
    {
        SpectrumResult trimmed = spectrum;
        const auto count = std::min<Eigen::Index>(cfg.at("level_count").get<int>(), spectrum.eigenvalues.cols());
        trimmed.eigenvalues = spectrum.eigenvalues.leftCols(count);
        io::write_text_file(ctx.out_path("levels.csv"), io::levels_csv(trimmed));
    }
    if (cfg.at("potential").get<bool>())
    {
        const JunctionModel junction = io::junction_from_json(cfg.at("junction"));
        const double E_L = io::circuit_from_json(cfg.at("circuit")).E_L;
        const double half = 0.5 * cfg.at("potential_span_over_pi").get<double>() * kPi;
        const auto grid = linspace(-half, half, cfg.at("potential_points").get<int>());
        const auto phi_ext = cfg.at("potential_phi_ext_over_pi").get<std::vector<double>>();
        std::string text = "phi_over_pi";
        for (double p : phi_ext)
            text += ",V_GHz_at_" + io::format_double(p) + "pi";
        text += "\n";
        for (double x : grid)
        {
            text += io::format_double(x / kPi);
            for (double p : phi_ext)
                text += "," + io::format_double(potential_eval(junction, E_L, x, p * kPi));
            text += "\n";
        }
        io::write_text_file(ctx.out_path("potential.csv"), text);
    }
    return kOk;
}

inline int cmd_synth(RunContext &ctx)
{
    const Json &cfg = ctx.config;
    const auto x = linspace(cfg.at("x_min_over_pi").get<double>() * kPi, cfg.at("x_max_over_pi").get<double>() * kPi,
                            cfg.at("x_steps").get<int>());
    const auto f = linspace(cfg.at("f_min_GHz").get<double>(), cfg.at("f_max_GHz").get<double>(),
                            cfg.at("f_steps").get<int>());
    TransitionTable table;
    const auto csv = cfg.at("transitions_csv").get<std::string>();
    if (!csv.empty())
    {
        ctx.inputs.push_back(csv);
        table = io::read_transitions_csv(csv);
    }
    else
    {
        auto [spectrum, curves] = model_curves(cfg, x, ctx.globals.threads);
        table = {x, std::move(curves)};
    }
    Lineshape shape;
    shape.fwhm_GHz = cfg.at("fwhm_GHz").get<double>();
    shape.amplitude = cfg.at("amplitude").get<double>();
    shape.baseline = cfg.at("baseline").get<double>();
    shape.polarity = parse_polarity(cfg.at("polarity").get<std::string>());
    Scan scan = synthesize_scan(table, shape, cfg.at("noise_sigma").get<double>(), cfg.at("seed").get<std::uint64_t>(),
                                x, f);
    scan.conditions = io::conditions_from_json(cfg.at("conditions"));
    io::write_text_file(ctx.out_path("scan.csv"), io::scan_csv(scan));
    io::write_json_file(ctx.out_path("scan.json"), io::to_json(scan));
    return kOk;
}

inline Scan load_scan(const std::string &path)
{
    if (fs::path(path).extension() == ".json")
        return io::scan_from_json(io::read_json_file(path));
    return io::read_scan_csv(fs::path(path));
}

inline int cmd_peaks(RunContext &ctx)
{
    const Json &cfg = ctx.config;
    const auto path = cfg.at("scan").get<std::string>();
    if (path.empty())
        throw ConfigError("peaks: --scan is required");
    ctx.inputs.push_back(path);
    Scan scan = load_scan(path);
    const double sigma_steps = cfg.at("smooth_sigma_steps").get<double>();
    if (sigma_steps > 0.0 && scan.f_axis.size() > 1)
        scan = smooth_frequency_axis(scan, sigma_steps * scan.f_step());
    PeakSet peaks = find_extrema(scan, cfg.at("min_height").get<double>(),
                                 parse_polarity_filter(cfg.at("polarity").get<std::string>()));
    const auto assign = cfg.at("assign_csv").get<std::string>();
    if (!assign.empty())
    {
        ctx.inputs.push_back(assign);
        peaks = assign_markers(peaks, io::read_transitions_csv(assign), cfg.at("tol_GHz").get<double>());
    }
    io::write_json_file(ctx.out_path("peaks.json"), io::to_json(peaks));
    io::write_text_file(ctx.out_path("peaks.csv"), io::peaks_csv(peaks));
    return kOk;
}

// A peaks file is either a bare PeakSet array or {"markers": [...], "weights": [...], "conditions": {...}}.
inline FitDataset load_dataset(const std::string &path)
{
    const Json j = io::read_json_file(path);
    FitDataset d;
    if (j.is_array())
    {
        d.markers = io::peaks_from_json(j);
        return d;
    }
    d.markers = io::peaks_from_json(io::require(j, "markers", path));
    d.weights = io::get_or(j, "weights", std::vector<double>{});
    if (j.contains("conditions"))
        d.conditions = io::conditions_from_json(j["conditions"]);
    return d;
}

inline std::pair<std::string, double> parse_assignment(const std::string &text)
{
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("expected NAME=VALUE, got '" + text + "'");
    try
    {
        std::size_t used = 0;
        const double v = std::stod(text.substr(eq + 1), &used);
        if (used != text.size() - eq - 1)
            throw std::invalid_argument("trailing");
        return {text.substr(0, eq), v};
    }
    catch (const std::logic_error &)
    {
        throw ConfigError("cannot parse value in '" + text + "'");
    }
}

inline int cmd_fit(RunContext &ctx)
{
    const Json &cfg = ctx.config;
    FitProblem problem;
    for (const auto &p : cfg.at("peaks"))
    {
        ctx.inputs.push_back(p.get<std::string>());
        problem.datasets.push_back(load_dataset(p.get<std::string>()));
    }
    if (problem.datasets.empty())
        throw ConfigError("fit: at least one --peaks file is required");
    problem.model = parse_model_kind(cfg.at("model").get<std::string>());
    problem.basis = basis_from(cfg);

    const auto layout_path = cfg.at("layout").get<std::string>();
    if (!layout_path.empty())
    {
        ctx.inputs.push_back(layout_path);
        problem.layout = io::layout_from_json(io::read_json_file(layout_path));
        if (problem.layout.spectra.size() != problem.datasets.size())
            throw ConfigError("layout has " + std::to_string(problem.layout.spectra.size()) + " spectra for " +
                              std::to_string(problem.datasets.size()) + " peak files");
    }
    else
    {
        InitialGuessConfig g;
        const auto type = cfg.at("junction_type").get<std::string>();
        if (type != "sinusoidal" && type != "channels")
            throw ConfigError("unknown junction type '" + type + "'");
        g.channels = type == "channels";
        g.n_channels = cfg.at("channels").get<int>();
        if (g.n_channels < 1)
            throw ConfigError("channel count must be >= 1");
        g.Delta = cfg.at("delta_seed_GHz").get<double>();
        g.share_delta = cfg.at("share_delta").get<bool>();
        g.fit_offsets = cfg.at("fit_offsets").get<bool>();
        g.C_r = cfg.at("design").value("C_r_fF", g.C_r);
        g.L_r = cfg.at("design").value("L_r_nH", g.L_r);
        g.L_s = cfg.at("design").value("L_s_nH", g.L_s);
        problem.layout = initial_guess(problem.datasets, g);
    }
    for (std::size_t d = 0; d < problem.datasets.size(); ++d)
        problem.layout.spectra[d].conditions = problem.datasets[d].conditions;
    // The resonator does not enter the uncoupled model, so its inductances cannot be fitted there.
    if (problem.model == ModelKind::Uncoupled)
    {
        problem.layout.shared.L_r = Param::fixed(problem.layout.shared.L_r.value);
        problem.layout.shared.L_s = Param::fixed(problem.layout.shared.L_s.value);
    }
    for (const auto &f : cfg.at("freeze"))
    {
        const auto [name, value] = parse_assignment(f.get<std::string>());
        freeze_parameter(problem.layout, name, value);
    }

    FitOptions opt;
    const auto &o = cfg.at("optimizer");
    opt.optimizer.max_iter = o.value("max_iter", opt.optimizer.max_iter);
    opt.optimizer.x_tol = o.value("x_tol", opt.optimizer.x_tol);
    opt.optimizer.f_tol = o.value("f_tol", opt.optimizer.f_tol);
    opt.optimizer.g_tol = o.value("g_tol", opt.optimizer.g_tol);
    opt.multistart = cfg.at("multistart").get<int>();
    opt.seed = cfg.at("seed").get<std::uint64_t>();
    opt.threads = ctx.globals.threads;

    const FitResult result = fit(problem, opt);
    io::write_json_file(ctx.out_path("fit_result.json"), io::to_json(result));
    io::write_text_file(ctx.out_path("iterations.csv"), io::iteration_log_csv(result.log));
    for (const auto &w : result.warnings)
        std::cerr << "warning: " << w << "\n";
    bool all_converged = result.converged;

    const auto &compare = cfg.at("compare_freeze");
    if (!compare.empty())
    {
        std::string report = "variant,frozen,rms_residual_GHz,objective,converged\n";
        auto row = [&](const std::string &name, const std::string &frozen, const FitResult &r) {
            report += name + "," + frozen + "," + io::format_double(r.rms_residual_GHz) + "," +
                      io::format_double(r.objective) + "," + (r.converged ? "1" : "0") + "\n";
        };
        row("base", "", result);
        for (std::size_t k = 0; k < compare.size(); ++k)
        {
            const auto text = compare[k].get<std::string>();
            const auto [name, value] = parse_assignment(text);
            FitProblem variant = problem;
            freeze_parameter(variant.layout, name, value);
            const FitResult r = fit(variant, opt);
            io::write_json_file(ctx.out_path("fit_result_compare_" + std::to_string(k) + ".json"), io::to_json(r));
            row("compare_" + std::to_string(k), text, r);
            all_converged = all_converged && r.converged;
        }
        io::write_text_file(ctx.out_path("compare.csv"), report);
    }
    std::cout << "rms_residual_GHz " << io::format_double(result.rms_residual_GHz) << " converged "
              << (result.converged ? "yes" : "no") << " (" << result.status << ")\n";
    return all_converged ? kOk : kNotConverged;
}

inline int cmd_phi0(RunContext &ctx)
{
    const Json &cfg = ctx.config;
    const auto dir = cfg.at("results").get<std::string>();
    if (dir.empty() || !fs::is_directory(dir))
        throw ConfigError("phi0: --results must name a directory of fit results");
    if (cfg.at("reference_vj").is_null())
        throw ConfigError("phi0: --reference-vj is required");
    const double reference = cfg.at("reference_vj").get<double>();

    std::vector<fs::path> files;
    for (const auto &e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::map<double, std::vector<OffsetSample>> groups;
    for (const auto &f : files)
    {
        const Json j = io::read_json_file(f);
        if (!j.contains("layout") || !j.contains("converged"))
            continue; // manifests and other side files
        ctx.inputs.push_back(f.string());
        const FitResult r = io::fit_result_from_json(j);
        for (const auto &s : r.layout.spectra)
            groups[s.conditions.B_z].push_back({s.conditions.V_j, s.conditions.B_z, s.phi_offset.value, r.converged});
    }
    if (groups.empty())
        throw ConfigError("phi0: no fit results found in " + dir);
    std::string text = "V_j,B_z,phi0_over_pi,phi0_unwrapped_over_pi\n";
    for (const auto &[bz, sweep] : groups)
    {
        std::vector<Phi0Sample> rows;
        try
        {
            rows = extract_phi0(sweep, reference);
        }
        catch (const InvalidParameter &e)
        {
            throw ConfigError("B_z = " + io::format_double(bz) + ": " + e.what());
        }
        for (const auto &r : rows)
            text += io::format_double(r.V_j) + "," + io::format_double(r.B_z) + "," + io::format_double(r.phi0 / kPi) +
                    "," + io::format_double(r.phi0_unwrapped / kPi) + "\n";
    }
    io::write_text_file(ctx.out_path("phi0.csv"), text);
    return kOk;
}

// Entry point shared by the executable and the tests.
inline int run(int argc, const char *const *argv, std::ostream &err = std::cerr)
{
    CLI::App app{"fluxfit: fluxonium spectra, spectroscopy peaks and multi-spectrum fits.\n"
                 "Units: energies GHz (E/h), inductance nH, capacitance fF, phase radians;\n"
                 "options ending in _over_pi / -over-pi are in units of pi."};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "JSON config file or a manifest.json from an earlier run");
    app.add_option("--out", g.out, "output directory")->capture_default_str();
    app.add_option("--seed", g.seed, "random seed (u64)");
    app.add_option("--threads", g.threads, "worker threads")->capture_default_str()->check(CLI::Range(1u, 1024u));

    Json flags = Json::object();
    // Flag values are collected into `flags` after parsing, only when given.
    std::vector<std::function<void()>> collectors;
    auto opt = [&](CLI::App *sub, const std::string &name, const std::string &key, auto *dummy,
                   const std::string &help) {
        using T = std::remove_pointer_t<decltype(dummy)>;
        auto holder = std::make_shared<std::optional<T>>();
        sub->add_option(name, *holder, help);
        collectors.push_back([&flags, holder, key, sub] {
            if (sub->parsed() && *holder)
                flags[key] = **holder;
        });
    };
    auto flag = [&](CLI::App *sub, const std::string &name, const std::string &key, const std::string &help) {
        auto holder = std::make_shared<bool>(false);
        sub->add_flag(name, *holder, help);
        collectors.push_back([&flags, holder, key, sub] {
            if (sub->parsed() && *holder)
                flags[key] = true;
        });
    };
    auto circuit_opts = [&](CLI::App *sub) {
        auto device = std::make_shared<std::string>();
        sub->add_option("--device", *device, "parameter preset: device a or b")
            ->check(CLI::IsMember({"a", "b"}));
        auto ec = std::make_shared<std::optional<double>>();
        auto el = std::make_shared<std::optional<double>>();
        auto cr = std::make_shared<std::optional<double>>();
        auto lr = std::make_shared<std::optional<double>>();
        auto ls = std::make_shared<std::optional<double>>();
        sub->add_option("--E_C", *ec, "charging energy, GHz");
        sub->add_option("--E_L", *el, "inductive energy, GHz");
        sub->add_option("--C_r", *cr, "resonator capacitance, fF");
        sub->add_option("--L_r", *lr, "resonator inductance, nH");
        sub->add_option("--L_s", *ls, "shared inductance, nH");
        auto ej = std::make_shared<std::optional<double>>();
        auto delta = std::make_shared<std::optional<double>>();
        auto t = std::make_shared<std::vector<double>>();
        sub->add_option("--E_J", *ej, "sinusoidal junction, GHz");
        sub->add_option("--Delta", *delta, "channel junction gap, GHz (use with --T)");
        sub->add_option("--T", *t, "channel transparencies (repeatable)");
        auto model = std::make_shared<std::optional<std::string>>();
        sub->add_option("--model", *model, "uncoupled or coupled")->check(CLI::IsMember({"uncoupled", "coupled"}));
        auto nf = std::make_shared<std::optional<int>>();
        auto nr = std::make_shared<std::optional<int>>();
        sub->add_option("--n-fluxonium", *nf, "fluxonium oscillator states");
        sub->add_option("--n-resonator", *nr, "resonator Fock states (coupled model)");
        auto tr = std::make_shared<std::vector<std::string>>();
        sub->add_option("--transitions", *tr, "transition labels such as g0->e0 (repeatable)")->delimiter(',');
        collectors.push_back([=, &flags] {
            if (!sub->parsed())
                return;
            Json c = Json::object();
            if (!device->empty())
                c = io::to_json(*device == "a" ? device_a_params() : device_b_params());
            if (*ec)
                c["E_C_GHz"] = **ec;
            if (*el)
                c["E_L_GHz"] = **el;
            if (*cr)
                c["C_r_fF"] = **cr;
            if (*lr)
                c["L_r_nH"] = **lr;
            if (*ls)
                c["L_s_nH"] = **ls;
            if (!c.empty())
                flags["circuit"] = c;
            if (*ej && (*delta || !t->empty()))
                throw ConfigError("--E_J cannot be combined with --Delta/--T");
            if (*ej)
                flags["junction"] = io::to_json(JunctionModel::sinusoidal(**ej));
            if (*delta || !t->empty())
            {
                if (!*delta || t->empty())
                    throw ConfigError("a channel junction needs both --Delta and --T");
                flags["junction"] = io::to_json(JunctionModel::channels(**delta, *t));
            }
            if (*model)
                flags["model"] = **model;
            Json b = Json::object();
            if (*nf)
                b["n_fluxonium"] = **nf;
            if (*nr)
                b["n_resonator"] = **nr;
            if (!b.empty())
                flags["basis"] = b;
            if (!tr->empty())
                flags["transitions"] = *tr;
        });
    };

    auto *simulate = app.add_subcommand("simulate", "transition frequencies versus external phase");
    circuit_opts(simulate);
    opt(simulate, "--phi-min", "phi_min_over_pi", static_cast<double *>(nullptr), "sweep start, units of pi");
    opt(simulate, "--phi-max", "phi_max_over_pi", static_cast<double *>(nullptr), "sweep end, units of pi");
    opt(simulate, "--phi-steps", "phi_steps", static_cast<int *>(nullptr), "sweep points");
    flag(simulate, "--levels", "levels", "also write eigenenergies (relative to ground) vs phi");
    opt(simulate, "--level-count", "level_count", static_cast<int *>(nullptr), "levels written by --levels");
    flag(simulate, "--potential", "potential", "also write V(phi) samples");

    auto *synth = app.add_subcommand("synth", "synthetic two-tone scan from model transitions");
    circuit_opts(synth);
    opt(synth, "--transitions-csv", "transitions_csv", static_cast<std::string *>(nullptr),
        "model curves from a simulate run instead of computing them");
    opt(synth, "--x-min", "x_min_over_pi", static_cast<double *>(nullptr), "units of pi");
    opt(synth, "--x-max", "x_max_over_pi", static_cast<double *>(nullptr), "units of pi");
    opt(synth, "--x-steps", "x_steps", static_cast<int *>(nullptr), "flux points");
    opt(synth, "--f-min", "f_min_GHz", static_cast<double *>(nullptr), "GHz");
    opt(synth, "--f-max", "f_max_GHz", static_cast<double *>(nullptr), "GHz");
    opt(synth, "--f-steps", "f_steps", static_cast<int *>(nullptr), "frequency points");
    opt(synth, "--fwhm", "fwhm_GHz", static_cast<double *>(nullptr), "line FWHM, GHz");
    opt(synth, "--amplitude", "amplitude", static_cast<double *>(nullptr), "line amplitude");
    opt(synth, "--baseline", "baseline", static_cast<double *>(nullptr), "constant background");
    opt(synth, "--polarity", "polarity", static_cast<std::string *>(nullptr), "max (peaks) or min (dips)");
    opt(synth, "--noise", "noise_sigma", static_cast<double *>(nullptr), "Gaussian noise sigma");

    auto *peaks = app.add_subcommand("peaks", "extract and label extrema from a scan");
    opt(peaks, "--scan", "scan", static_cast<std::string *>(nullptr), "scan CSV (x,f_GHz,amplitude) or scan JSON");
    opt(peaks, "--sigma-steps", "smooth_sigma_steps", static_cast<double *>(nullptr),
        "Gaussian smoothing sigma in frequency steps (0 = none)");
    opt(peaks, "--min-height", "min_height", static_cast<double *>(nullptr), "minimum prominence");
    opt(peaks, "--polarity", "polarity", static_cast<std::string *>(nullptr), "max, min or both");
    opt(peaks, "--assign", "assign_csv", static_cast<std::string *>(nullptr), "transitions CSV used for labeling");
    opt(peaks, "--tol", "tol_GHz", static_cast<double *>(nullptr), "assignment tolerance, GHz");

    auto *fitc = app.add_subcommand("fit", "simultaneous fit of labeled peak sets");
    auto peak_files = std::make_shared<std::vector<std::string>>();
    fitc->add_option("--peaks", *peak_files, "peak set JSON (repeatable, one per spectrum)");
    opt(fitc, "--layout", "layout", static_cast<std::string *>(nullptr), "parameter layout JSON (default: seeded)");
    opt(fitc, "--model", "model", static_cast<std::string *>(nullptr), "uncoupled or coupled");
    opt(fitc, "--junction-type", "junction_type", static_cast<std::string *>(nullptr), "sinusoidal or channels");
    opt(fitc, "--channels", "channels", static_cast<int *>(nullptr), "channel count for the channels model");
    opt(fitc, "--delta-seed", "delta_seed_GHz", static_cast<double *>(nullptr), "starting gap, GHz");
    flag(fitc, "--share-delta", "share_delta", "one gap for all spectra");
    auto no_offsets = std::make_shared<bool>(false);
    fitc->add_flag("--no-offsets", *no_offsets, "freeze every flux offset at 0");
    auto freezes = std::make_shared<std::vector<std::string>>();
    auto compares = std::make_shared<std::vector<std::string>>();
    fitc->add_option("--freeze", *freezes, "NAME=VALUE, freeze a parameter (repeatable)");
    fitc->add_option("--compare-freeze", *compares, "NAME=VALUE, extra fit for a side-by-side RMS report");
    opt(fitc, "--multistart", "multistart", static_cast<int *>(nullptr), "extra perturbed starts");
    auto max_iter = std::make_shared<std::optional<int>>();
    auto x_tol = std::make_shared<std::optional<double>>();
    auto f_tol = std::make_shared<std::optional<double>>();
    fitc->add_option("--max-iter", *max_iter, "optimizer iteration limit");
    fitc->add_option("--x-tol", *x_tol, "relative step tolerance");
    fitc->add_option("--f-tol", *f_tol, "relative objective tolerance");
    auto fit_nf = std::make_shared<std::optional<int>>();
    auto fit_nr = std::make_shared<std::optional<int>>();
    fitc->add_option("--n-fluxonium", *fit_nf, "fluxonium oscillator states");
    fitc->add_option("--n-resonator", *fit_nr, "resonator Fock states (coupled model)");
    collectors.push_back([=, &flags] {
        if (!fitc->parsed())
            return;
        if (!peak_files->empty())
            flags["peaks"] = *peak_files;
        if (*no_offsets)
            flags["fit_offsets"] = false;
        if (!freezes->empty())
            flags["freeze"] = *freezes;
        if (!compares->empty())
            flags["compare_freeze"] = *compares;
        Json o = Json::object();
        if (*max_iter)
            o["max_iter"] = **max_iter;
        if (*x_tol)
            o["x_tol"] = **x_tol;
        if (*f_tol)
            o["f_tol"] = **f_tol;
        if (!o.empty())
            flags["optimizer_patch"] = o;
        Json b = Json::object();
        if (*fit_nf)
            b["n_fluxonium"] = **fit_nf;
        if (*fit_nr)
            b["n_resonator"] = **fit_nr;
        if (!b.empty())
            flags["basis"] = b;
    });

    auto *phi0 = app.add_subcommand("phi0", "phi0 versus V_j from a directory of fit results");
    opt(phi0, "--results", "results", static_cast<std::string *>(nullptr), "directory of fit_result JSON files");
    opt(phi0, "--reference-vj", "reference_vj", static_cast<double *>(nullptr), "V_j of the phi0 = 0 spectrum");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int code = app.exit(e, std::cout, err);
        return code == 0 ? kOk : kConfig;
    }

    CLI::App *chosen = app.get_subcommands().front();
    RunContext ctx;
    ctx.command = chosen->get_name();
    ctx.globals = g;
    ctx.started = utc_timestamp();
    try
    {
        for (auto &c : collectors)
            c();
        Json patch_opt;
        if (flags.contains("optimizer_patch"))
        {
            patch_opt = flags["optimizer_patch"];
            flags.erase("optimizer_patch");
        }
        ctx.config = resolve_config(ctx.command, g, flags);
        if (!patch_opt.is_null())
            ctx.config["optimizer"].merge_patch(patch_opt);
        fs::create_directories(g.out);
        int code = kOk;
        if (ctx.command == "simulate")
            code = cmd_simulate(ctx);
        else if (ctx.command == "synth")
            code = cmd_synth(ctx);
        else if (ctx.command == "peaks")
            code = cmd_peaks(ctx);
        else if (ctx.command == "fit")
            code = cmd_fit(ctx);
        else
            code = cmd_phi0(ctx);
        ctx.write_manifest();
        return code;
    }
    catch (const ParseError &e)
    {
        err << "error: " << e.what() << "\n";
        return kConfig;
    }
    catch (const ConfigError &e)
    {
        err << "error: " << e.what() << "\n";
        return kConfig;
    }
    catch (const InvalidParameter &e)
    {
        err << "error: " << e.what() << "\n";
        return kConfig;
    }
    catch (const NumericalError &e)
    {
        err << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    }
    catch (const nlohmann::json::exception &e)
    {
        err << "error: malformed configuration: " << e.what() << "\n";
        return kConfig;
    }
    catch (const fs::filesystem_error &e)
    {
        err << "error: " << e.what() << "\n";
        return kConfig;
    }
}

} // namespace fluxfit::cli

#endif // FLUXFIT_CLI_APP_HPP
