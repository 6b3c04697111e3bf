#ifndef FLUXFIT_FITTER_HPP
#define FLUXFIT_FITTER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "fluxfit/fit_layout.hpp"
#include "fluxfit/least_squares.hpp"
#include "fluxfit/parallel.hpp"
#include "fluxfit/spectrum.hpp"

namespace fluxfit
{
// Wraps an angle to (-pi, pi].
inline double wrap_phase(double phi)
{
    double w = std::remainder(phi, kTwoPi);
    if (w <= -kPi)
        w += kTwoPi;
    return w;
}

// Residual model of a fit problem: markers compiled once, parameters applied per evaluation.
// Evaluation is const and allocates its own buffers, so concurrent calls are safe.
class ResidualModel
{
public:
    struct CompiledMarker
    {
        std::size_t dataset;
        std::size_t index; // position within the dataset's marker list
        std::size_t point; // index into the evaluation points
        TransitionSpec transition;
        std::string name;
        double x;
        double f;
        double weight;
    };

    struct EvalPoint
    {
        std::size_t dataset;
        double x;
    };

    ResidualModel(FitProblem problem, unsigned threads = 1) : problem_(std::move(problem)), threads_(threads)
    {
        validate(problem_.basis);
        if (problem_.datasets.size() != problem_.layout.spectra.size())
            throw ConfigError("fit problem has " + std::to_string(problem_.datasets.size()) + " datasets but " +
                              std::to_string(problem_.layout.spectra.size()) + " spectrum layouts");
        levels_.assign(problem_.datasets.size(), 1);
        for (std::size_t d = 0; d < problem_.datasets.size(); ++d)
        {
            const auto &ds = problem_.datasets[d];
            if (!ds.weights.empty() && ds.weights.size() != ds.markers.size())
                throw ConfigError("dataset " + std::to_string(d) + " has a weight count different from its markers");
            std::map<double, std::size_t> points;
            for (std::size_t i = 0; i < ds.markers.size(); ++i)
            {
                const auto &m = ds.markers[i];
                if (m.label == kUnassigned)
                    continue;
                const double w = ds.weights.empty() ? 1.0 : ds.weights[i];
                if (!(w >= 0.0) || !std::isfinite(w))
                    throw ConfigError("marker weights must be finite and non-negative");
                TransitionSpec t = parse_transition(m.label);
                if (problem_.model == ModelKind::Uncoupled && (t.initial.n != 0 || t.final.n != 0))
                    throw ConfigError("transition " + m.label +
                                      " involves resonator photons and cannot be computed by the uncoupled model");
                const int top = std::max(t.initial.m, t.final.m);
                if (top >= problem_.basis.n_fluxonium)
                    throw ConfigError("transition " + m.label + " needs more fluxonium levels than the basis holds");
                levels_[d] = std::max(levels_[d], top + 1);
                auto [it, inserted] = points.try_emplace(m.x, points_.size());
                if (inserted)
                    points_.push_back({d, m.x});
                markers_.push_back({d, i, it->second, t, m.label, m.x, m.f_GHz, w});
            }
        }
        for (const auto &[name, p] : named_slots())
            if (!p.frozen)
                free_names_.push_back(name);
    }

    const FitProblem &problem() const { return problem_; }
    const std::vector<CompiledMarker> &markers() const { return markers_; }
    std::size_t free_count() const { return free_names_.size(); }
    const std::vector<std::string> &free_names() const { return free_names_; }

    Eigen::VectorXd initial_vector() const { return collect([](const Param &p) { return p.value; }); }
    Eigen::VectorXd lower_bounds() const { return collect([](const Param &p) { return p.lower; }); }
    Eigen::VectorXd upper_bounds() const { return collect([](const Param &p) { return p.upper; }); }

    // Layout with the free slots replaced by x.
    ParameterLayout apply(const Eigen::VectorXd &x) const
    {
        ParameterLayout out = problem_.layout;
        Eigen::Index k = 0;
        for_each_param(out, [&](const std::string &, Param &p) {
            if (!p.frozen)
                p.value = x[k++];
        });
        return out;
    }

    // Model transition frequency of every compiled marker.
    Eigen::VectorXd model_frequencies(const ParameterLayout &layout) const
    {
        const CircuitParams circuit = resolve_circuit(layout);
        validate(circuit);
        std::vector<ResolvedSpectrum> spectra;
        for (std::size_t d = 0; d < layout.spectra.size(); ++d)
            spectra.push_back(resolve_spectrum(layout, d));
        std::vector<PointSpectrum> solved(points_.size());
        parallel_for(points_.size(), threads_, [&](std::size_t i) {
            const auto &pt = points_[i];
            const auto &sp = spectra[pt.dataset];
            SpectrumOptions opt;
            opt.model = problem_.model;
            opt.basis = problem_.basis;
            opt.quadrature = problem_.quadrature;
            opt.levels = problem_.model == ModelKind::Uncoupled ? levels_[pt.dataset] : problem_.basis.dimension();
            solved[i] = compute_point(sp.junction, circuit, sp.flux_period_scale * pt.x + sp.phi_offset, opt);
        });
        Eigen::VectorXd f(static_cast<Eigen::Index>(markers_.size()));
        for (std::size_t k = 0; k < markers_.size(); ++k)
        {
            const auto &m = markers_[k];
            const auto &ps = solved[m.point];
            const auto ei = ps.energy_of(m.transition.initial);
            const auto ef = ps.energy_of(m.transition.final);
            if (!ei || !ef)
                throw LabelingError("transition " + m.name + " is missing from the model spectrum at x = " +
                                    std::to_string(m.x) + " (dataset " + std::to_string(m.dataset) + ")");
            f[static_cast<Eigen::Index>(k)] = std::abs(*ef - *ei);
        }
        return f;
    }

    Eigen::VectorXd residuals(const ParameterLayout &layout) const
    {
        const Eigen::VectorXd model = model_frequencies(layout);
        Eigen::VectorXd r(model.size());
        for (std::size_t k = 0; k < markers_.size(); ++k)
        {
            const auto &m = markers_[k];
            const auto i = static_cast<Eigen::Index>(k);
            r[i] = m.weight == 0.0 ? 0.0 : m.weight * (m.f - model[i]);
        }
        return r;
    }

    Eigen::VectorXd operator()(const Eigen::VectorXd &x) const { return residuals(apply(x)); }

private:
    std::vector<std::pair<std::string, Param>> named_slots() const
    {
        std::vector<std::pair<std::string, Param>> out;
        for_each_param(problem_.layout, [&](const std::string &n, const Param &p) { out.emplace_back(n, p); });
        return out;
    }

    template <class Get>
    Eigen::VectorXd collect(Get get) const
    {
        Eigen::VectorXd v(static_cast<Eigen::Index>(free_names_.size()));
        Eigen::Index k = 0;
        for_each_param(problem_.layout, [&](const std::string &, const Param &p) {
            if (!p.frozen)
                v[k++] = get(p);
        });
        return v;
    }

    FitProblem problem_;
    unsigned threads_;
    std::vector<int> levels_;
    std::vector<EvalPoint> points_;
    std::vector<CompiledMarker> markers_;
    std::vector<std::string> free_names_;
};

// Residual vector for an explicit free-parameter vector, in compiled marker order
// (datasets in order, labeled markers in order).
inline Eigen::VectorXd residuals(const FitProblem &problem, const Eigen::VectorXd &free_parameters)
{
    return ResidualModel(problem)(free_parameters);
}

struct FitOptions
{
    LeastSquaresOptions optimizer{};
    int multistart = 0;          // extra starts, seeds perturbed by +/-20 %
    std::uint64_t seed = 0;
    double rank_tol = 1e-3;      // singular-value ratio flagging an unidentifiable direction
    double pair_correlation = 0.995; // |cos| between Jacobian columns flagging a degenerate pair
    unsigned threads = 1;
};

struct MarkerResidual
{
    std::size_t dataset = 0;
    std::size_t index = 0;
    std::string label;
    double x = 0.0;
    double f_GHz = 0.0;
    double model_GHz = 0.0;
    double residual_GHz = 0.0; // weighted
};

struct FitResult
{
    ParameterLayout layout; // best-fit values, spectra in input order
    ModelKind model = ModelKind::Uncoupled;
    double rms_residual_GHz = 0.0;
    double objective = 0.0;
    std::vector<MarkerResidual> residuals;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::string status;
    std::vector<IterationRecord> log;
    std::vector<std::string> free_parameters;
    std::vector<std::string> warnings;

    double E_J(std::size_t spectrum) const { return layout.spectra.at(spectrum).junction.E_J.value; }
    double phi_offset(std::size_t spectrum) const { return layout.spectra.at(spectrum).phi_offset.value; }
};

namespace detail
{
inline bool marker_less(const Marker &a, const Marker &b)
{
    return std::tie(a.x, a.f_GHz, a.label, a.height) < std::tie(b.x, b.f_GHz, b.label, b.height);
}

// Dataset order and marker order are canonicalized so the fit is independent of input ordering.
struct Canonical
{
    FitProblem problem;
    std::vector<std::size_t> dataset_order;             // canonical position -> input dataset
    std::vector<std::vector<std::size_t>> marker_order; // [canonical dataset][canonical marker] -> input marker
};

inline Canonical canonicalize(const FitProblem &in)
{
    Canonical c;
    const std::size_t nd = in.datasets.size();
    c.marker_order.resize(nd);
    std::vector<PeakSet> sorted_markers(nd);
    std::vector<std::vector<std::size_t>> orders(nd);
    for (std::size_t d = 0; d < nd; ++d)
    {
        auto &order = orders[d];
        order.resize(in.datasets[d].markers.size());
        std::iota(order.begin(), order.end(), 0);
        const auto &mk = in.datasets[d].markers;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return marker_less(mk[a], mk[b]); });
        for (auto i : order)
            sorted_markers[d].push_back(mk[i]);
    }
    c.dataset_order.resize(nd);
    std::iota(c.dataset_order.begin(), c.dataset_order.end(), 0);
    std::stable_sort(c.dataset_order.begin(), c.dataset_order.end(), [&](std::size_t a, std::size_t b) {
        const auto &da = in.datasets[a].conditions;
        const auto &db = in.datasets[b].conditions;
        if (da.V_j != db.V_j || da.B_z != db.B_z)
            return std::tie(da.V_j, da.B_z) < std::tie(db.V_j, db.B_z);
        return std::lexicographical_compare(sorted_markers[a].begin(), sorted_markers[a].end(),
                                            sorted_markers[b].begin(), sorted_markers[b].end(), marker_less);
    });
    c.problem = in;
    c.problem.datasets.clear();
    c.problem.layout.spectra.clear();
    for (std::size_t k = 0; k < nd; ++k)
    {
        const auto d = c.dataset_order[k];
        FitDataset ds = in.datasets[d];
        ds.markers = sorted_markers[d];
        if (!ds.weights.empty())
        {
            std::vector<double> w;
            for (auto i : orders[d])
                w.push_back(in.datasets[d].weights.at(i));
            ds.weights = std::move(w);
        }
        c.problem.datasets.push_back(std::move(ds));
        c.problem.layout.spectra.push_back(in.layout.spectra.at(d));
        c.marker_order[k] = orders[d];
    }
    return c;
}
} // namespace detail

inline std::size_t labeled_marker_count(const FitProblem &problem)
{
    std::size_t n = 0;
    for (const auto &d : problem.datasets)
        for (const auto &m : d.markers)
            n += m.label != kUnassigned;
    return n;
}

// Simultaneous bounded least-squares fit of every dataset.
inline FitResult fit(const FitProblem &problem, const FitOptions &opt = {})
{
    validate(problem.layout);
    if (problem.datasets.size() != problem.layout.spectra.size())
        throw ConfigError("fit problem has " + std::to_string(problem.datasets.size()) + " datasets but " +
                          std::to_string(problem.layout.spectra.size()) + " spectrum layouts");
    const auto canonical = detail::canonicalize(problem);
    const ResidualModel model(canonical.problem, opt.threads);
    const std::size_t n_free = model.free_count();
    if (model.markers().size() < n_free + 3)
        throw ConfigError("fit needs at least free parameters + 3 = " + std::to_string(n_free + 3) +
                          " labeled markers, got " + std::to_string(model.markers().size()));

    const Eigen::VectorXd lower = model.lower_bounds();
    const Eigen::VectorXd upper = model.upper_bounds();
    std::vector<Eigen::VectorXd> starts{model.initial_vector()};
    if (opt.multistart > 0)
    {
        std::mt19937_64 rng(opt.seed);
        std::uniform_real_distribution<double> jitter(-0.2, 0.2);
        for (int s = 0; s < opt.multistart; ++s)
        {
            Eigen::VectorXd x = starts.front();
            for (Eigen::Index j = 0; j < x.size(); ++j)
            {
                const double magnitude = x[j] != 0.0 ? std::abs(x[j]) : 0.2 * std::min(upper[j] - lower[j], 1.0);
                x[j] = std::clamp(x[j] + jitter(rng) * magnitude, lower[j], upper[j]);
            }
            starts.push_back(x);
        }
    }

    LeastSquaresOptions lso = opt.optimizer;
    lso.threads = 1; // residual evaluation already fans out across points
    LeastSquaresResult best;
    bool have_best = false;
    for (const auto &x0 : starts)
    {
        auto run = minimize_least_squares(model, x0, lower, upper, lso);
        if (!have_best || run.objective < best.objective)
        {
            best = std::move(run);
            have_best = true;
        }
    }

    FitResult out;
    out.model = problem.model;
    const ParameterLayout fitted = model.apply(best.x);
    out.layout = problem.layout;
    out.layout.shared = fitted.shared;
    out.layout.shared_delta = fitted.shared_delta;
    for (std::size_t k = 0; k < canonical.dataset_order.size(); ++k)
        out.layout.spectra[canonical.dataset_order[k]] = fitted.spectra[k];
    for (std::size_t d = 0; d < out.layout.spectra.size(); ++d)
        out.layout.spectra[d].conditions = problem.datasets[d].conditions;

    out.objective = best.objective;
    const auto &compiled = model.markers();
    const Eigen::VectorXd model_f = model.model_frequencies(fitted);
    for (std::size_t k = 0; k < compiled.size(); ++k)
    {
        const auto &m = compiled[k];
        MarkerResidual r;
        r.dataset = canonical.dataset_order[m.dataset];
        r.index = canonical.marker_order[m.dataset][m.index];
        r.label = m.name;
        r.x = m.x;
        r.f_GHz = m.f;
        r.model_GHz = model_f[static_cast<Eigen::Index>(k)];
        r.residual_GHz = best.residuals[static_cast<Eigen::Index>(k)];
        out.residuals.push_back(r);
    }
    std::stable_sort(out.residuals.begin(), out.residuals.end(), [](const MarkerResidual &a, const MarkerResidual &b) {
        return std::tie(a.dataset, a.index) < std::tie(b.dataset, b.index);
    });
    out.rms_residual_GHz = compiled.empty() ? 0.0 : std::sqrt(best.objective / static_cast<double>(compiled.size()));
    out.iterations = best.iterations;
    out.evaluations = best.evaluations;
    out.converged = best.converged;
    out.status = best.status;
    out.log = best.log;

    // Free names in input order.
    out.free_parameters = free_parameter_names(problem.layout);
    const auto &names = model.free_names(); // canonical order
    auto display = [&](Eigen::Index j) {
        // Map canonical spectrum index in the name back to the input index.
        std::string n = names[static_cast<std::size_t>(j)];
        const std::string key = "spectrum[";
        if (n.rfind(key, 0) == 0)
        {
            const auto close = n.find(']');
            const auto k = std::stoul(n.substr(key.size(), close - key.size()));
            n = key + std::to_string(canonical.dataset_order[k]) + n.substr(close);
        }
        return n;
    };
    const auto diag = diagnose_rank(best.jacobian, opt.rank_tol);
    for (const auto &dir : diag.weak_directions)
    {
        std::string w = "rank-deficient Jacobian: unidentifiable direction involving";
        for (auto j : dir)
            w += " " + display(j);
        out.warnings.push_back(w);
    }
    const Eigen::Index n = best.jacobian.cols();
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = a + 1; b < n; ++b)
        {
            const double na = best.jacobian.col(a).norm();
            const double nb = best.jacobian.col(b).norm();
            if (na == 0.0 || nb == 0.0)
                continue;
            const double c = best.jacobian.col(a).dot(best.jacobian.col(b)) / (na * nb);
            if (std::abs(c) > opt.pair_correlation)
                out.warnings.push_back("near-degenerate parameters " + display(a) + " and " + display(b) +
                                       " (|correlation| = " + std::to_string(std::abs(c)) + ")");
        }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Seeding

struct InitialGuessConfig
{
    bool channels = false;
    int n_channels = 1;
    double Delta = 26.0;     // design gap, GHz
    bool share_delta = false;
    double L_r = 47.0;       // design values, nH
    double L_s = 8.5;
    double C_r = 26.0;       // fF
    bool fit_offsets = true;
    int grid_basis = 30;
    int max_grid_points = 9; // x samples per dataset used by the grid search
};

namespace detail
{
struct SeedData
{
    std::vector<double> x;                        // sampled unique x
    std::vector<std::vector<TransitionSpec>> t;   // transitions at each x
    std::vector<std::vector<double>> f;           // marker frequencies at each x
};

inline std::vector<double> geometric(double lo, double hi, int n)
{
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
    return v;
}

// Lowest labeled transition without photons, averaged per x: (x, f) ascending in x.
inline std::pair<std::vector<double>, std::vector<double>> lowest_transition(const FitDataset &ds)
{
    std::map<std::string, std::map<double, std::pair<double, int>>> by_label;
    for (const auto &m : ds.markers)
    {
        if (m.label == kUnassigned)
            continue;
        const auto t = parse_transition(m.label);
        if (t.initial.n != 0 || t.final.n != 0)
            continue;
        auto &b = by_label[m.label][m.x];
        b.first += m.f_GHz;
        b.second += 1;
    }
    std::pair<std::vector<double>, std::vector<double>> best;
    double best_mean = std::numeric_limits<double>::infinity();
    for (const auto &[label, bins] : by_label)
    {
        if (bins.size() < 3)
            continue;
        std::vector<double> xs, fs;
        for (const auto &[x, b] : bins)
        {
            xs.push_back(x);
            fs.push_back(b.first / b.second);
        }
        const double mean = std::accumulate(fs.begin(), fs.end(), 0.0) / static_cast<double>(fs.size());
        if (mean < best_mean)
        {
            best_mean = mean;
            best = {std::move(xs), std::move(fs)};
        }
    }
    return best;
}

// Mirror point c of the curve (f(c + d) = f(c - d)), using 2 pi periodicity to fold reflected samples
// back into the sampled range. Returns NaN when the data cannot locate one.
inline double symmetry_point(const std::vector<double> &xs, const std::vector<double> &fs)
{
    const std::size_t n = xs.size();
    if (n < 3)
        return std::numeric_limits<double>::quiet_NaN();
    const auto [mn, mx] = std::minmax_element(fs.begin(), fs.end());
    const double depth = *mx - *mn;
    if (depth <= 0.0)
        return std::numeric_limits<double>::quiet_NaN();
    auto interp = [&](double x) {
        const auto it = std::upper_bound(xs.begin(), xs.end(), x);
        const auto i = std::clamp<std::size_t>(static_cast<std::size_t>(it - xs.begin()), 1, n - 1);
        const double t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
        return fs[i - 1] + t * (fs[i] - fs[i - 1]);
    };
    const std::size_t min_overlap = std::max<std::size_t>(3, n / 3);
    auto mismatch = [&](double c) {
        double acc = 0.0;
        std::size_t used = 0;
        for (std::size_t i = 0; i < n; ++i)
        {
            double xr = 2.0 * c - xs[i];
            xr -= kTwoPi * std::ceil((xr - xs.back()) / kTwoPi);
            if (xr < xs.front())
                continue;
            const double d = fs[i] - interp(xr);
            acc += d * d;
            ++used;
        }
        return used >= min_overlap ? acc / static_cast<double>(used) : std::numeric_limits<double>::infinity();
    };
    constexpr int steps = 720;
    std::vector<double> cost(steps);
    for (int k = 0; k < steps; ++k)
        cost[static_cast<std::size_t>(k)] = mismatch(-kPi + kTwoPi * k / steps);
    const auto best = static_cast<int>(std::min_element(cost.begin(), cost.end()) - cost.begin());
    if (!std::isfinite(cost[static_cast<std::size_t>(best)]))
        return std::numeric_limits<double>::quiet_NaN();
    const double h = kTwoPi / steps;
    const double c0 = -kPi + h * best;
    const double cm = cost[static_cast<std::size_t>((best + steps - 1) % steps)];
    const double cp = cost[static_cast<std::size_t>((best + 1) % steps)];
    const double denom = cm - 2.0 * cost[static_cast<std::size_t>(best)] + cp;
    if (!std::isfinite(denom) || denom <= 0.0)
        return c0;
    return c0 + h * std::clamp(0.5 * (cm - cp) / denom, -0.5, 0.5);
}

inline SeedData seed_data(const FitDataset &ds, int max_points)
{
    std::map<double, std::vector<const Marker *>> by_x;
    for (const auto &m : ds.markers)
    {
        if (m.label == kUnassigned)
            continue;
        const auto t = parse_transition(m.label);
        if (t.initial.n == 0 && t.final.n == 0)
            by_x[m.x].push_back(&m);
    }
    std::vector<double> xs;
    for (const auto &kv : by_x)
        xs.push_back(kv.first);
    SeedData out;
    const std::size_t n = xs.size();
    const std::size_t take = std::min<std::size_t>(n, static_cast<std::size_t>(max_points));
    for (std::size_t k = 0; k < take; ++k)
    {
        const std::size_t i = take == 1 ? 0 : k * (n - 1) / (take - 1);
        out.x.push_back(xs[i]);
        std::vector<TransitionSpec> ts;
        std::vector<double> fs;
        for (auto *m : by_x[xs[i]])
        {
            ts.push_back(parse_transition(m->label));
            fs.push_back(m->f_GHz);
        }
        out.t.push_back(std::move(ts));
        out.f.push_back(std::move(fs));
    }
    return out;
}

inline double seed_cost(const SeedData &sd, const CircuitParams &c, double E_J, double offset, int basis)
{
    SpectrumOptions opt;
    opt.basis.n_fluxonium = basis;
    opt.basis.n_resonator = 1;
    opt.quadrature.verify = false;
    int top = 0;
    for (const auto &ts : sd.t)
        for (const auto &t : ts)
            top = std::max({top, t.initial.m, t.final.m});
    opt.levels = top + 1;
    const auto junction = JunctionModel::sinusoidal(E_J);
    double cost = 0.0;
    for (std::size_t i = 0; i < sd.x.size(); ++i)
    {
        const auto ps = compute_point(junction, c, sd.x[i] + offset, opt);
        for (std::size_t k = 0; k < sd.t[i].size(); ++k)
        {
            const double f = std::abs(*ps.energy_of(sd.t[i][k].final) - *ps.energy_of(sd.t[i][k].initial));
            cost += (f - sd.f[i][k]) * (f - sd.f[i][k]);
        }
    }
    return cost;
}
} // namespace detail

// Heuristic seeds: per-spectrum flux offset from the mirror point of the lowest transition,
// then a coarse grid over (E_C, E_L) with a per-spectrum E_J grid on the uncoupled model.
// Channel junctions are seeded from the equivalent tunneling-limit E_J.
inline ParameterLayout initial_guess(const std::vector<FitDataset> &datasets, const InitialGuessConfig &cfg = {})
{
    if (datasets.empty())
        throw ConfigError("initial_guess: no datasets");
    std::vector<detail::SeedData> seeds;
    std::vector<std::vector<double>> candidates; // offset candidates per dataset
    bool enough = false;
    for (const auto &ds : datasets)
    {
        seeds.push_back(detail::seed_data(ds, cfg.max_grid_points));
        std::vector<double> cand{0.0};
        if (cfg.fit_offsets)
        {
            const auto [xs, fs] = detail::lowest_transition(ds);
            const double c = detail::symmetry_point(xs, fs);
            // The mirror point is either phi = 0 or phi = pi; the grid decides which.
            if (std::isfinite(c))
                cand = {wrap_phase(-c), wrap_phase(kPi - c)};
        }
        candidates.push_back(cand);
        std::size_t labeled = 0;
        for (const auto &m : ds.markers)
            labeled += m.label != kUnassigned;
        enough = enough || labeled >= 5;
    }
    if (!enough)
        throw ConfigError("initial_guess: need a dataset with at least 5 labeled markers");

    const auto ec_grid = detail::geometric(0.5, 8.0, 9);
    const auto el_grid = detail::geometric(0.1, 4.0, 9);
    std::vector<double> ej_grid{0.0};
    for (double v : detail::geometric(0.05, 25.0, 16))
        ej_grid.push_back(v);

    struct GridPoint
    {
        double total = std::numeric_limits<double>::infinity();
        double ec = 0.0, el = 0.0;
        std::vector<double> ej, off;
    };
    auto evaluate = [&](double ec, double el, double bound) {
        GridPoint g;
        g.ec = ec;
        g.el = el;
        g.ej.assign(datasets.size(), 0.0);
        g.off.assign(datasets.size(), 0.0);
        const CircuitParams c{ec, el, cfg.C_r, cfg.L_r, cfg.L_s};
        double total = 0.0;
        for (std::size_t d = 0; d < datasets.size() && total < bound; ++d)
        {
            if (seeds[d].x.empty())
                continue;
            double best = std::numeric_limits<double>::infinity();
            for (double off : candidates[d])
                for (double ej : ej_grid)
                {
                    const double cost = detail::seed_cost(seeds[d], c, ej, off, cfg.grid_basis);
                    if (cost < best)
                    {
                        best = cost;
                        g.ej[d] = ej;
                        g.off[d] = off;
                    }
                }
            total += best;
        }
        g.total = total;
        return g;
    };

    GridPoint best;
    for (double ec : ec_grid)
        for (double el : el_grid)
        {
            auto g = evaluate(ec, el, best.total);
            if (g.total < best.total)
                best = std::move(g);
        }
    // Zoom in log space around the best point; small E_J only shows once E_C and E_L are close.
    double r_ec = std::pow(8.0 / 0.5, 1.0 / 8.0), r_el = std::pow(4.0 / 0.1, 1.0 / 8.0);
    for (int round = 0; round < 5; ++round)
    {
        r_ec = std::sqrt(r_ec);
        r_el = std::sqrt(r_el);
        const GridPoint centre = best;
        for (int i = -1; i <= 1; ++i)
            for (int j = -1; j <= 1; ++j)
            {
                if (i == 0 && j == 0)
                    continue;
                auto g = evaluate(centre.ec * std::pow(r_ec, i), centre.el * std::pow(r_el, j), best.total);
                if (g.total < best.total)
                    best = std::move(g);
            }
    }
    const double best_ec = best.ec, best_el = best.el;
    const auto &best_ej = best.ej;
    const auto &best_off = best.off;

    ParameterLayout layout;
    layout.shared.E_C = Param::free(best_ec, 0.1, 20.0);
    layout.shared.E_L = Param::free(best_el, 0.02, 10.0);
    layout.shared.L_r = Param::free(cfg.L_r, 1.0, 500.0);
    layout.shared.L_s = Param::free(cfg.L_s, 0.0, 100.0);
    layout.shared.C_r = cfg.C_r;
    if (cfg.channels && cfg.share_delta)
        layout.shared_delta = Param::free(cfg.Delta, 1.0, 200.0);
    for (std::size_t d = 0; d < datasets.size(); ++d)
    {
        SpectrumParameters sp;
        if (!cfg.channels)
            sp.junction = JunctionParameters::sinusoidal(Param::free(best_ej[d], 0.0, 50.0));
        else
        {
            const double t = std::clamp(4.0 * best_ej[d] / (cfg.Delta * cfg.n_channels), 0.01, 0.99);
            sp.junction = JunctionParameters::channel_model(
                Param::free(cfg.Delta, 1.0, 200.0),
                std::vector<Param>(static_cast<std::size_t>(cfg.n_channels), Param::free(t, 1e-4, 1.0)));
        }
        sp.phi_offset =
            cfg.fit_offsets ? Param::free(best_off[d], best_off[d] - kPi, best_off[d] + kPi) : Param::fixed(0.0);
        sp.flux_period_scale = Param::fixed(1.0);
        sp.conditions = datasets[d].conditions;
        layout.spectra.push_back(sp);
    }
    return layout;
}

// ---------------------------------------------------------------------------------------------
// phi0 extraction

struct OffsetSample
{
    double V_j = 0.0;
    double B_z = 0.0;
    double phi_offset = 0.0; // fitted, unwrapped
    bool converged = true;
};

struct Phi0Sample
{
    double V_j = 0.0;
    double B_z = 0.0;
    double phi0 = 0.0;           // wrapped to (-pi, pi]
    double phi0_unwrapped = 0.0; // continuous across the V_j sweep, zero at the reference
};

// phi0(V_j) = phi_offset(V_j) - phi_offset(reference) for one sweep at fixed B_z, sorted by V_j.
inline std::vector<Phi0Sample> extract_phi0(std::vector<OffsetSample> sweep, double reference_V_j,
                                            double vj_tol = 1e-9)
{
    std::stable_sort(sweep.begin(), sweep.end(), [](const OffsetSample &a, const OffsetSample &b) { return a.V_j < b.V_j; });
    std::size_t ref = sweep.size();
    for (std::size_t i = 0; i < sweep.size(); ++i)
    {
        if (!sweep[i].converged)
            throw InvalidParameter("fit at V_j = " + std::to_string(sweep[i].V_j) + " did not converge");
        if (std::abs(sweep[i].V_j - reference_V_j) <= vj_tol && ref == sweep.size())
            ref = i;
    }
    if (ref == sweep.size())
        throw InvalidParameter("reference V_j = " + std::to_string(reference_V_j) + " is not in the sweep");
    std::vector<Phi0Sample> out(sweep.size());
    for (std::size_t i = 0; i < sweep.size(); ++i)
    {
        out[i].V_j = sweep[i].V_j;
        out[i].B_z = sweep[i].B_z;
        out[i].phi0 = i == ref ? 0.0 : wrap_phase(sweep[i].phi_offset - sweep[ref].phi_offset);
    }
    // Continuity unwrapping outward from the reference.
    out[ref].phi0_unwrapped = 0.0;
    for (std::size_t i = ref + 1; i < out.size(); ++i)
        out[i].phi0_unwrapped = out[i - 1].phi0_unwrapped + wrap_phase(out[i].phi0 - out[i - 1].phi0);
    for (std::size_t i = ref; i-- > 0;)
        out[i].phi0_unwrapped = out[i + 1].phi0_unwrapped + wrap_phase(out[i].phi0 - out[i + 1].phi0);
    return out;
}

} // namespace fluxfit

#endif // FLUXFIT_FITTER_HPP
