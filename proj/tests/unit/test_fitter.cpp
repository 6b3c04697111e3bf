#include "catch_amalgamated.hpp"

#include <random>

#include "synthetic.hpp"

using namespace fluxfit;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using synthetic::linspace;

namespace
{
const std::vector<std::string> kLines{"g0->e0", "g0->f0", "e0->f0"};
const BasisSpec kBasis{40, 1};

FitDataset markers_for(double E_J, double offset, const std::vector<double> &x, double noise = 0.0,
                       std::uint64_t seed = 1, const std::vector<std::string> &lines = kLines)
{
    std::mt19937_64 rng(seed);
    return synthetic::noisy_markers(synthetic::device_a_table(E_J, x, lines, ModelKind::Uncoupled, kBasis, offset),
                                    noise, rng);
}

// Layout at the device-A truth with L_r, L_s frozen (the uncoupled model does not see them).
ParameterLayout truth_layout(const std::vector<double> &ejs, const std::vector<double> &offsets)
{
    ParameterLayout l;
    l.shared.L_r = Param::fixed(47.0);
    l.shared.L_s = Param::fixed(8.5);
    for (std::size_t i = 0; i < ejs.size(); ++i)
    {
        SpectrumParameters s;
        s.junction = JunctionParameters::sinusoidal(Param::free(ejs[i], 0.0, 50.0));
        s.phi_offset = Param::free(offsets[i], offsets[i] - kPi, offsets[i] + kPi);
        l.spectra.push_back(s);
    }
    return l;
}

FitProblem problem_for(std::vector<FitDataset> data, ParameterLayout layout)
{
    FitProblem p;
    p.datasets = std::move(data);
    p.layout = std::move(layout);
    p.basis = kBasis;
    return p;
}

void scale_free(ParameterLayout &l, double factor)
{
    for_each_param(l, [&](const std::string &, Param &p) {
        if (!p.frozen)
            p.value = std::clamp(p.value * factor + (p.value == 0.0 ? 0.05 : 0.0), p.lower, p.upper);
    });
}
} // namespace

TEST_CASE("phase wrapping", "[fitter]")
{
    CHECK_THAT(wrap_phase(-1.2 * kPi), WithinAbs(0.8 * kPi, 1e-12));
    CHECK(wrap_phase(kPi) == kPi);
    CHECK(wrap_phase(-kPi) == kPi);
    CHECK(wrap_phase(0.0) == 0.0);
    CHECK_THAT(wrap_phase(7.0 * kPi + 0.1), WithinAbs(-kPi + 0.1, 1e-12));
}

TEST_CASE("residual examples", "[fitter][residuals]")
{
    const auto x = linspace(-kPi, kPi, 11);
    auto p = problem_for({markers_for(3.8, 0.2, x)}, truth_layout({3.8}, {0.2}));
    const ResidualModel model(p);
    const Eigen::VectorXd truth = model.initial_vector();
    REQUIRE(model.free_names() == std::vector<std::string>{"E_C", "E_L", "spectrum[0].E_J", "spectrum[0].phi_offset"});
    const Eigen::VectorXd r = model(truth);
    CHECK(r.size() == 33);
    CHECK(r.cwiseAbs().maxCoeff() < 1e-6);
    CHECK(residuals(p, truth) == r);

    Eigen::VectorXd bumped = truth;
    bumped[2] += 0.1;
    CHECK(model(bumped).norm() > r.norm());
    // residual = f_marker - f_model
    const Eigen::VectorXd rb = model(bumped);
    const auto f_bumped = model.model_frequencies(model.apply(bumped));
    CHECK_THAT(rb[0], WithinAbs(p.datasets[0].markers[0].f_GHz - f_bumped[0], 1e-15));

    p.datasets[0].weights.assign(p.datasets[0].markers.size(), 2.0);
    p.datasets[0].weights[4] = 0.0;
    const Eigen::VectorXd rw = ResidualModel(p)(bumped);
    CHECK(rw[4] == 0.0);
    CHECK_THAT(rw[5], WithinAbs(2.0 * rb[5], 1e-14));
}

TEST_CASE("unassigned markers are ignored", "[fitter][residuals]")
{
    const auto x = linspace(-kPi, kPi, 11);
    auto data = markers_for(3.8, 0.0, x);
    data.markers.push_back({0.3, 11.0, Polarity::Max, 1.0, kUnassigned});
    const ResidualModel model(problem_for({data}, truth_layout({3.8}, {0.0})));
    CHECK(model.markers().size() == 33);
}

TEST_CASE("residual configuration errors", "[fitter][residuals]")
{
    const auto x = linspace(-kPi, kPi, 11);
    const auto layout = truth_layout({3.8}, {0.0});
    auto bad_weights = problem_for({markers_for(3.8, 0.0, x)}, layout);
    bad_weights.datasets[0].weights = {1.0, 2.0};
    CHECK_THROWS_AS(ResidualModel(bad_weights), ConfigError);
    bad_weights.datasets[0].weights.assign(33, 1.0);
    bad_weights.datasets[0].weights[0] = -1.0;
    CHECK_THROWS_AS(ResidualModel(bad_weights), ConfigError);

    auto photon = problem_for({markers_for(3.8, 0.0, x)}, layout);
    photon.datasets[0].markers[0].label = "g0->g1";
    CHECK_THROWS_AS(ResidualModel(photon), ConfigError);

    auto high = problem_for({markers_for(3.8, 0.0, x)}, layout);
    high.datasets[0].markers[0].label = "g0->[45]0";
    CHECK_THROWS_AS(ResidualModel(high), ConfigError);

    // Coupled model: a photon number beyond the resonator basis is only detected on evaluation.
    auto coupled = problem_for({markers_for(3.8, 0.0, x)}, layout);
    coupled.model = ModelKind::Coupled;
    coupled.basis = BasisSpec{20, 3};
    coupled.datasets[0].markers[0].label = "g0->g5";
    const ResidualModel m(coupled);
    try
    {
        m(m.initial_vector());
        FAIL("expected a labeling error");
    }
    catch (const ConfigError &e)
    {
        CHECK_THAT(e.what(), ContainsSubstring("g0->g5"));
    }

    auto mismatch = problem_for({markers_for(3.8, 0.0, x)}, truth_layout({3.8, 1.0}, {0.0, 0.0}));
    CHECK_THROWS_AS(ResidualModel(mismatch), ConfigError);
    CHECK_THROWS_AS(fit(mismatch), ConfigError);
}

TEST_CASE("one free E_J on exact markers", "[fitter]")
{
    const auto x = linspace(-kPi, kPi, 11);
    auto layout = truth_layout({3.8}, {0.0});
    layout.shared.E_C = Param::fixed(2.35);
    layout.shared.E_L = Param::fixed(0.7);
    layout.spectra[0].phi_offset = Param::fixed(0.0);
    layout.spectra[0].junction.E_J = Param::free(2.0, 0.0, 50.0);
    FitOptions opt;
    opt.optimizer.x_tol = 1e-10;
    const auto r = fit(problem_for({markers_for(3.8, 0.0, x)}, layout), opt);
    CHECK(r.converged);
    CHECK_THAT(r.E_J(0), WithinAbs(3.8, 1e-7));
    CHECK(r.rms_residual_GHz < 1e-6);
    CHECK(r.free_parameters == std::vector<std::string>{"spectrum[0].E_J"});
}

TEST_CASE("self-consistency and frozen-parameter identity", "[fitter][property]")
{
    const auto x = linspace(-kPi, kPi, 15);
    auto layout = truth_layout({3.8, 9.6}, {0.0, -0.5});
    layout.shared.E_L = Param::fixed(0.7); // truth, stored as the same double
    const double odd_Cr = 26.000000000000004;
    layout.shared.C_r = odd_Cr;
    auto start = layout;
    scale_free(start, 1.04);
    const auto p = problem_for({markers_for(3.8, 0.0, x), markers_for(9.6, -0.5, x)}, start);
    const auto r = fit(p);
    CHECK(r.converged);
    CHECK(r.rms_residual_GHz < 1e-6);
    CHECK_THAT(r.layout.shared.E_C.value, WithinRel(2.35, 1e-6));
    CHECK_THAT(r.E_J(0), WithinRel(3.8, 1e-6));
    CHECK_THAT(r.E_J(1), WithinRel(9.6, 1e-6));
    CHECK_THAT(r.phi_offset(1), WithinAbs(-0.5, 1e-6));
    CHECK(r.layout.shared.E_L.value == 0.7);
    CHECK(r.layout.shared.L_r.value == 47.0);
    CHECK(r.layout.shared.L_s.value == 8.5);
    CHECK(r.layout.shared.C_r == odd_Cr);
    CHECK(r.layout.spectra[0].flux_period_scale.value == 1.0);

    // Accepted objective never increases.
    double prev = std::numeric_limits<double>::infinity();
    for (const auto &rec : r.log)
    {
        CHECK(rec.objective <= prev);
        prev = rec.objective;
    }
    // Residual bookkeeping in input order.
    REQUIRE(r.residuals.size() == 90);
    CHECK(r.residuals[0].dataset == 0);
    CHECK(r.residuals[45].dataset == 1);
    CHECK(r.residuals[45].index == 0);
    CHECK(r.residuals[45].label == p.datasets[1].markers[0].label);
}

TEST_CASE("fit is invariant to dataset and marker order", "[fitter][property]")
{
    const auto x = linspace(-kPi, kPi, 13);
    auto a = markers_for(3.8, 0.1, x, 0.01, 5);
    auto b = markers_for(0.2, -0.3, x, 0.01, 6);
    auto layout = truth_layout({3.8, 0.2}, {0.1, -0.3});
    scale_free(layout, 1.03);
    const auto forward = fit(problem_for({a, b}, layout));

    std::mt19937_64 rng(8);
    std::shuffle(a.markers.begin(), a.markers.end(), rng);
    std::shuffle(b.markers.begin(), b.markers.end(), rng);
    ParameterLayout swapped = layout;
    std::swap(swapped.spectra[0], swapped.spectra[1]);
    const auto reversed = fit(problem_for({b, a}, swapped));

    CHECK_THAT(reversed.layout.shared.E_C.value, WithinAbs(forward.layout.shared.E_C.value, 1e-9));
    CHECK_THAT(reversed.layout.shared.E_L.value, WithinAbs(forward.layout.shared.E_L.value, 1e-9));
    CHECK_THAT(reversed.E_J(1), WithinAbs(forward.E_J(0), 1e-9));
    CHECK_THAT(reversed.E_J(0), WithinAbs(forward.E_J(1), 1e-9));
    CHECK_THAT(reversed.phi_offset(1), WithinAbs(forward.phi_offset(0), 1e-9));
    CHECK_THAT(reversed.phi_offset(0), WithinAbs(forward.phi_offset(1), 1e-9));
    CHECK_THAT(reversed.rms_residual_GHz, WithinAbs(forward.rms_residual_GHz, 1e-12));
    // Residuals come back in the caller's order.
    for (const auto &res : reversed.residuals)
    {
        const auto &src = (res.dataset == 0 ? b : a).markers[res.index];
        CHECK(res.f_GHz == src.f_GHz);
        CHECK(res.x == src.x);
    }
}

TEST_CASE("short flux windows flag the offset / E_J degeneracy", "[fitter]")
{
    // Less than half a period of g->e only, away from both symmetry points.
    const auto x = linspace(0.3 * kPi, 0.6 * kPi, 9);
    const auto layout = truth_layout({3.8}, {0.0});
    const auto r = fit(problem_for({markers_for(3.8, 0.0, x, 0.0, 1, {"g0->e0"})}, layout));
    REQUIRE_FALSE(r.warnings.empty());
    bool named = false;
    for (const auto &w : r.warnings)
        named = named || (w.find("spectrum[0].E_J") != std::string::npos &&
                          w.find("spectrum[0].phi_offset") != std::string::npos);
    CHECK(named);

    // The full period identifies both.
    const auto full = fit(problem_for({markers_for(3.8, 0.0, linspace(-kPi, kPi, 15), 0.0, 1, {"g0->e0"})}, layout));
    CHECK(full.warnings.empty());
}

TEST_CASE("fit errors and non-convergence", "[fitter]")
{
    const auto x = linspace(-kPi, kPi, 2);
    const auto few = problem_for({markers_for(3.8, 0.0, x)}, truth_layout({3.8}, {0.0})); // 6 markers, 4 free
    CHECK_THROWS_AS(fit(few), ConfigError);

    auto layout = truth_layout({3.8}, {0.0});
    scale_free(layout, 1.3);
    const auto p = problem_for({markers_for(3.8, 0.0, linspace(-kPi, kPi, 11))}, layout);
    FitOptions opt;
    opt.optimizer.max_iter = 1;
    const auto r = fit(p, opt);
    CHECK_FALSE(r.converged);
    CHECK(r.status == "maximum iterations reached");
    const ResidualModel m(p);
    CHECK(r.objective <= m(m.initial_vector()).squaredNorm());
}

TEST_CASE("threads and multistart are deterministic", "[fitter]")
{
    const auto x = linspace(-kPi, kPi, 11);
    auto layout = truth_layout({3.8}, {0.2});
    scale_free(layout, 1.1);
    const auto p = problem_for({markers_for(3.8, 0.2, x, 0.01, 3)}, layout);
    FitOptions opt;
    const auto serial = fit(p, opt);
    opt.threads = 4;
    const auto threaded = fit(p, opt);
    CHECK(serial.objective == threaded.objective);
    CHECK(serial.E_J(0) == threaded.E_J(0));

    opt.multistart = 2;
    opt.seed = 77;
    const auto m1 = fit(p, opt);
    const auto m2 = fit(p, opt);
    CHECK(m1.objective == m2.objective);
    CHECK(m1.layout.shared.E_C.value == m2.layout.shared.E_C.value);
    CHECK(m1.objective <= serial.objective);
}

TEST_CASE("free gap beats a wrong frozen gap on channel data", "[fitter]")
{
    const auto x = linspace(-kPi, kPi, 13);
    SpectrumOptions o;
    o.basis = kBasis;
    o.levels = 3;
    const auto truth = JunctionModel::channels(26.0, {0.6});
    const auto s = compute_spectrum(truth, device_a_params(), x, o);
    std::mt19937_64 rng(4);
    const auto data = synthetic::noisy_markers(make_transition_table(s, synthetic::parse_transitions(kLines)), 0.0, rng);

    ParameterLayout layout;
    layout.shared.E_C = Param::fixed(2.35);
    layout.shared.E_L = Param::fixed(0.7);
    layout.shared.L_r = Param::fixed(47.0);
    layout.shared.L_s = Param::fixed(8.5);
    SpectrumParameters sp;
    sp.junction = JunctionParameters::channel_model(Param::free(35.0, 1.0, 200.0), {Param::free(0.45, 1e-4, 0.95)});
    sp.phi_offset = Param::fixed(0.0);
    layout.spectra = {sp};
    const auto free_fit = fit(problem_for({data}, layout));
    layout.spectra[0].junction.Delta = Param::fixed(50.0);
    layout.spectra[0].junction.T[0] = Param::free(0.3, 1e-4, 0.95);
    const auto frozen_fit = fit(problem_for({data}, layout));
    CHECK(free_fit.converged);
    CHECK(free_fit.rms_residual_GHz < frozen_fit.rms_residual_GHz);
    CHECK_THAT(free_fit.layout.spectra[0].junction.Delta.value, WithinRel(26.0, 1e-3));
    CHECK(frozen_fit.layout.spectra[0].junction.Delta.value == 50.0);
}

TEST_CASE("initial guess examples", "[fitter][seed]")
{
    const auto x = linspace(-kPi, kPi, 41);
    const auto deep = initial_guess({markers_for(6.7, 0.0, x)});
    CHECK_THAT(deep.shared.E_C.value, WithinRel(2.35, 0.5));
    CHECK_THAT(deep.shared.E_L.value, WithinRel(0.7, 0.5));
    CHECK_THAT(deep.spectra[0].junction.E_J.value, WithinRel(6.7, 0.5));
    CHECK(std::abs(wrap_phase(deep.spectra[0].phi_offset.value)) <= 0.1 * kPi);
    CHECK(deep.shared.L_r.value == 47.0);
    CHECK(deep.shared.L_s.value == 8.5);
    CHECK(deep.shared.C_r == 26.0);
    CHECK_NOTHROW(validate(deep));

    const auto flat = initial_guess({markers_for(0.0, 0.0, x, 0.01, 2)});
    CHECK(flat.spectra[0].junction.E_J.value < 0.2);

    const auto shifted = initial_guess({markers_for(3.8, kPi / 3.0, x)});
    CHECK(std::abs(wrap_phase(shifted.spectra[0].phi_offset.value - kPi / 3.0)) <= 0.1 * kPi);

    InitialGuessConfig no_offsets;
    no_offsets.fit_offsets = false;
    CHECK(initial_guess({markers_for(3.8, 0.0, x)}, no_offsets).spectra[0].phi_offset.frozen);

    InitialGuessConfig channels;
    channels.channels = true;
    channels.n_channels = 2;
    channels.share_delta = true;
    const auto ch = initial_guess({markers_for(3.8, 0.0, x)}, channels);
    REQUIRE(ch.shared_delta.has_value());
    CHECK(ch.shared_delta->value == 26.0);
    REQUIRE(ch.spectra[0].junction.T.size() == 2);
    CHECK(ch.spectra[0].junction.T[0].value > 0.0);
    CHECK(ch.spectra[0].junction.T[0].value < 1.0);

    FitDataset tiny;
    for (int i = 0; i < 4; ++i)
        tiny.markers.push_back({0.1 * i, 4.0, Polarity::Max, 1.0, "g0->e0"});
    CHECK_THROWS_AS(initial_guess({tiny}), ConfigError);
    CHECK_THROWS_AS(initial_guess({}), ConfigError);
}

TEST_CASE("phi0 extraction", "[fitter][phi0]")
{
    const std::vector<OffsetSample> sweep{{0.5, 0.3, 0.0 - 1.2 * kPi, true},
                                          {0.0, 0.3, 0.4, true},
                                          {1.0, 0.3, 0.4 - 0.16 * kPi, true}};
    const auto out = extract_phi0(sweep, 0.0);
    REQUIRE(out.size() == 3);
    CHECK(out[0].V_j == 0.0);
    CHECK(out[0].phi0 == 0.0);
    CHECK(out[0].phi0_unwrapped == 0.0);
    CHECK_THAT(out[1].phi0, WithinAbs(wrap_phase(-1.2 * kPi - 0.4), 1e-12));
    CHECK_THAT(out[2].phi0, WithinAbs(-0.16 * kPi, 1e-12));
    CHECK(out[2].B_z == 0.3);

    // Wrapping of a bare offset difference.
    const auto wrap = extract_phi0({{0.0, 0.0, 0.0, true}, {1.0, 0.0, -1.2 * kPi, true}}, 0.0);
    CHECK_THAT(wrap[1].phi0, WithinAbs(0.8 * kPi, 1e-12));

    // Continuity across the -pi branch cut.
    std::vector<OffsetSample> ramp;
    for (int i = 0; i < 8; ++i)
        ramp.push_back({0.1 * i, 0.0, -0.2 * kPi * i, true});
    const auto unwrapped = extract_phi0(ramp, 0.0);
    for (int i = 0; i < 8; ++i)
    {
        CHECK(unwrapped[static_cast<std::size_t>(i)].phi0 > -kPi);
        CHECK(unwrapped[static_cast<std::size_t>(i)].phi0 <= kPi);
        CHECK_THAT(unwrapped[static_cast<std::size_t>(i)].phi0_unwrapped, WithinAbs(-0.2 * kPi * i, 1e-12));
    }
    // Reference in the middle unwraps in both directions.
    const auto mid = extract_phi0(ramp, 0.4);
    CHECK_THAT(mid[0].phi0_unwrapped, WithinAbs(0.8 * kPi, 1e-12));
    CHECK_THAT(mid[7].phi0_unwrapped, WithinAbs(-0.6 * kPi, 1e-12));

    CHECK_THROWS_AS(extract_phi0(sweep, 0.25), InvalidParameter);
    auto bad = sweep;
    bad[2].converged = false;
    CHECK_THROWS_AS(extract_phi0(bad, 0.0), InvalidParameter);
}
