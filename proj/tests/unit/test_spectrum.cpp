#include "catch_amalgamated.hpp"

#include <random>
#include <set>

#include "fluxfit/spectrum.hpp"

using namespace fluxfit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace
{
SpectrumOptions coupled_options(int nf = 40, int nr = 5)
{
    SpectrumOptions o;
    o.model = ModelKind::Coupled;
    o.basis = {nf, nr};
    o.levels = nf * nr;
    return o;
}

double resonator_frequency(const CircuitParams &p)
{
    const auto r = resonator_energies(p);
    return std::sqrt(8.0 * r.E_Cr * r.E_Lr);
}

double uncoupled_ge(const JunctionModel &j, const CircuitParams &p, double phi)
{
    SpectrumOptions o;
    o.levels = 2;
    const auto s = compute_point(j, p, phi, o);
    return s.eigenvalues[1] - s.eigenvalues[0];
}

// External phase in [0, pi] where the uncoupled g->e transition equals the bare resonator frequency.
double ge_resonator_degeneracy(const JunctionModel &j, const CircuitParams &p)
{
    const double w = resonator_frequency(p);
    double lo = 0.0, hi = kPi; // f_ge(0) > w > f_ge(pi) for the junctions used here
    for (int i = 0; i < 60; ++i)
    {
        const double mid = 0.5 * (lo + hi);
        (uncoupled_ge(j, p, mid) > w ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}
} // namespace

TEST_CASE("state label text", "[labels]")
{
    CHECK(to_string(StateLabel{0, 0}) == "g0");
    CHECK(to_string(StateLabel{3, 2}) == "h2");
    CHECK(to_string(StateLabel{4, 1}) == "[4]1");
    CHECK(parse_state_label("f1") == StateLabel{2, 1});
    CHECK(parse_state_label("[7]0") == StateLabel{7, 0});
    CHECK(to_string(parse_transition("g0->e0")) == "g0->e0");
    CHECK(parse_transition("g1 → f1").final == StateLabel{2, 1});
    CHECK_THROWS_AS(parse_transition("g0e0"), ConfigError);
    CHECK_THROWS_AS(parse_state_label("x0"), ConfigError);
    CHECK_THROWS_AS(parse_state_label("g"), ConfigError);
    CHECK_THROWS_AS(parse_state_label("g-1"), ConfigError);
}

TEST_CASE("decoupled labels are exact product indices", "[labels]")
{
    auto p = device_a_params();
    p.L_s = 0.0;
    const auto j = JunctionModel::sinusoidal(3.8);
    const auto o = coupled_options(40, 4);
    const auto s = compute_point(j, p, 0.9, o);
    SpectrumOptions uo;
    uo.basis = {40, 1};
    uo.levels = 40;
    const auto u = compute_point(j, p, 0.9, uo);
    const double w = resonator_frequency(p);
    for (std::size_t k = 0; k < 30; ++k)
    {
        const auto &l = s.labels[k];
        CHECK(l.overlap > 1.0 - 1e-12);
        CHECK_FALSE(l.mixed);
        const double expect = u.eigenvalues[l.label.m] + w * (l.label.n + 0.5);
        CHECK_THAT(s.eigenvalues[static_cast<Eigen::Index>(k)], WithinAbs(expect, 1e-8));
    }
}

TEST_CASE("labels follow uncoupled energy order away from resonances", "[labels]")
{
    const auto p = device_a_params();
    const auto j = JunctionModel::sinusoidal(6.7);
    const double w = resonator_frequency(p);
    for (double phi : {0.0, 2.2, kPi})
    {
        const auto s = compute_point(j, p, phi, coupled_options());
        SpectrumOptions uo;
        uo.levels = 10;
        const auto u = compute_point(j, p, phi, uo);
        std::vector<std::pair<double, StateLabel>> products;
        for (int n = 0; n < 3; ++n)
            for (int m = 0; m < 10; ++m)
                products.push_back({u.eigenvalues[m] + n * w, StateLabel{m, n}});
        std::sort(products.begin(), products.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
        std::set<StateLabel> expected, got;
        for (int k = 0; k < 4; ++k)
        {
            expected.insert(products[static_cast<std::size_t>(k)].second);
            got.insert(s.labels[static_cast<std::size_t>(k)].label);
        }
        CHECK(got == expected);
    }
    // At phi_ext = pi the lowest four are g0, e0, g1 and e1; near zero flux f0 and the second photon
    // are out of reach, so the lowest four are the ground state and three resonator-dressed states.
    const auto at_pi = compute_point(j, p, kPi, coupled_options());
    std::set<std::string> names;
    for (int k = 0; k < 4; ++k)
        names.insert(to_string(at_pi.labels[static_cast<std::size_t>(k)].label));
    CHECK(names.count("g0") == 1);
    CHECK(names.count("e0") == 1);
    CHECK(names.count("g1") == 1);
}

TEST_CASE("labels are a bijection at every point", "[labels][property]")
{
    const auto p = device_a_params();
    for (double ej : {0.2, 3.8, 9.6})
        for (double phi : {0.0, 0.5, 1.7, kPi})
        {
            const auto s = compute_point(JunctionModel::sinusoidal(ej), p, phi, coupled_options(30, 4));
            std::set<StateLabel> seen;
            for (const auto &l : s.labels)
                seen.insert(l.label);
            CHECK(seen.size() == s.labels.size());
        }
}

TEST_CASE("avoided crossing hybridizes labels", "[labels]")
{
    const auto p = device_a_params();
    const auto j = JunctionModel::sinusoidal(6.7);
    const double phi_c = ge_resonator_degeneracy(j, p);
    const auto at = compute_point(j, p, phi_c, coupled_options());
    double min_overlap = 1.0;
    for (int k = 0; k < 6; ++k)
        min_overlap = std::min(min_overlap, at.labels[static_cast<std::size_t>(k)].overlap);
    // Two-level mixing: the better label keeps at least half the weight.
    CHECK(min_overlap < 0.75);
    CHECK(min_overlap > 0.25);

    auto opt = coupled_options();
    opt.labeling.mixed_threshold = 0.75;
    const auto flagged = compute_point(j, p, phi_c, opt);
    bool any = false;
    for (const auto &l : flagged.labels)
    {
        CHECK(l.mixed == (l.overlap < 0.75));
        any = any || l.mixed;
    }
    CHECK(any);
    const auto far = compute_point(j, p, kPi, opt);
    for (int k = 0; k < 4; ++k)
        CHECK_FALSE(far.labels[static_cast<std::size_t>(k)].mixed);
}

TEST_CASE("minimum gap at the g-e / resonator crossing grows with L_s", "[labels][property]")
{
    const auto j = JunctionModel::sinusoidal(6.7);
    std::vector<double> gaps;
    for (double ls : {2.0, 4.6, 8.5})
    {
        auto p = device_a_params();
        p.L_s = ls;
        const double phi_c = ge_resonator_degeneracy(j, p);
        const double target = resonator_frequency(p);
        const auto centre = compute_point(j, p, phi_c, coupled_options());
        // Pair of coupled levels straddling the degenerate energy.
        int k = 1;
        double best = 1e300;
        for (int i = 1; i + 1 < 8; ++i)
        {
            const double mid = 0.5 * (centre.eigenvalues[i] + centre.eigenvalues[i + 1]) - centre.eigenvalues[0];
            if (std::abs(mid - target) < best)
            {
                best = std::abs(mid - target);
                k = i;
            }
        }
        double gap = 1e300;
        for (int i = -40; i <= 40; ++i)
        {
            const auto s = compute_point(j, p, phi_c + i * 5e-4, coupled_options());
            gap = std::min(gap, s.eigenvalues[k + 1] - s.eigenvalues[k]);
        }
        gaps.push_back(gap);
    }
    CHECK(gaps[0] > 0.0);
    CHECK(gaps[1] > gaps[0]);
    CHECK(gaps[2] > gaps[1]);
}

TEST_CASE("transition frequency examples", "[spectrum]")
{
    const auto a = device_a_params();
    std::vector<double> phi;
    for (int i = 0; i <= 40; ++i)
        phi.push_back(-kPi + i * kTwoPi / 40);
    SpectrumOptions o;
    o.levels = 4;

    const auto flat = compute_spectrum(JunctionModel::sinusoidal(0.0), a, phi, o);
    const auto zero = transition_frequencies(flat, StateLabel{0, 0}, {StateLabel{0, 0}});
    for (double f : zero.front().second)
        CHECK(f == 0.0);
    const auto ge = transition_frequencies(flat, {parse_transition("g0->e0"), parse_transition("g0->h0")});
    CHECK(ge[0].first == "g0->e0");
    CHECK(ge[1].first == "g0->h0");
    for (std::size_t i = 0; i < phi.size(); ++i)
    {
        CHECK_THAT(ge[0].second[i], WithinAbs(3.628, 5e-4));
        CHECK_THAT(ge[1].second[i], WithinRel(3.0 * ge[0].second[i], 1e-12));
    }

    const auto deep = compute_spectrum(JunctionModel::sinusoidal(6.7), a, phi, o);
    const auto f = transition_frequencies(deep, {parse_transition("g0->e0")}).front().second;
    const auto [mn, mx] = std::minmax_element(f.begin(), f.end());
    CHECK(std::abs(std::abs(phi[static_cast<std::size_t>(mn - f.begin())]) - kPi) < 1e-12);
    CHECK(phi[static_cast<std::size_t>(mx - f.begin())] == Catch::Approx(0.0).margin(1e-12));
    // Downward transitions are reported as positive frequencies.
    const auto down = transition_frequencies(deep, {parse_transition("e0->g0")}).front().second;
    for (std::size_t i = 0; i < f.size(); ++i)
        CHECK(down[i] == f[i]);
}

TEST_CASE("missing labels name the point", "[spectrum]")
{
    SpectrumOptions o;
    o.levels = 3;
    const auto s = compute_spectrum(JunctionModel::sinusoidal(1.0), device_a_params(), {0.0, 0.5}, o);
    try
    {
        transition_frequencies(s, {parse_transition("g0->h0")});
        FAIL("expected a labeling error");
    }
    catch (const LabelingError &e)
    {
        CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("h0"));
        CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("point 0"));
    }
}

TEST_CASE("parallel sweep equals serial sweep bitwise", "[spectrum]")
{
    std::vector<double> phi;
    for (int i = 0; i < 13; ++i)
        phi.push_back(0.25 * i);
    auto o = coupled_options(30, 3);
    o.levels = 12;
    const auto serial = compute_spectrum(JunctionModel::sinusoidal(3.8), device_a_params(), phi, o);
    o.threads = 4;
    const auto parallel = compute_spectrum(JunctionModel::sinusoidal(3.8), device_a_params(), phi, o);
    CHECK(serial.eigenvalues == parallel.eigenvalues);
    for (std::size_t i = 0; i < phi.size(); ++i)
        for (std::size_t k = 0; k < 12; ++k)
            CHECK(serial.labels[i][k].label == parallel.labels[i][k].label);
}

TEST_CASE("periodicity and reflection symmetry of transitions", "[spectrum][property]")
{
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 12; ++trial)
    {
        CircuitParams p{1.0 + 2.5 * u(rng), 0.4 + 1.0 * u(rng), 26.0, 40.0 + 10.0 * u(rng), 2.0 + 8.0 * u(rng)};
        const double phi = -kPi + kTwoPi * u(rng);
        const bool channels = trial % 2 == 1;
        const auto j = channels ? JunctionModel::channels(26.0, {0.05 + 0.6 * u(rng)})
                                : JunctionModel::sinusoidal(8.0 * u(rng));
        auto o = coupled_options(40, 3);
        o.levels = 6;
        const auto a = compute_point(j, p, phi, o);
        const auto m = compute_point(j, p, -phi, o);
        const auto s = compute_point(j, p, phi + kTwoPi, o);
        for (int k = 1; k < 6; ++k)
        {
            const double fa = a.eigenvalues[k] - a.eigenvalues[0];
            CHECK_THAT(fa, WithinAbs(m.eigenvalues[k] - m.eigenvalues[0], 1e-8));
            CHECK_THAT(fa, WithinAbs(s.eigenvalues[k] - s.eigenvalues[0], 1e-8));
        }
    }
}

TEST_CASE("basis convergence", "[spectrum]")
{
    const auto a = device_a_params();
    CHECK(converge_basis(JunctionModel::sinusoidal(0.0), a, 0.3, 5).n_fluxonium == 10);
    const auto shallow = converge_basis(JunctionModel::sinusoidal(0.2), a, 0.3, 5);
    const auto deep = converge_basis(JunctionModel::sinusoidal(9.6), a, 0.3, 5);
    CHECK(deep.n_fluxonium > shallow.n_fluxonium);
    const auto loose = converge_basis(JunctionModel::sinusoidal(3.8), a, 0.3, 5, 1e-6);
    const auto tight = converge_basis(JunctionModel::sinusoidal(3.8), a, 0.3, 5, 1e-7);
    CHECK(tight.n_fluxonium >= loose.n_fluxonium);

    BasisSpec capped;
    capped.max_dimension = 20;
    try
    {
        converge_basis(JunctionModel::sinusoidal(9.6), a, 0.3, 5, 1e-7, capped);
        FAIL("expected the cap to be hit");
    }
    catch (const ConvergenceError &e)
    {
        CHECK(e.last_delta() > 1e-7);
    }
    CHECK_THROWS_AS(converge_basis(JunctionModel::sinusoidal(1.0), a, 0.3, 5, 0.0), InvalidParameter);
}
