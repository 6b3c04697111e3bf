#ifndef FLUXFIT_LABELING_HPP
#define FLUXFIT_LABELING_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <compare>
#include <string>
#include <string_view>
#include <vector>

#include "fluxfit/eigensolve.hpp"
#include "fluxfit/errors.hpp"

namespace fluxfit
{
// Product-state label: fluxonium level m (g, e, f, h, then [4], [5], ...) and resonator photon number n.
struct StateLabel
{
    int m = 0;
    int n = 0;

    auto operator<=>(const StateLabel &) const = default;
};

inline std::string to_string(const StateLabel &s)
{
    static constexpr char kLetters[] = {'g', 'e', 'f', 'h'};
    std::string out = s.m < 4 ? std::string(1, kLetters[s.m]) : "[" + std::to_string(s.m) + "]";
    return out + std::to_string(s.n);
}

inline StateLabel parse_state_label(std::string_view text)
{
    auto fail = [&] { return ConfigError("malformed state label '" + std::string(text) + "'"); };
    if (text.empty())
        throw fail();
    StateLabel out;
    std::size_t pos = 0;
    switch (text[0])
    {
    case 'g': out.m = 0; pos = 1; break;
    case 'e': out.m = 1; pos = 1; break;
    case 'f': out.m = 2; pos = 1; break;
    case 'h': out.m = 3; pos = 1; break;
    case '[':
    {
        const auto close = text.find(']');
        if (close == std::string_view::npos || close == 1)
            throw fail();
        const auto digits = text.substr(1, close - 1);
        if (!std::all_of(digits.begin(), digits.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
            throw fail();
        out.m = std::stoi(std::string(digits));
        pos = close + 1;
        break;
    }
    default: throw fail();
    }
    const auto rest = text.substr(pos);
    if (rest.empty() || !std::all_of(rest.begin(), rest.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        throw fail();
    out.n = std::stoi(std::string(rest));
    return out;
}

struct TransitionSpec
{
    StateLabel initial;
    StateLabel final;

    auto operator<=>(const TransitionSpec &) const = default;
};

inline std::string to_string(const TransitionSpec &t) { return to_string(t.initial) + "->" + to_string(t.final); }

// Accepts "g0->e0", "g0 -> e0" and the arrow character form.
inline TransitionSpec parse_transition(std::string_view text)
{
    std::string s;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c)))
            s.push_back(c);
    std::size_t at = s.find("->");
    std::size_t len = 2;
    if (at == std::string::npos)
    {
        at = s.find("\xE2\x86\x92"); // U+2192
        len = 3;
    }
    if (at == std::string::npos)
        throw ConfigError("malformed transition '" + std::string(text) + "' (expected e.g. g0->e0)");
    return {parse_state_label(s.substr(0, at)), parse_state_label(s.substr(at + len))};
}

struct LevelLabel
{
    StateLabel label;
    double overlap = 1.0; // squared overlap with the assigned product state
    bool mixed = false;
};

struct LabelingOptions
{
    double mixed_threshold = 0.25; // squared overlap below which a label is flagged mixed
    double tie_tol = 1e-6;
    double degenerate_rel_gap = 1e-10;
};

// Labels for the uncoupled fluxonium: energy rank, no photons.
inline std::vector<LevelLabel> label_uncoupled(int count)
{
    std::vector<LevelLabel> out(count);
    for (int k = 0; k < count; ++k)
        out[k].label = {k, 0};
    return out;
}

// Assigns each coupled eigenstate the uncoupled product state (m, n) with maximal squared overlap.
// One-to-one: greedy on descending overlap over all (level, product) pairs; near-ties are broken by
// energy proximity except for degenerate coupled levels.
// `coupled` vectors live in the product basis with index = n * n_f + k (k = fluxonium oscillator state).
inline std::vector<LevelLabel> label_states(const EigenSystem &coupled, const EigenSystem &fluxonium,
                                            double resonator_spacing, int n_resonator,
                                            const LabelingOptions &opt = {})
{
    const int nf = static_cast<int>(fluxonium.values.size());
    const int dim = static_cast<int>(coupled.values.size());
    if (nf * n_resonator != dim || coupled.vectors.rows() != dim || fluxonium.vectors.rows() != nf)
        throw NumericalError("label_states: coupled and uncoupled bases are incompatible");

    // overlap(level, product) with product = n * nf + m.
    Matrix overlap(dim, dim);
    for (int r = 0; r < n_resonator; ++r)
        overlap.middleCols(r * nf, nf) =
            (fluxonium.vectors.transpose() * coupled.vectors.middleRows(r * nf, nf)).transpose().array().square().matrix();

    Vector product_energy(dim);
    for (int r = 0; r < n_resonator; ++r)
        for (int m = 0; m < nf; ++m)
            product_energy[r * nf + m] = fluxonium.values[m] + resonator_spacing * r;
    // Coupled and product energies share the resonator zero-point offset only up to a constant;
    // compare after aligning the ground states.
    const double shift = coupled.values[0] - product_energy.minCoeff();

    auto degenerate = [&](int level) {
        const double e = coupled.values[level];
        const double scale = std::max(std::abs(e), 1.0);
        return (level > 0 && std::abs(e - coupled.values[level - 1]) < opt.degenerate_rel_gap * scale) ||
               (level + 1 < dim && std::abs(coupled.values[level + 1] - e) < opt.degenerate_rel_gap * scale);
    };
    auto mismatch = [&](int level, int product) {
        return std::abs(coupled.values[level] - product_energy[product] - shift);
    };

    struct Candidate
    {
        double overlap;
        int level;
        int product;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(static_cast<std::size_t>(dim) * 4);
    for (int l = 0; l < dim; ++l)
        for (int p = 0; p < dim; ++p)
            if (overlap(l, p) > 1e-14)
                candidates.push_back({overlap(l, p), l, p});
    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate &a, const Candidate &b) {
        if (a.overlap != b.overlap)
            return a.overlap > b.overlap;
        if (a.level != b.level)
            return a.level < b.level;
        return a.product < b.product;
    });

    std::vector<int> level_to_product(dim, -1);
    std::vector<char> product_used(dim, 0);
    int assigned = 0;
    for (std::size_t i = 0; i < candidates.size() && assigned < dim;)
    {
        const auto &c = candidates[i];
        if (level_to_product[c.level] >= 0 || product_used[c.product])
        {
            ++i;
            continue;
        }
        // Near-tie scan: competitors sharing the level or the product.
        std::size_t best = i;
        if (!degenerate(c.level))
        {
            double best_mismatch = mismatch(c.level, c.product);
            for (std::size_t j = i + 1; j < candidates.size() && candidates[j].overlap >= c.overlap - opt.tie_tol; ++j)
            {
                const auto &d = candidates[j];
                if (level_to_product[d.level] >= 0 || product_used[d.product])
                    continue;
                if (d.level != c.level && d.product != c.product)
                    continue;
                if (degenerate(d.level))
                    continue;
                const double mm = mismatch(d.level, d.product);
                if (mm < best_mismatch)
                {
                    best_mismatch = mm;
                    best = j;
                }
            }
        }
        const auto &chosen = candidates[best];
        level_to_product[chosen.level] = chosen.product;
        product_used[chosen.product] = 1;
        ++assigned;
        if (best == i)
            ++i;
    }
    // Leftovers (zero overlap everywhere): pair in energy order.
    if (assigned < dim)
    {
        std::vector<int> free_products;
        for (int p = 0; p < dim; ++p)
            if (!product_used[p])
                free_products.push_back(p);
        std::sort(free_products.begin(), free_products.end(),
                  [&](int a, int b) { return product_energy[a] < product_energy[b]; });
        std::size_t next = 0;
        for (int l = 0; l < dim; ++l)
            if (level_to_product[l] < 0)
                level_to_product[l] = free_products[next++];
    }

    std::vector<LevelLabel> out(dim);
    for (int l = 0; l < dim; ++l)
    {
        const int p = level_to_product[l];
        out[l].label = {p % nf, p / nf};
        out[l].overlap = overlap(l, p);
        out[l].mixed = out[l].overlap < opt.mixed_threshold;
    }
    return out;
}

} // namespace fluxfit

#endif // FLUXFIT_LABELING_HPP
