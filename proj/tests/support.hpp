#pragma once

#include <cmath>
#include <random>

#include "conewave/wave.hpp"

namespace testing_support {

using conewave::Complex;

// Random lattice atom inside the band/sector of frequency 2^k, rejection sampled.
inline std::vector<double> random_sector_xi(std::mt19937_64& rng, const conewave::TorusDomain& d,
                                            int k, double inner = 1.0, double outer = 2.0,
                                            double max_angle = conewave::kPi / 8)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double s = std::ldexp(1.0, k);
    std::vector<double> xi(static_cast<std::size_t>(d.n));
    for (int tries = 0; tries < 100000; ++tries) {
        for (int i = 0; i < d.n; ++i) {
            const double v = i == 0 ? s * (1.0 + 0.5 * (u(rng) + 1.0)) : s * 0.8 * u(rng);
            xi[i] = std::round(v * d.period) / d.period;
        }
        const double r = conewave::norm2(xi) / s;
        if (r >= inner && r <= outer && conewave::angle_to_e1(xi) <= max_angle) return xi;
    }
    throw std::runtime_error("could not sample a sector atom");
}

inline conewave::Wave random_wave(std::mt19937_64& rng, const conewave::TorusDomain& d,
                                  conewave::Color color, int k, int atoms, int h = 1)
{
    std::normal_distribution<double> g;
    std::vector<conewave::FrequencyAtom> list;
    for (int i = 0; i < atoms; ++i) {
        conewave::FrequencyAtom a;
        a.xi = random_sector_xi(rng, d, k);
        for (int c = 0; c < h; ++c) a.amplitude.emplace_back(g(rng), g(rng));
        list.push_back(a);
    }
    conewave::AtomAccumulator acc(d, h);
    for (auto& a : list) acc.add(a.xi, a.amplitude);
    return acc.build(color, k);
}

// Plain summation oracle for phi(x, t).
inline std::vector<Complex> naive_value(const conewave::Wave& w, std::span<const double> x, double t)
{
    std::vector<Complex> v(static_cast<std::size_t>(w.hilbert_dim()));
    const double sgn = w.color() == conewave::Color::Red ? 1.0 : -1.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        double ph = 0.0, r2 = 0.0;
        for (int d = 0; d < w.n(); ++d) {
            ph += x[d] * w.xi(i)[d];
            r2 += w.xi(i)[d] * w.xi(i)[d];
        }
        ph += sgn * t * std::sqrt(r2);
        const Complex e = std::exp(Complex(0.0, 2.0 * conewave::kPi * ph));
        for (int c = 0; c < w.hilbert_dim(); ++c) v[c] += w.amplitude(i)[c] * e;
    }
    return v;
}

}  // namespace testing_support
