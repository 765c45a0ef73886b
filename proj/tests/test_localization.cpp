#include "doctest.h"

#include <random>

#include "conewave/field.hpp"
#include "conewave/localization.hpp"
#include "support.hpp"

using namespace conewave;

namespace {

// Concentrated red packet at frequency 2^k, spatially centred at x0.
Wave packet(const TorusDomain& d, int k, std::vector<double> x0 = {0.0, 0.0}, double width = 0.1,
            Color color = Color::Red)
{
    const double s = std::ldexp(1.0, k);
    PacketSpec ps;
    ps.centre = {1.5 * s, 0.0};
    ps.width = width * s;
    ps.x0 = std::move(x0);
    return make_packet(d, color, k, ps);
}

double max_amplitude(const Wave& w)
{
    double m = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
        for (const Complex& a : w.amplitude(i)) m = std::max(m, std::abs(a));
    return m;
}

template <class F>
ErrorKind error_of(F&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::Config;  // sentinel: nothing thrown
}

}  // namespace

TEST_CASE("eta_r: unit mass, non-negative, band limited to 1/r")
{
    const TorusDomain d{2, 64.0, 128};
    for (double r : {2.0, 8.0}) {
        const EtaGrid eta = make_eta(d, r);
        CHECK(std::abs(eta.mass - 1.0) <= 1e-6);
        double vmax = 0.0;
        for (double v : eta.values) vmax = std::max(vmax, v);
        CHECK(eta.min_value >= -1e-12 * vmax);
        CHECK(eta.max_leak <= 1e-10);

        // independent oracle: direct DFT of the sampled values at lattice points
        // outside radius 1/r and a few inside
        const int G = eta.grid;
        const double h = eta.spacing;
        std::mt19937_64 rng(17);
        std::uniform_int_distribution<int> pick(-G / 2, G / 2 - 1);
        int outside = 0;
        double worst = 0.0;
        while (outside < 40) {
            const long m0 = pick(rng), m1 = pick(rng);
            if (std::hypot(double(m0), double(m1)) / d.period < 1.0 / r) continue;
            ++outside;
            Complex acc = 0.0;
            for (int i = 0; i < G; ++i)
                for (int j = 0; j < G; ++j) {
                    const double ph = -2.0 * kPi * (double(m0) * i + double(m1) * j) / G;
                    acc += eta.values[std::size_t(i) * G + j] * Complex(std::cos(ph), std::sin(ph));
                }
            worst = std::max(worst, std::abs(acc) * h * h);
        }
        CHECK(worst <= 1e-10);
    }
    CHECK(error_of([&] { make_eta(d, 1.0); }) == ErrorKind::GridTooCoarse);
}

TEST_CASE("smooth cutoff lies in [0,1] and matches the continuous mollified indicator")
{
    const TorusDomain d{2, 64.0, 128};
    const Disk D{{1.0, -2.0}, 0.0, 12.0};
    const double rho = smoothing_radius(2, D.radius, 4.0);
    const SmoothCutoff c(d, D, rho);
    std::vector<double> s;
    for (int i = 0; i <= 64; ++i) s.push_back(0.5 * i);
    const std::vector<double> prof = c.radial_profile(s);

    // oracle: (chi_D * eta_rho)(x_D + s e_1) on R^2 as a Hankel integral,
    // 2 pi int_0^{1/rho} r J_1(2 pi r q) eta0_hat(rho q) J_0(2 pi s q) dq, Simpson rule
    auto oracle = [&](double dist) {
        const int M = 20000;
        const double b = 1.0 / rho, h = b / M;
        double acc = 0.0;
        for (int i = 0; i <= M; ++i) {
            const double q = i * h;
            const double w = (i == 0 || i == M) ? 1.0 : (i % 2 ? 4.0 : 2.0);
            const double bh = q == 0.0 ? kPi * D.radius * D.radius
                                       : D.radius * std::cyl_bessel_j(1.0, 2.0 * kPi * D.radius * q) / q;
            acc += w * bh * eta0_hat(rho * q, 2) * std::cyl_bessel_j(0.0, 2.0 * kPi * dist * q) * q;
        }
        return 2.0 * kPi * acc * h / 3.0;
    };
    for (std::size_t i = 0; i < prof.size(); ++i) {
        CHECK(prof[i] >= -1e-9);
        CHECK(prof[i] <= 1.0 + 1e-9);
        if (i % 4 == 0) CHECK(std::abs(prof[i] - oracle(s[i])) <= 1e-4);
    }
    CHECK(prof.front() >= 0.99);
    CHECK(prof.back() <= 1e-4);
}

TEST_CASE("project_disk: whole support keeps the energy, complement is exact")
{
    const TorusDomain d{2, 64.0, 128};
    const Wave w = packet(d, 3, {3.0, 1.0});
    const Disk D{{3.0, 1.0}, 0.0, 28.0};
    const Wave p = project_disk(w, D);
    const Wave q = project_disk_complement(w, D);
    CHECK(energy(p) / energy(w) >= 0.999);
    CHECK(energy(p) <= energy(w));
    CHECK(energy(q) <= energy(w));

    const std::vector<Wave> parts{p, q, w};
    const std::vector<Complex> coef{1.0, 1.0, -1.0};
    const Wave diff = linear_combination(parts, coef);
    CHECK(max_amplitude(diff) <= 1e-12 * max_amplitude(w));
}

TEST_CASE("project_disk preserves color, band and Hilbert dimension")
{
    const TorusDomain d{2, 64.0, 128};
    for (Color col : {Color::Red, Color::Blue}) {
        const Wave a = packet(d, 2, {0.0, 0.0}, 0.1, col);
        const Wave b = packet(d, 2, {2.0, 0.0}, 0.1, col);
        const std::vector<Wave> comps{a, b};
        const Wave w = stack_components(comps);
        const Disk D{{0.0, 0.0}, 1.5, 10.0};
        const Wave p = project_disk(w, D);
        CHECK(p.color() == col);
        CHECK(p.k() == 2);
        CHECK(p.hilbert_dim() == 2);
        CHECK(p.domain() == d);
        CHECK(margin(p) >= margin(w) - 2.0 * std::pow(4.0 * 10.0, -0.75));
    }
}

TEST_CASE("energy-minor on random waves and disks")
{
    const TorusDomain d{2, 64.0, 128};
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-20.0, 20.0), ur(8.0, 24.0);
    for (int trial = 0; trial < 12; ++trial) {
        const int k = 2 + trial % 2;
        // random sector atoms well inside the band so the margin hypothesis holds
        std::vector<FrequencyAtom> atoms;
        std::normal_distribution<double> g;
        while (atoms.size() < 30) {
            auto xi = testing_support::random_sector_xi(rng, d, k, 1.3, 1.7, kPi / 16);
            atoms.push_back({xi, {Complex(g(rng), g(rng))}});
        }
        const Color col = trial % 3 == 0 ? Color::Blue : Color::Red;
        const Wave w = make_wave(d, col, k, 1, atoms);
        const Disk D{{u(rng), u(rng)}, u(rng), ur(rng)};
        const double e = energy(w);
        CHECK(energy(project_disk(w, D)) <= e);
        CHECK(energy(project_disk_complement(w, D)) <= e);
    }
}

TEST_CASE("idempotence up to the cutoff tail")
{
    const TorusDomain d{2, 64.0, 128};
    const Wave w = packet(d, 2, {4.0, 0.0}, 0.08);
    const Disk D{{0.0, 0.0}, 0.0, 8.0};
    const Wave p = project_disk(w, D);
    const Wave pp = project_disk(p, D);
    const double diff = std::abs(energy(pp) - energy(p));

    // bound from the measured profile: E(P phi) - E(P P phi) = int c^2 (1 - c^2) |phi|^2
    const int G = 256;
    const SmoothCutoff c(d, D, smoothing_radius(2, D.radius, 4.0));
    const std::vector<double> cv = c.grid_values(G);
    const std::vector<double> origin{0.0, 0.0};
    const std::vector<Complex> f = fft_slice(w, 0.0, G, origin);
    const double cell = std::pow(d.period / G, 2);
    double tail = 0.0;
    for (std::size_t i = 0; i < cv.size(); ++i) tail += cv[i] * cv[i] * (1.0 - cv[i] * cv[i]) * std::norm(f[i]) * cell;
    CHECK(tail > 0.0);
    CHECK(diff <= 3.0 * tail);
}

TEST_CASE("cutoff report: local slack, vanishing and zero wave")
{
    const TorusDomain d{2, 64.0, 128};
    for (double r : {8.0, 16.0}) {
        const Wave w = packet(d, 2, {1.0, -1.0});
        const CutoffReport rep = cutoff_report(w, Disk{{0.0, 0.0}, 0.0, r});
        CHECK(rep.energy_minor);
        CHECK(rep.margin_ok);
        CHECK(rep.local_slack <= 1e-3);
        CHECK(rep.energy_projected <= rep.energy);
        if (r == 16.0) CHECK(rep.vanishing <= 1e-2);
    }

    const CutoffReport z = cutoff_report(zero_wave(d, Color::Red, 2), Disk{{0.0, 0.0}, 0.0, 8.0});
    CHECK(z.energy == 0.0);
    CHECK(z.energy_projected == 0.0);
    CHECK(z.energy_complement == 0.0);
    CHECK(z.concentration == 0.0);
    CHECK(z.vanishing == 0.0);
    CHECK(z.local_slack == 0.0);
    CHECK(z.nonlocal_slack == 0.0);
    CHECK(z.flags.empty());
}

TEST_CASE("plane wave keeps the disk's share of the energy")
{
    // the mollified disk loses mass near its edge in proportion to rho / r, so the
    // comparison is made at high frequency where rho / r is about 1/8
    const TorusDomain d{2, 128.0, 64};
    const int k = 8;
    const double s = std::ldexp(1.0, k), r = 16.0;
    const Wave w = make_wave(d, Color::Red, k, 1, std::vector<FrequencyAtom>{{{1.5 * s, 0.0}, {1.0}}});
    const Wave p = project_disk(w, Disk{{5.0, 7.0}, 0.0, r});
    const double expected = kPi * r * r / (d.period * d.period) * energy(w);
    const double ratio = energy(p) / expected;
    CHECK(ratio >= 1.0 / 1.2);
    CHECK(ratio <= 1.2);
}

TEST_CASE("project_disk preconditions")
{
    const TorusDomain d{2, 64.0, 128};
    const Wave w = packet(d, 0);
    CHECK(error_of([&] { project_disk(w, Disk{{0.0, 0.0}, 0.0, 1.0}); }) == ErrorKind::DiskTooSmall);
    // packet at frequency 1 with margin ~0.38 needs r with 2 r^{-3/4} below that
    CHECK(error_of([&] { project_disk(w, Disk{{0.0, 0.0}, 0.0, 4.0}); }) == ErrorKind::MarginTooSmall);
    const Wave z = zero_wave(d, Color::Red, 0);
    CHECK(project_disk(z, Disk{{0.0, 0.0}, 0.0, 4.0}).empty());
}

TEST_CASE("propagation kernel decays off the cone")
{
    const TorusDomain d{2, 64.0, 256};
    for (double t : {8.0, 16.0}) {
        const KernelDecay kd = kernel_decay(d, t, 256, 2.0, 8.0);
        CHECK(kd.far_sup > 0.0);
        CHECK(kd.ratio >= 1e3);
    }
}

TEST_CASE("huygens report")
{
    const TorusDomain d{2, 128.0, 128};
    PacketSpec ps;
    ps.centre = {1.5, 0.0};
    ps.width = 0.2;
    const Wave phi = make_packet(d, Color::Red, 0, ps);
    PacketSpec qs;
    qs.centre = {3.0, 0.0};
    qs.width = 0.4;
    qs.x0 = {4.0, 3.0};
    const Wave psi = make_packet(d, Color::Blue, 1, qs);
    const Disk D{{0.0, 0.0}, 0.0, 16.0};

    HuygensOptions opt;
    opt.inflation = 1.0;
    const HuygensReport a = huygens_report(phi, psi, D, 32.0, opt);
    const HuygensReport b = huygens_report(phi, psi, D, 64.0, opt);
    CHECK(a.finite_propagation <= 0.05);
    CHECK(a.huygens <= 0.05);
    CHECK(b.huygens <= 0.05);
    CHECK(a.huygens > 0.0);
    CHECK(b.huygens <= a.huygens * 1.1);
    CHECK(a.red_blue_computed);
    CHECK(a.red_blue <= 0.05);

    const HuygensReport z = huygens_report(phi, zero_wave(d, Color::Blue, 1), D, 32.0, opt);
    CHECK(z.finite_propagation == 0.0);
    CHECK(z.huygens == 0.0);
    CHECK(z.red_blue == 0.0);

    CHECK(error_of([&] { huygens_report(phi, psi, D, 256.0, opt); }) == ErrorKind::RegionExceedsTorus);
}
