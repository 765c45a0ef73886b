#include "doctest.h"

#include "conewave/field.hpp"
#include "conewave/wave.hpp"
#include "support.hpp"

using namespace conewave;
using testing_support::naive_value;
using testing_support::random_wave;

namespace {

TorusDomain domain64() { return TorusDomain{2, 64.0, 128}; }

Wave axis_wave(double xi1, int k = 0, Complex a = 1.0)
{
    return make_wave(domain64(), Color::Red, k, 1, std::vector<FrequencyAtom>{{{xi1, 0.0}, {a}}});
}

double max_rel(const std::vector<Complex>& a, const std::vector<Complex>& b)
{
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return num / std::max(den, 1e-300);
}

}  // namespace

TEST_CASE("make_wave validates band and sector")
{
    const Wave w = axis_wave(1.5);
    CHECK(w.size() == 1);
    CHECK_THROWS_AS(make_wave(domain64(), Color::Red, 0, 1,
                              std::vector<FrequencyAtom>{{{0.0, 1.5}, {1.0}}}),
                    Error);
    try {
        axis_wave(3.0);
        FAIL("expected rejection");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::AtomOutsideSector);
    }
    try {
        make_wave(domain64(), Color::Red, 0, 1, std::vector<FrequencyAtom>{{{1.5 + 1e-3, 0.0}, {1.0}}});
        FAIL("expected rejection");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::OffLattice);
    }
}

TEST_CASE("plane wave is unimodular and zero wave vanishes")
{
    const Wave w = axis_wave(1.5);
    const Wave z = zero_wave(domain64(), Color::Blue, 0);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    std::vector<SpacetimePoint> pts;
    for (int i = 0; i < 50; ++i) pts.push_back({{u(rng), u(rng)}, u(rng)});
    const auto v = evaluate(w, pts);
    const auto vz = evaluate(z, pts);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(std::abs(v[i][0]) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(vz[i][0] == Complex{});
    }
}

TEST_CASE("evaluation is linear and matches direct summation")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-40.0, 40.0);
    const Wave a = random_wave(rng, domain64(), Color::Red, 1, 1);
    const Wave b = random_wave(rng, domain64(), Color::Red, 1, 1);
    const Wave sum = add(a, b);
    std::vector<SpacetimePoint> pts;
    for (int i = 0; i < 100; ++i) pts.push_back({{u(rng), u(rng)}, u(rng)});
    const auto vs = evaluate(sum, pts);
    const auto va = evaluate(a, pts);
    const auto vb = evaluate(b, pts);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Complex expect = va[i][0] + vb[i][0];
        CHECK(std::abs(vs[i][0] - expect) <= 1e-12 * std::max(1.0, std::abs(expect)));
        const auto oracle = naive_value(sum, pts[i].x, pts[i].t);
        CHECK(std::abs(vs[i][0] - oracle[0]) <= 1e-11 * std::max(1.0, std::abs(oracle[0])));
    }

    const Complex alpha(0.3, -1.2), beta(-2.0, 0.5);
    const Wave combo = linear_combination(std::vector<Wave>{a, b}, std::vector<Complex>{alpha, beta});
    const auto vc = evaluate(combo, pts);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Complex expect = alpha * va[i][0] + beta * vb[i][0];
        CHECK(std::abs(vc[i][0] - expect) <= 1e-12 * std::max(1.0, std::abs(expect)));
    }
}

TEST_CASE("energy follows the Plancherel normalisation")
{
    const TorusDomain unit{2, 1.0, 16};
    const Wave w = make_wave(unit, Color::Red, 0, 1,
                             std::vector<FrequencyAtom>{{{1.0, 0.0}, {Complex(3.0, 4.0)}}});
    CHECK(energy(w) == doctest::Approx(25.0).epsilon(1e-15));
    CHECK(energy(zero_wave(unit, Color::Red, 0)) == 0.0);

    // Grid quadrature oracle: with G > 2 max|m| points per axis the rectangle
    // rule integrates trigonometric polynomials of degree < G exactly.
    const TorusDomain d{2, 16.0, 64};
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 3; ++trial) {
        const Wave r = random_wave(rng, d, Color::Blue, 0, 20);
        const int G = 96;
        const double h = d.period / G;
        for (double t : {0.0, 1.7, -3.2}) {
            double s = 0.0;
            for (int i = 0; i < G; ++i)
                for (int j = 0; j < G; ++j) {
                    const double x[2] = {i * h, j * h};
                    s += std::norm(naive_value(r, x, t)[0]);
                }
            s *= h * h;
            CHECK(std::abs(s - energy(r)) <= 1e-10 * energy(r));
        }
    }
}

TEST_CASE("margin closed form matches dense boundary sampling")
{
    // A point on the angular edge touches the closure of the complement.
    const double c = std::cos(kPi / 8), s = std::sin(kPi / 8);
    const double edge[2] = {1.5 * c, 1.5 * s};
    CHECK(atom_margin(edge, 0) <= 1e-3);

    auto oracle = [](std::span<const double> xi) {
        // Brute force over points of the normalised cone outside the sector/band.
        const double rho0 = norm2(xi);
        const double th0 = std::atan2(xi[1], xi[0]);
        double best = 1e300;
        // The grid contains the band radii 1, 2 and the edge angles +-pi/8 exactly,
        // so the closure of the excluded set is sampled along its boundary.
        const int NR = 1000, NA = 400;
        for (int i = -300; i <= 1300; ++i) {
            const double rho = 1.0 + static_cast<double>(i) / NR;
            for (int j = -2 * NA; j <= 2 * NA; ++j) {
                const double th = (kPi / 8) * j / NA;
                const bool interior = rho > 1.0 && rho < 2.0 && std::abs(j) < NA;
                if (interior) continue;
                const double dx = rho * std::cos(th) - rho0 * std::cos(th0);
                const double dy = rho * std::sin(th) - rho0 * std::sin(th0);
                const double dt = rho - rho0;
                best = std::min(best, dx * dx + dy * dy + dt * dt);
            }
        }
        return std::sqrt(best);
    };
    const double mid[2] = {1.5, 0.0};
    CHECK(std::abs(atom_margin(mid, 0) - oracle(mid)) <= 1e-3);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ur(1.0, 2.0), ua(-kPi / 8, kPi / 8);
    for (int i = 0; i < 6; ++i) {
        const double r = ur(rng), a = ua(rng);
        const double xi[2] = {r * std::cos(a), r * std::sin(a)};
        CHECK(std::abs(atom_margin(xi, 0) - oracle(xi)) <= 1e-3);
    }

    const Wave w = random_wave(rng, domain64(), Color::Red, 1, 10);
    CHECK(margin(dilate(w, 2)) == margin(w));
    CHECK(margin(time_reverse(w)) == margin(w));
    CHECK_THROWS_AS(margin(zero_wave(domain64(), Color::Red, 0)), Error);
}

TEST_CASE("angular dispersion")
{
    CHECK(angular_dispersion(axis_wave(1.5)) == 0.0);
    const TorusDomain d{2, 64.0, 128};
    // Atoms at +-theta: (a, b) and (a, -b).
    const Wave w = make_wave(d, Color::Red, 0, 1,
                             std::vector<FrequencyAtom>{{{1.5, 0.25}, {1.0}}, {{1.5, -0.25}, {1.0}}});
    const double theta = std::atan2(0.25, 1.5);
    CHECK(angular_dispersion(w) == doctest::Approx(2 * std::sin(theta)).epsilon(1e-14));

    std::mt19937_64 rng(9);
    for (int n : {2, 3}) {
        const TorusDomain dn{n, 32.0, 64};
        const Wave r = random_wave(rng, dn, Color::Red, 0, 50);
        double best = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i)
            for (std::size_t j = 0; j < r.size(); ++j) {
                double s = 0.0;
                for (int k = 0; k < n; ++k) {
                    const double v = r.xi(i)[k] / r.frequency_norm(i) - r.xi(j)[k] / r.frequency_norm(j);
                    s += v * v;
                }
                best = std::max(best, std::sqrt(s));
            }
        CHECK(std::abs(angular_dispersion(r) - best) <= 1e-12);
    }
}

TEST_CASE("dilation and time reversal")
{
    std::mt19937_64 rng(21);
    const Wave w = random_wave(rng, domain64(), Color::Red, 1, 12, 2);
    for (int j : {-1, 1, 2}) {
        const Wave dw = dilate(w, j);
        CHECK(dw.k() == w.k() + j);
        // Independent recomputation of the Plancherel sum.
        double s = 0.0;
        for (const auto& a : w.amplitude_data()) s += std::norm(a);
        const double expect = s * std::pow(dw.domain().period, 2);
        CHECK(energy(dw) == doctest::Approx(expect).epsilon(1e-13));
        CHECK(energy(dw) == doctest::Approx(energy(w) * std::pow(2.0, -2.0 * j)).epsilon(1e-13));
    }
    CHECK_THROWS_AS(dilate(w, -2), Error);
    try {
        dilate(w, 1, TorusDomain{2, 64.0 / 3.0, 128});
        FAIL("expected OffLattice");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::OffLattice);
    }

    const Wave tr = time_reverse(w);
    CHECK(tr.color() == Color::Blue);
    CHECK(tr.amplitude_data() == w.amplitude_data());
    CHECK(energy(tr) == energy(w));
    const Wave back = time_reverse(tr);
    CHECK(back.color() == w.color());
    CHECK(back.xi_data() == w.xi_data());
    CHECK(back.amplitude_data() == w.amplitude_data());

    // T phi (x, t) = phi (x, -t).
    const double x[2] = {3.1, -7.4};
    CHECK(std::abs(naive_value(tr, x, 2.5)[1] - naive_value(w, x, -2.5)[1]) < 1e-12);
}

TEST_CASE("JSON round trip is bit exact")
{
    std::mt19937_64 rng(2);
    const Wave w = random_wave(rng, TorusDomain{3, 32.0, 64}, Color::Blue, 2, 15, 3);
    nlohmann::json j = w;
    const Wave back = wave_from_json(nlohmann::json::parse(j.dump()));
    CHECK(back.xi_data() == w.xi_data());
    CHECK(back.amplitude_data() == w.amplitude_data());
    CHECK(back.domain() == w.domain());
    CHECK(back.color() == w.color());
    CHECK(back.k() == w.k());
}

TEST_CASE("grid samplers agree with pointwise evaluation")
{
    std::mt19937_64 rng(13);
    for (int n : {2, 3}) {
        const TorusDomain d{n, 16.0, 32};
        const Wave w = random_wave(rng, d, Color::Red, 1, 25, 2);
        BoxGrid g;
        g.spacing = 0.25;
        g.origin.assign(static_cast<std::size_t>(n), -3.3);
        g.counts.assign(static_cast<std::size_t>(n), 10);
        g.counts[0] = 70;  // wraps around the torus
        const double t = 4.7;
        const auto vf = sample_box(w, t, g, SampleMethod::Fft);
        const auto vd = sample_box(w, t, g, SampleMethod::Direct);
        std::vector<Complex> vo;
        std::vector<double> x(static_cast<std::size_t>(n));
        for (std::size_t p = 0; p < g.size(); ++p) {
            g.point(p, x);
            const auto v = naive_value(w, x, t);
            vo.insert(vo.end(), v.begin(), v.end());
        }
        CHECK(max_rel(vf, vo) < 1e-11);
        CHECK(max_rel(vd, vo) < 1e-11);
    }
}

TEST_CASE("evaluation does not depend on the thread count")
{
    std::mt19937_64 rng(17);
    const Wave w = random_wave(rng, domain64(), Color::Red, 0, 30);
    std::vector<SpacetimePoint> pts;
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int i = 0; i < 500; ++i) pts.push_back({{u(rng), u(rng)}, u(rng)});
    const int saved = thread_count();
    set_thread_count(1);
    const auto a = evaluate(w, pts);
    set_thread_count(4);
    const auto b = evaluate(w, pts);
    set_thread_count(saved);
    CHECK(a == b);
}
