#include "doctest.h"

#include <random>

#include "conewave/geometry.hpp"

using namespace conewave;

namespace {

// Brute-force distance to the capped n = 2 cone: for each of a dense set of
// cap angles (edges included), a coarse scan in s followed by nested refinement.
double brute_cone_distance(double sign, double y0, double y1, double tau)
{
    const double S = 20.0, A = kPi / 4;
    const int NS = 200, NA = 1000;
    double best = 1e300;
    for (int j = 0; j <= NA; ++j) {
        const double a = -A + 2 * A * j / NA;
        const double ca = std::cos(a), sa = std::sin(a);
        auto d2 = [&](double s) {
            const double dx = y0 - s * ca, dy = y1 - s * sa, dt = tau + sign * s;
            return dx * dx + dy * dy + dt * dt;
        };
        double s0 = 0.0, v = 1e300;
        for (int i = 0; i <= NS; ++i) {
            const double s = -S + 2 * S * i / NS;
            if (d2(s) < v) {
                v = d2(s);
                s0 = s;
            }
        }
        double w = 2 * S / NS;
        for (int round = 0; round < 5; ++round) {
            double bs = s0;
            for (int i = -10; i <= 10; ++i) {
                const double s = s0 + w * i / 10.0;
                if (d2(s) < v) {
                    v = d2(s);
                    bs = s;
                }
            }
            s0 = bs;
            w /= 5.0;
        }
        best = std::min(best, v);
    }
    return std::sqrt(best);
}

}  // namespace

TEST_CASE("disk and tube cutoffs")
{
    const Disk D{{1.0, 2.0}, 0.0, 3.0};
    const double c[2] = {1.0, 2.0};
    CHECK(cutoff_disk(D, c, 8.0) == 1.0);
    const double edge[2] = {4.0, 2.0};
    CHECK(cutoff_disk(D, edge, 8.0) == doctest::Approx(std::pow(2.0, -8.0)));
    const Tube T{{std::cos(0.3), std::sin(0.3)}, {0.5, -1.0}, 2.0};
    for (double t : {-5.0, 0.0, 7.5}) {
        const double x[2] = {0.5 + std::cos(0.3) * t, -1.0 + std::sin(0.3) * t};
        CHECK(cutoff_tube(T, x, t, 8.0) == doctest::Approx(1.0));
        CHECK(T.contains(x, t));
    }
}

TEST_CASE("cone distance closed form")
{
    const std::vector<double> v{0.5, -0.25};
    CHECK(cone_distance(ConeColor::Red, v, 1.0, v, 1.0) == 0.0);
    for (double s : {0.5, 3.0, 10.0}) {
        const double x[2] = {0.5 + s, -0.25};
        CHECK(cone_distance(ConeColor::Red, v, 1.0, x, 1.0 - s) == doctest::Approx(0.0).scale(1.0));
        CHECK(cone_distance(ConeColor::Blue, v, 1.0, x, 1.0 + s) < 1e-12);
    }
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double y0 = u(rng), y1 = u(rng), tau = u(rng);
        const double x[2] = {v[0] + y0, v[1] + y1};
        const bool red = i % 2 == 0;
        const double closed = cone_distance(red ? ConeColor::Red : ConeColor::Blue, v, 1.0, x, 1.0 + tau);
        worst = std::max(worst, std::abs(closed - brute_cone_distance(red ? 1.0 : -1.0, y0, y1, tau)));
    }
    CHECK(worst <= 1e-3);
}

TEST_CASE("cone nesting and purple union")
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    const std::vector<double> v{0.0, 0.0};
    for (int i = 0; i < 2000; ++i) {
        const double x[2] = {u(rng), u(rng)};
        const double t = u(rng);
        const ConeNeighbourhood r1{v, 0.0, 1.0, ConeColor::Red}, r2{v, 0.0, 2.0, ConeColor::Red};
        if (r1.contains(x, t)) CHECK(r2.contains(x, t));
        const ConeNeighbourhood b{v, 0.0, 1.5, ConeColor::Blue}, r{v, 0.0, 1.5, ConeColor::Red},
            p{v, 0.0, 1.5, ConeColor::Purple};
        CHECK(p.contains(x, t) == (r.contains(x, t) || b.contains(x, t)));
    }
}

TEST_CASE("subcube partition")
{
    const Cube Q{{0.3, -1.0}, 2.0, 4.0};
    CHECK(subcubes(Q, 0).size() == 1);
    CHECK(subcubes(Q, 0)[0].center == Q.center);
    const auto q1 = subcubes(Q, 1);
    CHECK(q1.size() == 8);
    for (const auto& q : q1) CHECK(q.side == 2.0);
    CHECK_THROWS_AS(subcubes(Q, -1), Error);

    const auto q2 = subcubes(Q, 2);
    CHECK(q2.size() == 64);
    double vol = 0.0;
    for (const auto& q : q2) vol += q.volume();
    CHECK(vol == Q.volume());
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int i = 0; i < 10000; ++i) {
        const double x[2] = {Q.center[0] + Q.side * u(rng), Q.center[1] + Q.side * u(rng)};
        const double t = Q.t + Q.side * u(rng);
        int hits = 0;
        long which = -1;
        for (std::size_t k = 0; k < q2.size(); ++k)
            if (q2[k].contains(x, t)) {
                ++hits;
                which = static_cast<long>(k);
            }
        CHECK(hits == 1);
        CHECK(subcube_index(Q, 2, x, t) == which);
    }
}

TEST_CASE("interior and X sets")
{
    const Cube Q{{0.0, 0.0}, 0.0, 1.0};
    CHECK_THROWS_AS(Region::interior_set(Q, 0.6, 1), Error);
    CHECK_THROWS_AS(Region::interior_set(Q, 0.0, 1), Error);
    // Quadrature of the indicator of I^{c,k}: 64 cells per subcube axis resolve it exactly.
    for (int k : {0, 1, 2}) {
        const double c = 0.125;
        const Region I = Region::interior_set(Q, c, k);
        const double per_unit = 64.0 * std::ldexp(1.0, k);
        const SpacetimeGrid g = make_grid(*I.bounds(), per_unit / 4);
        const double frac = masked_sum(I, g, [](double, const SpacetimeGrid& gg) {
            return std::vector<double>(gg.space_size(), 1.0);
        });
        CHECK(frac == doctest::Approx(interior_fraction(2, c)).epsilon(1e-12));
    }
    CHECK(interior_fraction(2, 1e-9) == doctest::Approx(1.0));

    // Monte-Carlo X(Q) fraction against the union-bound shape.
    const int n = 2, C0 = 2, k = 4;
    const double c = 0.05, N = 4.0;
    const Region X = Region::x_set(Q, c, C0, k, N);
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    long in = 0;
    const long samples = 200000;
    for (long i = 0; i < samples; ++i) {
        const double x[2] = {u(rng), u(rng)};
        in += X.contains(x, u(rng)) ? 1 : 0;
    }
    double sum = 0.0;
    for (int j = C0; j <= k; ++j) sum += std::pow(2.0, -(k - j) / N);
    CHECK(static_cast<double>(in) / samples >= 1.0 - 3.0 * (n + 1) * c * sum);
}

TEST_CASE("region quadrature")
{
    const double R = 3.0;
    const Region Q = Region::cube({{0.0, 0.0}, 0.0, R});
    const auto one = [](std::span<const double>, double) { return 1.0; };
    const QuadResult r = region_quadrature(Q, one, 16.0);
    CHECK(r.value == doctest::Approx(R * R * R).epsilon(1e-3));

    const Region cone = Region::cone({{0.0, 0.0}, 0.0, 0.5, ConeColor::Purple});
    CHECK_THROWS_AS(region_quadrature(cone, one, 4.0), Error);
    const Region both = cone & Q;
    const QuadResult v = region_quadrature(both, one, 16.0);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-R / 2, R / 2);
    long in = 0;
    const long samples = 400000;
    for (long i = 0; i < samples; ++i) {
        const double x[2] = {u(rng), u(rng)};
        in += both.contains(x, u(rng)) ? 1 : 0;
    }
    const double mc = R * R * R * static_cast<double>(in) / samples;
    CHECK(std::abs(v.value - mc) <= 0.02 * mc);

    // |plane wave|^2 integrates to the volume.
    const auto plane = [](std::span<const double> x, double t) {
        return std::norm(std::exp(Complex(0.0, kTwoPi * (1.5 * x[0] + 0.25 * x[1] + 1.52 * t))));
    };
    const QuadResult pw = region_quadrature(both, plane, 16.0);
    CHECK(pw.value == doctest::Approx(v.value).epsilon(1e-3));

    const Region disk = Region::disk({{0.0, 0.0}, 0.3, 1.0});
    const QuadResult dq = region_quadrature(disk, one, 64.0);
    CHECK(dq.value == doctest::Approx(kPi).epsilon(5e-3));
    CHECK(dq.error_estimate < 0.05);
}

TEST_CASE("quadrature is independent of the thread count")
{
    const Region reg = Region::cube_annulus({{0.0, 0.0}, 0.0, 1.0}, 1.0, 4.0);
    const auto f = [](std::span<const double> x, double t) { return std::sin(x[0] * 3.1) + x[1] * t; };
    const int saved = thread_count();
    set_thread_count(1);
    const double a = region_quadrature(reg, f, 8.0).value;
    set_thread_count(3);
    const double b = region_quadrature(reg, f, 8.0).value;
    set_thread_count(saved);
    CHECK(a == b);
}

TEST_CASE("region JSON round trip")
{
    const Region r = (Region::cube({{0.0, 1.0}, 2.0, 3.0}) &
                      Region::cone({{0.0, 0.0}, 0.0, 1.0, ConeColor::Blue})) -
                     Region::x_set({{0.0, 1.0}, 2.0, 3.0}, 0.1, 1, 3, 4.0);
    const auto j = r.to_json();
    const Region back = region_from_json(nlohmann::json::parse(j.dump()));
    CHECK(back.to_json() == j);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 4.0);
    for (int i = 0; i < 1000; ++i) {
        const double x[2] = {u(rng), u(rng)};
        const double t = u(rng);
        CHECK(back.contains(x, t) == r.contains(x, t));
    }
}
