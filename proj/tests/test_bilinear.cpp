#include "doctest.h"

#include <random>
#include <set>

#include "conewave/bilinear.hpp"
#include "support.hpp"

using namespace conewave;
using testing_support::random_wave;

namespace {

template <class F>
ErrorKind error_of(F&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::Config;
}

// atoms kept clear of the band and sector edges
Wave inner_wave(std::mt19937_64& rng, const TorusDomain& d, Color c, int atoms)
{
    std::normal_distribution<double> g;
    AtomAccumulator acc(d, 1);
    for (int i = 0; i < atoms; ++i) {
        const Complex a(g(rng), g(rng));
        acc.add(testing_support::random_sector_xi(rng, d, 0, 1.1, 1.9, kPi / 10), std::span<const Complex>(&a, 1));
    }
    return acc.build(c, 0);
}

Wave one_atom(const TorusDomain& d, Color c, int k, std::vector<double> xi, Complex a)
{
    return make_wave(d, c, k, 1, std::move(xi), {a});
}

}  // namespace

TEST_CASE("log-log slope fit")
{
    const std::vector<double> x{2.0, 4.0, 8.0, 16.0};
    std::vector<double> y;
    for (double v : x) y.push_back(3.0 * std::pow(v, 0.7));
    const SlopeFit f = fit_loglog(x, y);
    CHECK(f.slope == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(f.residual <= 1e-12);
    CHECK_FALSE(f.skipped);

    y[2] *= 1.1;
    CHECK(fit_loglog(x, y).residual > 0.01);
    const std::vector<double> zeros(4, 0.0);
    const SlopeFit z = fit_loglog(x, zeros);
    CHECK(z.skipped);
    CHECK_FALSE(z.note.empty());
    const std::vector<double> two{1.0, 2.0};
    CHECK(error_of([&] { fit_loglog(two, two); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("cell seeds are deterministic and distinct")
{
    CHECK(cell_seed(1, "mock", 0) == cell_seed(1, "mock", 0));
    std::set<std::uint64_t> seen;
    for (std::uint64_t s : {1ULL, 2ULL})
        for (const char* e : {"mock", "kscaling"})
            for (std::uint64_t c = 0; c < 50; ++c) seen.insert(cell_seed(s, e, c));
    CHECK(seen.size() == 200);
}

TEST_CASE("product norm of single atoms is the unimodular closed form")
{
    const TorusDomain d{2, 32.0, 64};
    const Complex a(0.3, -0.4), b(1.5, 2.0);
    const Wave phi = one_atom(d, Color::Red, 0, {1.5, 0.125}, a);
    const Wave psi = one_atom(d, Color::Blue, 1, {3.0, -0.25}, b);
    const Cube Q{{1.0, -2.0}, 3.0, 8.0};
    for (double p : {1.0, 1.5, 5.0 / 3.0, 2.0}) {
        const NormReport r = product_lp_norm(phi, psi, Region::cube(Q), p);
        CHECK(r.value == doctest::Approx(std::abs(a) * std::abs(b) * std::pow(Q.volume(), 1.0 / p)).epsilon(1e-12));
        CHECK(r.error_estimate <= 1e-12 * r.value);
        CHECK(r.p == p);
    }
    const Wave zero = zero_wave(d, Color::Blue, 1);
    CHECK(product_lp_norm(phi, zero, Region::cube(Q), 2.0).value == 0.0);

    const Region cone = Region::cone({{0.0, 0.0}, 0.0, 2.0, ConeColor::Red});
    CHECK(error_of([&] { product_lp_norm(phi, psi, cone, 2.0); }) == ErrorKind::UnboundedRegion);
    CHECK(error_of([&] { product_lp_norm(phi, psi, Region::cube({{0.0, 0.0}, 0.0, 40.0}), 2.0); }) ==
          ErrorKind::RegionExceedsTorus);
    CHECK(error_of([&] { product_lp_norm(phi, psi, Region::cube(Q), 0.5); }) == ErrorKind::InvalidArgument);
    const Wave other = one_atom(TorusDomain{2, 64.0, 64}, Color::Blue, 1, {3.0, 0.0}, 1.0);
    CHECK(error_of([&] { product_lp_norm(phi, other, Region::cube(Q), 2.0); }) == ErrorKind::MixedDomains);
}

TEST_CASE("product norm agrees with direct evaluation")
{
    std::mt19937_64 rng(41);
    const TorusDomain d{2, 32.0, 64};
    const Wave phi = random_wave(rng, d, Color::Red, 0, 12);
    const Wave psi = random_wave(rng, d, Color::Blue, 0, 9);
    const Region region = Region::cube({{2.0, 1.0}, -1.0, 6.0}) & Region::cone({{2.0, 1.0}, -1.0, 1.5, ConeColor::Purple});
    for (double p : {1.0, 5.0 / 3.0}) {
        const auto f = [&](std::span<const double> x, double t) {
            const double u = std::abs(testing_support::naive_value(phi, x, t)[0]);
            const double v = std::abs(testing_support::naive_value(psi, x, t)[0]);
            return std::pow(u * v, p);
        };
        const QuadResult q = region_quadrature(region, f, 4.0);
        const NormReport r = product_lp_norm(phi, psi, region, p, 4.0);
        CHECK(r.value == doctest::Approx(std::pow(q.value, 1.0 / p)).epsilon(1e-10));
    }
}

TEST_CASE("Hoelder and region monotonicity on random pairs")
{
    std::mt19937_64 rng(43);
    const TorusDomain d{2, 32.0, 64};
    const Cube Q{{0.0, 0.0}, 0.0, 6.0};
    const Cube big{{0.0, 0.0}, 0.0, 10.0};
    for (int i = 0; i < 20; ++i) {
        const Wave phi = random_wave(rng, d, Color::Red, 0, 8);
        const Wave psi = random_wave(rng, d, Color::Blue, 0, 8);
        const double l1 = product_lp_norm(phi, psi, Region::cube(Q), 1.0).value;
        const double l2 = product_lp_norm(phi, psi, Region::cube(Q), 2.0).value;
        const double lp = product_lp_norm(phi, psi, Region::cube(Q), 5.0 / 3.0).value;
        CHECK(l1 <= l2 * std::sqrt(Q.volume()) * (1.0 + 1e-12));
        // ||f||_p <= ||f||_2 |Q|^{1/p - 1/2}
        CHECK(lp <= l2 * std::pow(Q.volume(), 0.6 - 0.5) * (1.0 + 1e-12));
        // nested regions on the same grid
        CHECK(product_lp_norm(phi, psi, Region::cube(big) & Region::cube(Q), 2.0, 2.0).value <=
              product_lp_norm(phi, psi, Region::cube(big), 2.0, 2.0).value);
    }
}

TEST_CASE("Richardson estimate bounds the change under grid halving")
{
    std::mt19937_64 rng(47);
    const TorusDomain d{2, 64.0, 64};
    const Wave phi = normalized(random_wave(rng, d, Color::Red, 0, 20));
    const Wave psi = normalized(random_wave(rng, d, Color::Blue, 0, 20));
    const std::vector<Region> regions = {
        Region::cube({{0.0, 0.0}, 0.0, 12.0}),
        Region::cube({{0.0, 0.0}, 0.0, 16.0}) & Region::cone({{0.0, 0.0}, 0.0, 3.0, ConeColor::Blue}),
    };
    for (const Region& region : regions) {
        for (double p : {1.0, 2.0}) {
            const NormReport a = product_lp_norm(phi, psi, region, p, 2.0);
            const NormReport b = product_lp_norm(phi, psi, region, p, 4.0);
            CHECK(std::abs(a.value - b.value) <= 3.0 * a.error_estimate);
        }
    }
}

TEST_CASE("L1 over cubes is at most R E^1/2 E^1/2")
{
    // per time slice Cauchy-Schwarz gives ratio <= 1
    std::mt19937_64 rng(53);
    const TorusDomain d{2, 128.0, 128};
    for (double R : {16.0, 32.0, 64.0}) {
        double worst = 0.0;
        for (int i = 0; i < 4; ++i) {
            const Wave phi = normalized(random_wave(rng, d, Color::Red, 0, 20));
            const Wave psi = normalized(random_wave(rng, d, Color::Blue, 0, 20));
            worst = std::max(worst, product_lp_norm(phi, psi, Region::cube({{0.0, 0.0}, 0.0, R}), 1.0, 1.0).value / R);
        }
        CHECK(worst <= 1.0);
        CHECK(worst > 0.0);
    }
}

TEST_CASE("cone energy: zero wave, plane wave, random waves")
{
    const TorusDomain d{2, 128.0, 128};
    const std::vector<double> R{4.0, 8.0, 16.0};
    const std::vector<double> v{3.0, -5.0};

    const ConeEnergyReport z = cone_energy_check(zero_wave(d, Color::Red, 0), v, 1.0, R);
    for (double x : z.norms) CHECK(x == 0.0);
    CHECK(z.fit.skipped);
    CHECK_FALSE(z.fit.note.empty());

    // plane wave: norm = |a| vol^{1/2}, volumes checked against indicator quadrature
    const Complex a(0.6, 0.8);
    const ConeEnergyReport pw = cone_energy_check(one_atom(d, Color::Red, 0, {1.5, 0.0}, a), v, 1.0, R);
    const Cube trunc{v, 1.0, 8.0 * R.back()};
    for (std::size_t i = 0; i < R.size(); ++i) {
        CHECK(pw.norms[i] == doctest::Approx(std::abs(a) * std::sqrt(pw.volumes[i])).epsilon(1e-12));
        const Region reg = Region::cube(trunc) & Region::cone({v, 1.0, R[i], ConeColor::Blue});
        const double vol = region_quadrature(reg, [](std::span<const double>, double) { return 1.0; }, 1.0).value;
        CHECK(pw.volumes[i] == doctest::Approx(vol).epsilon(1e-12));
    }
    CHECK(pw.fit.slope >= 0.45);
    CHECK(pw.fit.slope <= 0.7);

    std::mt19937_64 rng(59);
    for (int i = 0; i < 3; ++i) {
        const Wave phi = normalized(random_wave(rng, d, Color::Red, 0, 50));
        const ConeEnergyReport r = cone_energy_check(phi, v, 1.0, R);
        CHECK(r.fit.slope <= 0.8);
        CHECK(r.fit.residual < 0.1);
    }

    CHECK(error_of([&] { cone_energy_check(one_atom(d, Color::Red, 0, {1.5, 0.0}, 1.0), v, 0.0, std::vector<double>{8.0, 16.0, 32.0}); }) ==
          ErrorKind::RegionExceedsTorus);
    CHECK(error_of([&] { cone_energy_check(zero_wave(d, Color::Blue, 0), v, 0.0, R); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("double cone norm against r^1/2 R^1/2")
{
    std::mt19937_64 rng(61);
    const TorusDomain d{2, 64.0, 64};
    const Cube Q{{0.0, 0.0}, 0.0, 64.0};
    const std::vector<double> v{0.0, 0.0};
    for (int i = 0; i < 3; ++i) {
        const Wave phi = normalized(random_wave(rng, d, Color::Red, 0, 20));
        const Wave psi = normalized(random_wave(rng, d, Color::Blue, 0, 20));
        const double full = product_lp_norm(phi, psi, Region::cube(Q), 2.0, 1.0).value / Q.side;
        const double at_R = doublecone_l1_check(phi, psi, v, 0.0, Q.side, Q, 1.0).ratio;
        CHECK(at_R <= 2.0 * full);
        CHECK(at_R >= 0.5 * full);
        std::vector<double> ratios;
        for (double r : {4.0, 8.0, 16.0}) ratios.push_back(doublecone_l1_check(phi, psi, v, 0.0, r, Q, 1.0).ratio);
        CHECK(ratios[0] <= 1.15 * ratios[1]);
        CHECK(ratios[1] <= 1.15 * ratios[2]);
        CHECK(doublecone_l1_check(phi, zero_wave(d, Color::Blue, 0), v, 0.0, 8.0, Q, 1.0).ratio == 0.0);
    }
}

TEST_CASE("mock waves have the declared dispersion")
{
    const TorusDomain d{2, 64.0, 128};
    const std::vector<double> c{5.0, -7.0};
    for (double r : {4.0, 8.0, 16.0, 32.0}) {
        const Wave w = mock_red_wave(d, r, c, 2.0, 9);
        CHECK(angular_dispersion(w) <= 1.0 / r + 1e-12);
        CHECK(w.color() == Color::Red);
        // the slab is centred at c at t = 2
        std::vector<Complex> at = evaluate(w, std::vector<SpacetimePoint>{{c, 2.0}})[0];
        std::vector<Complex> away = evaluate(w, std::vector<SpacetimePoint>{{{c[0] + 10.0, c[1]}, 2.0}})[0];
        CHECK(std::abs(at[0]) > 5.0 * std::abs(away[0]));
    }
    CHECK(mock_red_wave(d, 8.0, c, 0.0, 3).xi_data() == mock_red_wave(d, 8.0, c, 0.0, 3).xi_data());
    CHECK(error_of([&] { mock_red_wave(d, 400.0, c, 0.0, 3); }) == ErrorKind::InfeasibleSpec);
    const Wave b = mock_blue_wave(d, 1, c, 0.0, 4);
    CHECK(b.color() == Color::Blue);
    CHECK(margin(b) > 0.0);
}

TEST_CASE("low-dispersion L2 slope and the surface measure oracle")
{
    MockOptions opt;
    opt.trials = 4;
    const std::vector<double> rs{4.0, 8.0, 16.0, 32.0};
    const MockReport rep = low_dispersion_l2_check(rs, opt);
    CHECK(rep.single_atom_ratio == doctest::Approx(1.0).epsilon(1e-9));
    REQUIRE(rep.rows.size() == 4);
    CHECK(rep.fit.slope >= -0.8);
    CHECK(rep.fit.slope <= -0.2);
    for (const MockRow& row : rep.rows) {
        CHECK(row.dispersion <= 1.0 / row.r + 1e-12);
        CHECK(row.local_ratio > 0.0);
        CHECK(row.local_ratio < 2.0);
    }

    std::vector<double> ov;
    for (double r : rs) ov.push_back(surface_convolution_oracle(r));
    const SlopeFit e1 = fit_loglog(rs, ov);
    // the L2 norm squared is controlled by the convolution density
    CHECK(std::abs(0.5 * e1.slope - rep.fit.slope) <= 0.4);
}

TEST_CASE("surface measure oracle scales like r^-(n-1)")
{
    std::vector<double> v;
    for (double r : {4.0, 8.0, 16.0, 32.0}) v.push_back(surface_convolution_oracle(r) * r);
    CHECK(*std::max_element(v.begin(), v.end()) <= 4.0 * *std::min_element(v.begin(), v.end()));
    for (std::size_t i = 1; i < v.size(); ++i) {
        const double ratio = v[i] / (2.0 * v[i - 1]);
        CHECK(ratio >= 0.3);
        CHECK(ratio <= 0.8);
    }
    // a window far from every sum
    OracleOptions far;
    far.window = Bounds{{20.0, 20.0, 20.0}, {21.0, 21.0, 21.0}, false};
    CHECK(surface_convolution_oracle(8.0, far) == 0.0);
    CHECK(error_of([&] { OracleOptions o; o.n = 5; surface_convolution_oracle(8.0, o); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("empirical A(R) over declared families")
{
    const TorusDomain d{2, 64.0, 64};
    const Cube Q{{0.0, 0.0}, 0.0, 8.0};
    const Wave a = normalized(one_atom(d, Color::Red, 0, {1.5, 0.0}, Complex(2.0, 1.0)));
    const Wave b = normalized(one_atom(d, Color::Blue, 0, {1.25, 0.25}, 3.0));
    const std::vector<std::pair<Wave, Wave>> single{{a, b}};
    const ARatioReport one = empirical_A_ratio(single, Q, 5.0 / 3.0);
    const double closed = std::pow(Q.volume(), 0.6) / (d.period * d.period);
    CHECK(one.value == doctest::Approx(closed).epsilon(1e-12));
    CHECK(one.family_hash.size() == 16);

    std::mt19937_64 rng(67);
    std::vector<std::pair<Wave, Wave>> family;
    for (int i = 0; i < 6; ++i)
        family.emplace_back(normalized(inner_wave(rng, d, Color::Red, 10)),
                            normalized(inner_wave(rng, d, Color::Blue, 10)));
    // l2-noloc constant measured on the same family over a larger window
    double kappa = 0.0;
    for (const auto& [p, q] : family)
        kappa = std::max(kappa, product_lp_norm(p, q, Region::cube({{0.0, 0.0}, 0.0, 32.0}), 2.0, 1.0).value);
    const ARatioReport r2 = empirical_A_ratio(family, Q, 2.0, 1.0);
    CHECK(r2.value <= 1.5 * kappa);
    CHECK(r2.value == r2.ratios[r2.argmax]);

    double prev = 0.0;
    for (double R : {4.0, 8.0, 16.0}) {
        const double v = empirical_A_ratio(family, Cube{{0.0, 0.0}, 0.0, R}, 5.0 / 3.0, 1.0).value;
        CHECK(v >= prev);
        prev = v;
    }

    CHECK(family_hash(family) == empirical_A_ratio(family, Q, 2.0, 1.0).family_hash);
    auto changed = family;
    changed[3].second = changed[3].second.scaled(Complex(0.0, 1.0));
    CHECK(family_hash(changed) != family_hash(family));

    const std::vector<std::pair<Wave, Wave>> loose{{a.scaled(1.00001), b}};
    CHECK(error_of([&] { empirical_A_ratio(loose, Q, 2.0); }) == ErrorKind::EnergyNotNormalized);
    const Wave edge = normalized(one_atom(d, Color::Red, 0, {1.0, 0.0}, 1.0));
    const std::vector<std::pair<Wave, Wave>> thin{{edge, b}};
    CHECK(error_of([&] { empirical_A_ratio(thin, Q, 2.0); }) == ErrorKind::MarginTooSmall);
}

TEST_CASE("k scaling extremizer")
{
    const ExtremizerPair e = kscaling_extremizer(3);
    CHECK(e.phi.hilbert_dim() == 8);
    CHECK(e.psi.k() == 3);
    CHECK(energy(e.phi) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(energy(e.psi) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(error_of([] { kscaling_extremizer(5); }) == ErrorKind::GridTooCoarse);

    // component i meets psi at (s_i e_1, s_i): |phi_i| peaks there
    const KScalingOptions opt;
    for (int i : {0, 7}) {
        const double s = opt.spacing * (i - 3.5);
        const auto at = evaluate(e.phi, std::vector<SpacetimePoint>{{{s, 0.0}, s}})[0];
        double others = 0.0;
        for (int c = 0; c < 8; ++c)
            if (c != i) others = std::max(others, std::abs(at[c]));
        CHECK(std::abs(at[i]) > 20.0 * others);
    }

    const std::vector<int> ks{0, 1, 2, 3, 4};
    const KScalingReport two = k_scaling_experiment(ks, 2.0);
    CHECK(std::abs(two.fit.slope) <= 0.08);
    for (double r : two.ratios) CHECK(r == doctest::Approx(two.ratios[0]).epsilon(0.01));
    const KScalingReport p0 = k_scaling_experiment(ks, 5.0 / 3.0);
    // 1/p - 1/2 = +1/10 at p = 5/3
    CHECK(p0.fit.slope >= 0.1 - 0.15);
    CHECK(p0.fit.slope <= 0.1 + 0.15);
}

TEST_CASE("quilts gain a factor against psi at depth 3")
{
    const TorusDomain d{2, 128.0, 128};
    const double R = 32.0;
    PacketSpec a;
    a.centre = {1.5, 0.0};
    a.width = 0.12;
    a.x0 = {R / 8, R / 8};
    a.t0 = R / 8;
    PacketSpec b = a;
    b.centre = {6.0, 0.0};
    b.width = 1.0;
    const Wave phi = normalized(make_packet(d, Color::Red, 0, a));
    const Wave psi = normalized(make_packet(d, Color::Blue, 2, b));
    WaveTableOptions opt;
    opt.per_unit = 1.0;
    opt.depth = 3;
    const auto B = build_wave_table(phi, psi, Cube{{0.0, 0.0}, 0.0, R}, 0.1, opt);
    const double j0 = quilt_product_ratio(B.table, psi, 0);
    const double j3 = quilt_product_ratio(B.table, psi, 3);
    CHECK(j0 > 0.0);
    CHECK(j3 <= 0.7 * j0);
    CHECK(error_of([&] { quilt_product_ratio(B.table, psi, 3, 0.1); }) == ErrorKind::InvalidArgument);
}
