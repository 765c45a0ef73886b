#include "conewave/bilinear.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <unordered_map>

#include "conewave/field.hpp"

namespace conewave {

namespace {

std::uint64_t splitmix(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct Fnv {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    void bytes(const void* p, std::size_t len)
    {
        const auto* c = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= c[i];
            h *= 0x100000001b3ULL;
        }
    }
    template <class T>
    void value(const T& v) { bytes(&v, sizeof v); }
};

void check_fits(const Bounds& b, double period)
{
    for (std::size_t d = 0; d + 1 < b.lo.size(); ++d)
        if (b.hi[d] - b.lo[d] > period + 1e-9)
            fail(ErrorKind::RegionExceedsTorus, "region is wider than the torus");
}

// (integral of prod |w|^p)^{1/p} with the Richardson error carried through the root.
NormReport lp_of_product(std::span<const Wave* const> waves, const Region& region, double p, double per_unit)
{
    if (!(p >= 1.0 && p <= 2.0)) fail(ErrorKind::InvalidArgument, "p must lie in [1, 2]");
    const auto b = region.bounds();
    if (!b) fail(ErrorKind::UnboundedRegion, "norm needs a bounded region");
    for (const Wave* w : waves) check_fits(*b, w->domain().period);
    NormReport rep;
    rep.region = region.to_json();
    rep.p = p;
    rep.per_unit = per_unit;
    for (const Wave* w : waves)
        if (w->empty()) return rep;
    const SliceIntegrand slice = [&](double t, const SpacetimeGrid& g) {
        const BoxGrid box{g.origin, g.spacing, g.counts};
        std::vector<double> acc = sample_box_magnitude(*waves[0], t, box);
        for (std::size_t i = 1; i < waves.size(); ++i) {
            const std::vector<double> m = sample_box_magnitude(*waves[i], t, box);
            for (std::size_t q = 0; q < acc.size(); ++q) acc[q] *= m[q];
        }
        for (double& v : acc) v = std::pow(v, p);
        return acc;
    };
    const QuadResult q = slice_quadrature(region, slice, per_unit);
    const double I = std::max(q.value, 0.0);
    rep.value = std::pow(I, 1.0 / p);
    rep.error_estimate = std::max(std::abs(std::pow(I + q.error_estimate, 1.0 / p) - rep.value),
                                  std::abs(rep.value - std::pow(std::max(I - q.error_estimate, 0.0), 1.0 / p)));
    rep.points = q.points;
    return rep;
}

double lerp_bump(double s) { return wendland_bump(std::abs(s), 1); }

}  // namespace

SlopeFit fit_loglog(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size()) fail(ErrorKind::InvalidArgument, "fit needs matching abscissae and ordinates");
    if (x.size() < 3) fail(ErrorKind::InvalidArgument, "fit needs at least three points");
    SlopeFit f;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0)) fail(ErrorKind::InvalidArgument, "abscissae must be positive");
        f.log_x.push_back(std::log(x[i]));
        if (!(y[i] > 0.0)) {
            f.skipped = true;
            f.note = "non-positive ordinate";
        }
        f.log_y.push_back(y[i] > 0.0 ? std::log(y[i]) : 0.0);
    }
    if (f.skipped) return f;
    const double m = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += f.log_x[i];
        sy += f.log_y[i];
    }
    sx /= m;
    sy /= m;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (f.log_x[i] - sx) * (f.log_x[i] - sx);
        sxy += (f.log_x[i] - sx) * (f.log_y[i] - sy);
    }
    if (sxx <= 0.0) fail(ErrorKind::InvalidArgument, "abscissae must not all coincide");
    f.slope = sxy / sxx;
    f.intercept = sy - f.slope * sx;
    double rr = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = f.log_y[i] - f.intercept - f.slope * f.log_x[i];
        rr += e * e;
    }
    f.residual = std::sqrt(rr / m);
    return f;
}

NormReport product_lp_norm(const Wave& phi, const Wave& psi, const Region& region, double p, double per_unit)
{
    if (!(phi.domain() == psi.domain())) fail(ErrorKind::MixedDomains, "waves live on different tori");
    const Wave* w[2] = {&phi, &psi};
    return lp_of_product(w, region, p, per_unit);
}

NormReport wave_lp_norm(const Wave& phi, const Region& region, double p, double per_unit)
{
    const Wave* w[1] = {&phi};
    return lp_of_product(w, region, p, per_unit);
}

ConeEnergyReport cone_energy_check(const Wave& phi, std::span<const double> vertex, double t0,
                                   std::span<const double> R_list, double per_unit)
{
    if (phi.color() != Color::Red) fail(ErrorKind::InvalidArgument, "cone energy check expects a red wave");
    if (R_list.empty()) fail(ErrorKind::InvalidArgument, "empty R list");
    const double R_max = *std::max_element(R_list.begin(), R_list.end());
    const double side = 8.0 * R_max;
    if (side > phi.domain().period + 1e-9)
        fail(ErrorKind::RegionExceedsTorus, "truncation cube of side 8 R_max does not fit in the torus");
    const int n = phi.n();
    const Cube Q{std::vector<double>(vertex.begin(), vertex.end()), t0, side};
    Bounds b;
    for (int d = 0; d <= n; ++d) {
        b.lo.push_back(Q.lo(d));
        b.hi.push_back(Q.lo(d) + side);
    }
    const SpacetimeGrid g = make_grid(b, per_unit);
    const std::size_t nr = R_list.size(), np = g.space_size();
    std::vector<double> mass(g.times.size() * nr, 0.0), vol(g.times.size() * nr, 0.0);
    for (std::size_t i = 0; i < g.times.size(); ++i) {
        const double t = g.times[i];
        std::vector<double> m;
        if (!phi.empty()) m = sample_box_magnitude(phi, t, BoxGrid{g.origin, g.spacing, g.counts});
        std::vector<double> dist(np);
        parallel_for(np, [&](std::size_t p) {
            std::vector<double> x(static_cast<std::size_t>(n));
            g.point(p, x);
            dist[p] = cone_distance(ConeColor::Blue, vertex, t0, x, t);
        });
        for (std::size_t r = 0; r < nr; ++r) {
            std::vector<double> a(np, 0.0), v(np, 0.0);
            for (std::size_t p = 0; p < np; ++p) {
                if (dist[p] > R_list[r]) continue;
                v[p] = 1.0;
                if (!m.empty()) a[p] = m[p] * m[p];
            }
            mass[i * nr + r] = pairwise_sum(a);
            vol[i * nr + r] = pairwise_sum(v);
        }
    }
    ConeEnergyReport rep;
    rep.R.assign(R_list.begin(), R_list.end());
    for (std::size_t r = 0; r < nr; ++r) {
        std::vector<double> a(g.times.size()), v(g.times.size());
        for (std::size_t i = 0; i < g.times.size(); ++i) {
            a[i] = mass[i * nr + r];
            v[i] = vol[i * nr + r];
        }
        rep.norms.push_back(std::sqrt(pairwise_sum(a) * g.cell_volume));
        rep.volumes.push_back(pairwise_sum(v) * g.cell_volume);
    }
    if (nr >= 3) {
        rep.fit = fit_loglog(rep.R, rep.norms);
        if (phi.empty()) rep.fit.note = "zero wave";
    } else {
        rep.fit.skipped = true;
        rep.fit.note = "fewer than three radii";
    }
    return rep;
}

DoubleConeReport doublecone_l1_check(const Wave& phi, const Wave& psi, std::span<const double> vertex,
                                     double t0, double r, const Cube& Q, double per_unit)
{
    const Region region =
        Region::cone({std::vector<double>(vertex.begin(), vertex.end()), t0, r, ConeColor::Purple}) & Region::cube(Q);
    DoubleConeReport rep;
    rep.norm = product_lp_norm(phi, psi, region, 2.0, per_unit);
    const double scale = std::sqrt(r * Q.side * energy(phi) * energy(psi));
    rep.ratio = scale > 0.0 ? rep.norm.value / scale : 0.0;
    return rep;
}

std::uint64_t cell_seed(std::uint64_t seed, std::string_view experiment, std::uint64_t cell)
{
    Fnv f;
    f.bytes(experiment.data(), experiment.size());
    return splitmix(splitmix(seed ^ f.h) + cell);
}

Wave mock_red_wave(const TorusDomain& domain, double r, std::span<const double> centre, double t_c,
                   std::uint64_t seed)
{
    if (domain.n != 2) fail(ErrorKind::InvalidArgument, "mock waves are planar");
    if (!(r > 0.0)) fail(ErrorKind::InvalidArgument, "r must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> g;
    // need a couple of lattice directions across the sector at |xi| ~ 1.5
    if (1.0 / r < 2.0 / (1.5 * domain.period))
        fail(ErrorKind::InfeasibleSpec, "dispersion target is below the lattice angular resolution");
    const double half = 0.5 / r;
    const double axis = u(rng) * kPi / 16.0;
    const double L = domain.period;
    AtomAccumulator acc(domain, 1);
    std::vector<double> xi(2);
    const long lim = static_cast<long>(std::ceil(1.8 * L));
    for (long a = 0; a <= lim; ++a) {
        for (long b = -lim; b <= lim; ++b) {
            xi = {a / L, b / L};
            const double rho = norm2(xi);
            if (rho < 1.2 || rho > 1.8) continue;
            const double off = std::atan2(xi[1], xi[0]) - axis;
            if (std::abs(off) > half) continue;
            const double w = lerp_bump((rho - 1.5) / 0.3) * (0.4 + 0.6 * lerp_bump(off / (1.2 * half)));
            if (w <= 0.0) continue;
            const double jitter = 1.0 + 0.3 * g(rng);
            const Complex amp = w * jitter * unit_phase(-(xi[0] * centre[0] + xi[1] * centre[1]) - t_c * rho);
            acc.add(xi, std::span<const Complex>(&amp, 1));
        }
    }
    const Wave w = acc.build(Color::Red, 0);
    if (w.size() < 2 || angular_dispersion(w) <= 0.0)
        fail(ErrorKind::InfeasibleSpec, "dispersion target is below the lattice angular resolution");
    return w;
}

Wave mock_blue_wave(const TorusDomain& domain, int k, std::span<const double> centre, double t_c,
                    std::uint64_t seed)
{
    if (domain.n != 2) fail(ErrorKind::InvalidArgument, "mock waves are planar");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    const double s = std::ldexp(1.0, k), L = domain.period, cap = kPi / 10.0;
    AtomAccumulator acc(domain, 1);
    std::vector<double> xi(2);
    const long lim = static_cast<long>(std::ceil(1.8 * s * L));
    for (long a = 0; a <= lim; ++a) {
        for (long b = -lim; b <= lim; ++b) {
            xi = {a / L, b / L};
            const double rho = norm2(xi) / s;
            if (rho < 1.2 || rho > 1.8) continue;
            const double ang = std::atan2(xi[1], xi[0]);
            if (std::abs(ang) > cap) continue;
            const double w = lerp_bump((rho - 1.5) / 0.3) * lerp_bump(ang / cap);
            if (w <= 0.0) continue;
            const Complex amp = w * Complex(1.0 + 0.3 * g(rng), 0.3 * g(rng)) *
                                unit_phase(-(xi[0] * centre[0] + xi[1] * centre[1]) + t_c * rho * s);
            acc.add(xi, std::span<const Complex>(&amp, 1));
        }
    }
    return acc.build(Color::Blue, k);
}

namespace {

struct MockTrial {
    double ratio = 0.0;
    double local = 0.0;
    double dispersion = 0.0;
};

// Full-torus slices over [t_c - T/2, t_c + T/2]; the global integral uses the
// inner window, the local one the cubes about the crossing.
MockTrial mock_trial(const Wave& phi, const Wave& psi, std::span<const double> xc, double t_c, double r,
                     const MockOptions& opt)
{
    const TorusDomain& d = phi.domain();
    const int G = opt.grid;
    const double h = d.period / G;
    const double span = std::max(opt.window, opt.local_C * r);
    const int nt = static_cast<int>(std::ceil(span / h));
    const double dt = span / nt;
    std::vector<double> x0 = {xc[0] - 0.5 * d.period, xc[1] - 0.5 * d.period};
    std::vector<double> glob(static_cast<std::size_t>(nt), 0.0), loc(glob.size(), 0.0), fa(glob.size(), 0.0),
        fb(glob.size(), 0.0);
    for (int i = 0; i < nt; ++i) {
        const double t = t_c - 0.5 * span + (i + 0.5) * dt;
        const std::vector<Complex> a = fft_slice(phi, t, G, x0);
        const std::vector<Complex> b = fft_slice(psi, t, G, x0);
        const bool in_window = std::abs(t - t_c) < 0.5 * opt.window;
        const bool in_small = std::abs(t - t_c) < 0.5 * r;
        const bool in_big = std::abs(t - t_c) < 0.5 * opt.local_C * r;
        std::vector<double> pg(a.size(), 0.0), pl(a.size(), 0.0), pa(a.size(), 0.0), pb(a.size(), 0.0);
        for (std::size_t p = 0; p < a.size(); ++p) {
            const double ax = (static_cast<double>(p / static_cast<std::size_t>(G))) * h - 0.5 * d.period;
            const double ay = (static_cast<double>(p % static_cast<std::size_t>(G))) * h - 0.5 * d.period;
            const double prod = std::norm(a[p]) * std::norm(b[p]);
            if (in_window) pg[p] = prod;
            const double box = std::max(std::abs(ax), std::abs(ay));
            if (in_small && box < 0.5 * r) pl[p] = prod;
            if (in_big && box < 0.5 * opt.local_C * r) {
                pa[p] = std::norm(a[p]);
                pb[p] = std::norm(b[p]);
            }
        }
        glob[i] = pairwise_sum(pg);
        loc[i] = pairwise_sum(pl);
        fa[i] = pairwise_sum(pa);
        fb[i] = pairwise_sum(pb);
    }
    const double cell = h * h * dt;
    MockTrial out;
    out.ratio = std::sqrt(pairwise_sum(glob) * cell / (energy(phi) * energy(psi)));
    const double na = std::sqrt(pairwise_sum(fa) * cell), nb = std::sqrt(pairwise_sum(fb) * cell);
    if (na > 0.0 && nb > 0.0)
        out.local = std::sqrt(pairwise_sum(loc) * cell) / (std::pow(r, -1.5) * na * nb);
    out.dispersion = angular_dispersion(phi);
    return out;
}

}  // namespace

MockReport low_dispersion_l2_check(std::span<const double> r_list, const MockOptions& opt)
{
    if (opt.trials < 1) fail(ErrorKind::InvalidArgument, "need at least one trial");
    TorusDomain d{2, opt.period, opt.grid};
    d.validate();
    if (opt.local_C * *std::max_element(r_list.begin(), r_list.end()) > d.period + 1e-9)
        fail(ErrorKind::RegionExceedsTorus, "cube C r does not fit in the torus");
    MockReport rep;
    for (std::size_t ri = 0; ri < r_list.size(); ++ri) {
        const double r = r_list[ri];
        std::vector<MockTrial> trials(static_cast<std::size_t>(opt.trials));
        parallel_for(trials.size(), [&](std::size_t i) {
            const std::uint64_t cell = static_cast<std::uint64_t>(ri) * 100000ULL + i;
            std::mt19937_64 rng(cell_seed(opt.seed, "mock", cell));
            std::uniform_real_distribution<double> u(0.0, d.period);
            const std::vector<double> xc = {u(rng), u(rng)};
            const double t_c = u(rng);
            const Wave phi = mock_red_wave(d, r, xc, t_c, rng());
            const Wave psi = mock_blue_wave(d, opt.psi_k, xc, t_c, rng());
            trials[i] = mock_trial(phi, psi, xc, t_c, r, opt);
        });
        MockRow row;
        row.r = r;
        std::vector<double> ratios;
        for (const MockTrial& t : trials) {
            row.max_ratio = std::max(row.max_ratio, t.ratio);
            row.local_ratio = std::max(row.local_ratio, t.local);
            row.dispersion = std::max(row.dispersion, t.dispersion);
            ratios.push_back(t.ratio);
        }
        row.mean_ratio = pairwise_sum(ratios) / static_cast<double>(ratios.size());
        rep.rows.push_back(row);
    }
    std::vector<double> xs, ys;
    for (const MockRow& row : rep.rows) {
        xs.push_back(row.r);
        ys.push_back(row.max_ratio);
    }
    if (xs.size() >= 3) {
        rep.fit = fit_loglog(xs, ys);
    } else {
        rep.fit.skipped = true;
        rep.fit.note = "fewer than three radii";
    }

    // degenerate row: one atom each, closed form |a||b| vol^{1/2}
    const double L = d.period;
    const Complex a(0.6, 0.8), b(2.0, 0.0);
    const Wave p1 = make_wave(d, Color::Red, 0, 1, {std::round(1.5 * L) / L, 0.0}, {a});
    const Wave p2 = make_wave(d, Color::Blue, opt.psi_k, 1, {std::round(3.0 * L) / L, 0.0}, {b});
    MockOptions one = opt;
    one.local_C = 0.0;
    const std::vector<double> xc = {0.0, 0.0};
    const MockTrial t = mock_trial(p1, p2, xc, 0.0, 1.0, one);
    const double closed = std::abs(a) * std::abs(b) * std::sqrt(L * L * opt.window) /
                          std::sqrt(energy(p1) * energy(p2));
    rep.single_atom_ratio = t.ratio / closed;
    return rep;
}

double surface_convolution_oracle(double r, const OracleOptions& opt)
{
    const int n = opt.n;
    if (n < 2 || n > 3) fail(ErrorKind::InvalidArgument, "oracle supports n = 2, 3");
    if (!(r > 0.0) || !(opt.cell > 0.0) || !(opt.sample > 0.0)) fail(ErrorKind::InvalidArgument, "bad oracle scales");
    const double half = 0.5 / r, s = std::ldexp(1.0, opt.k);
    const double d1 = opt.sample * std::min(1.0, 2.0 / std::sqrt(r)), d2 = opt.sample;

    // sigma_1: lattice points in the thin sector, sigma_2: the band/sector at 2^k
    auto sample = [n](double step, double inner, double outer, double cap) {
        std::vector<double> pts;
        const double side = outer * std::sin(cap);
        const long n0 = static_cast<long>(std::ceil((outer - inner * std::cos(cap)) / step));
        const long n1 = static_cast<long>(std::ceil(side / step));
        std::vector<double> xi(static_cast<std::size_t>(n));
        auto keep = [&] {
            const double rho = norm2(xi);
            if (rho >= inner && rho <= outer && angle_to_e1(xi) <= cap) pts.insert(pts.end(), xi.begin(), xi.end());
        };
        for (long a = 0; a <= n0; ++a) {
            xi[0] = inner * std::cos(cap) + (a + 0.5) * step;
            for (long b = -n1; b <= n1; ++b) {
                xi[1] = (b + 0.5) * step;
                if (n == 2) {
                    keep();
                    continue;
                }
                for (long c = -n1; c <= n1; ++c) {
                    xi[2] = (c + 0.5) * step;
                    keep();
                }
            }
        }
        return pts;
    };
    const std::vector<double> s1 = sample(d1, 1.0, 2.0, half);
    const std::vector<double> s2 = sample(d2, s, 2.0 * s, kPi / 8.0);
    const std::size_t m1 = s1.size() / n, m2 = s2.size() / n;
    if (m1 == 0 || m2 == 0) return 0.0;
    const double w = std::pow(d1, n) * std::pow(d2, n);

    std::vector<double> lo(n + 1, 1e300), hi(n + 1, -1e300);
    std::vector<double> n1(m1), n2(m2);
    for (std::size_t i = 0; i < m1; ++i) n1[i] = norm2(std::span<const double>(&s1[i * n], n));
    for (std::size_t j = 0; j < m2; ++j) n2[j] = norm2(std::span<const double>(&s2[j * n], n));
    for (int d = 0; d < n; ++d) {
        double a0 = 1e300, a1 = -1e300, b0 = 1e300, b1 = -1e300;
        for (std::size_t i = 0; i < m1; ++i) a0 = std::min(a0, s1[i * n + d]), a1 = std::max(a1, s1[i * n + d]);
        for (std::size_t j = 0; j < m2; ++j) b0 = std::min(b0, s2[j * n + d]), b1 = std::max(b1, s2[j * n + d]);
        lo[d] = a0 + b0;
        hi[d] = a1 + b1;
    }
    lo[n] = *std::min_element(n1.begin(), n1.end()) - *std::max_element(n2.begin(), n2.end());
    hi[n] = *std::max_element(n1.begin(), n1.end()) - *std::min_element(n2.begin(), n2.end());
    if (opt.window) {
        for (int d = 0; d <= n; ++d) {
            lo[d] = std::max(lo[d], opt.window->lo[d]);
            hi[d] = std::min(hi[d], opt.window->hi[d]);
            if (lo[d] >= hi[d]) return 0.0;
        }
    }
    std::vector<long> cnt(n + 1);
    std::size_t total = 1;
    for (int d = 0; d <= n; ++d) {
        cnt[d] = std::max(1L, static_cast<long>(std::ceil((hi[d] - lo[d]) / opt.cell)));
        total *= static_cast<std::size_t>(cnt[d]);
    }
    if (total > 100000000) fail(ErrorKind::InvalidArgument, "oracle histogram too large");
    std::vector<double> hist(total, 0.0);
    for (std::size_t i = 0; i < m1; ++i) {
        for (std::size_t j = 0; j < m2; ++j) {
            std::size_t flat = 0;
            bool inside = true;
            for (int d = 0; d <= n && inside; ++d) {
                const double v = d < n ? s1[i * n + d] + s2[j * n + d] : n1[i] - n2[j];
                const long c = static_cast<long>(std::floor((v - lo[d]) / opt.cell));
                if (c < 0 || c >= cnt[d]) inside = false;
                flat = flat * static_cast<std::size_t>(cnt[d]) + static_cast<std::size_t>(std::max(c, 0L));
            }
            if (inside) hist[flat] += 1.0;
        }
    }
    const double top = *std::max_element(hist.begin(), hist.end());
    return top * w / std::pow(opt.cell, n + 1);
}

std::string family_hash(std::span<const std::pair<Wave, Wave>> family)
{
    Fnv f;
    auto add = [&](const Wave& w) {
        f.value(w.domain().n);
        f.value(w.domain().period);
        f.value(static_cast<int>(w.color()));
        f.value(w.k());
        f.value(w.hilbert_dim());
        f.bytes(w.xi_data().data(), w.xi_data().size() * sizeof(double));
        f.bytes(w.amplitude_data().data(), w.amplitude_data().size() * sizeof(Complex));
    };
    for (const auto& [a, b] : family) {
        add(a);
        add(b);
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(f.h));
    return buf;
}

ARatioReport empirical_A_ratio(std::span<const std::pair<Wave, Wave>> family, const Cube& Q, double p,
                               double per_unit, double min_margin)
{
    if (family.empty()) fail(ErrorKind::InvalidArgument, "empty family");
    for (const auto& [a, b] : family) {
        if (std::abs(energy(a) - 1.0) > 1e-6 || std::abs(energy(b) - 1.0) > 1e-6)
            fail(ErrorKind::EnergyNotNormalized, "family members must have unit energy");
        if (margin(a) < min_margin || margin(b) < min_margin)
            fail(ErrorKind::MarginTooSmall, "family member below the margin floor");
    }
    ARatioReport rep;
    rep.family_hash = family_hash(family);
    const Region region = Region::cube(Q);
    for (std::size_t i = 0; i < family.size(); ++i) {
        const double v = product_lp_norm(family[i].first, family[i].second, region, p, per_unit).value;
        rep.ratios.push_back(v);
        if (v > rep.value) {
            rep.value = v;
            rep.argmax = i;
        }
    }
    return rep;
}

ExtremizerPair kscaling_extremizer(int k, const KScalingOptions& opt)
{
    if (k < 0) fail(ErrorKind::InvalidArgument, "k must be non-negative");
    if (k > 4) fail(ErrorKind::GridTooCoarse, "k > 4 is beyond the desk grid");
    TorusDomain d{2, opt.period, opt.grid};
    d.validate();
    const int count = 1 << k;
    const double length = opt.spacing * (count - 1);
    ExtremizerPair out{zero_wave(d, Color::Red, 0), zero_wave(d, Color::Blue, k), Cube{{0.0, 0.0}, 0.0, length + 2.0 * opt.pad}};
    if (out.Q.side > d.period + 1e-9) fail(ErrorKind::RegionExceedsTorus, "extremizer tube does not fit in the torus");

    // psi: a square of side psi_side about 1.5 * 2^k e_1, localised at the origin at t = 0
    const double s = std::ldexp(1.0, k), L = d.period, c1 = 1.5 * s, hs = 0.5 * opt.psi_side;
    AtomAccumulator pa(d, 1);
    std::vector<double> xi(2);
    for (long a = static_cast<long>(std::floor((c1 - hs) * L)); a <= static_cast<long>(std::ceil((c1 + hs) * L)); ++a) {
        for (long b = static_cast<long>(std::floor(-hs * L)); b <= static_cast<long>(std::ceil(hs * L)); ++b) {
            xi = {a / L, b / L};
            const double w = lerp_bump((xi[0] - c1) / hs) * lerp_bump(xi[1] / hs);
            if (w <= 0.0 || !in_sector(xi, k)) continue;
            const Complex amp = w;
            pa.add(xi, std::span<const Complex>(&amp, 1));
        }
    }
    out.psi = normalized(pa.build(Color::Blue, k));

    // phi: the i-th component is a red packet crossing the blue tube at the i-th ball
    AtomAccumulator fa(d, count);
    for (int i = 0; i < count; ++i) {
        const double si = opt.spacing * (i - 0.5 * (count - 1));
        PacketSpec ps;
        ps.centre = {1.5, 0.0};
        ps.width = opt.phi_width;
        ps.x0 = {si, 0.0};
        ps.t0 = si;
        ps.hilbert_dim = count;
        ps.component = i;
        fa.add_wave(make_packet(d, Color::Red, 0, ps));
    }
    out.phi = normalized(fa.build(Color::Red, 0));
    return out;
}

KScalingReport k_scaling_experiment(std::span<const int> k_list, double p, const KScalingOptions& opt)
{
    KScalingReport rep;
    rep.k.assign(k_list.begin(), k_list.end());
    rep.ratios.resize(k_list.size());
    rep.errors.resize(k_list.size());
    for (std::size_t i = 0; i < k_list.size(); ++i) {
        const ExtremizerPair e = kscaling_extremizer(k_list[i], opt);
        const NormReport nr = product_lp_norm(e.phi, e.psi, Region::cube(e.Q), p, opt.per_unit);
        rep.ratios[i] = nr.value;
        rep.errors[i] = nr.error_estimate;
    }
    if (k_list.size() >= 3) {
        std::vector<double> xs;
        for (int k : k_list) xs.push_back(std::ldexp(1.0, k));
        rep.fit = fit_loglog(xs, rep.ratios);
    } else {
        rep.fit.skipped = true;
        rep.fit.note = "fewer than three k values";
    }
    return rep;
}

double quilt_product_ratio(const WaveTable& table, const Wave& psi, int j, double per_unit)
{
    const std::vector<Wave> comps = table.level(j);
    const Cube& Q = table.cube;
    const int n = Q.n();
    const long cells = std::lround(Q.side * per_unit);
    const long m = cells >> j;
    if (std::abs(Q.side * per_unit - static_cast<double>(cells)) > 1e-9 || m < 1 || (m << j) != cells)
        fail(ErrorKind::InvalidArgument, "per_unit must put a whole number of cells in every level-j subcube");
    const double h = 1.0 / per_unit;
    std::vector<double> lo(static_cast<std::size_t>(n));
    for (int d = 0; d < n; ++d) lo[d] = Q.lo(d);
    const BoxGrid whole = centered_cells(lo, Q.side, per_unit);
    const long side = 1L << j;
    const std::size_t per_layer = static_cast<std::size_t>(std::pow(side, n));
    std::vector<double> slices(static_cast<std::size_t>(cells), 0.0);
    if (psi.empty()) return 0.0;
    for (long i = 0; i < cells; ++i) {
        const double t = Q.lo(n) + (static_cast<double>(i) + 0.5) * h;
        const std::vector<double> mp = sample_box_magnitude(psi, t, whole);
        const long layer = i / m;
        std::vector<double> part(per_layer, 0.0);
        for (std::size_t s = 0; s < per_layer; ++s) {
            // spatial cell index of subcube s, last axis fastest, time index last in the ordering
            std::vector<long> cell(static_cast<std::size_t>(n));
            std::size_t rest = s;
            for (int d = n - 1; d >= 0; --d) {
                cell[d] = static_cast<long>(rest % static_cast<std::size_t>(side));
                rest /= static_cast<std::size_t>(side);
            }
            std::size_t q = 0;
            for (int d = 0; d < n; ++d) q = q * static_cast<std::size_t>(side) + static_cast<std::size_t>(cell[d]);
            q = q * static_cast<std::size_t>(side) + static_cast<std::size_t>(layer);
            if (comps[q].empty()) continue;
            std::vector<double> sub_lo(static_cast<std::size_t>(n));
            for (int d = 0; d < n; ++d) sub_lo[d] = lo[d] + static_cast<double>(cell[d] * m) * h;
            const BoxGrid box = centered_cells(sub_lo, static_cast<double>(m) * h, per_unit);
            const std::vector<double> mc = sample_box_magnitude(comps[q], t, box);
            std::vector<double> prod(mc.size());
            for (std::size_t p = 0; p < mc.size(); ++p) {
                std::size_t g = 0, r2 = p;
                std::vector<long> off(static_cast<std::size_t>(n));
                for (int d = n - 1; d >= 0; --d) {
                    off[d] = static_cast<long>(r2 % static_cast<std::size_t>(m));
                    r2 /= static_cast<std::size_t>(m);
                }
                for (int d = 0; d < n; ++d)
                    g = g * static_cast<std::size_t>(cells) + static_cast<std::size_t>(cell[d] * m + off[d]);
                prod[p] = mc[p] * mp[g];
            }
            part[s] = pairwise_sum(prod);
        }
        slices[static_cast<std::size_t>(i)] = pairwise_sum(part);
    }
    const double scale = Q.side * std::sqrt(table.energy() * energy(psi));
    return scale > 0.0 ? pairwise_sum(slices) * std::pow(h, n + 1) / scale : 0.0;
}

void to_json(nlohmann::json& j, const NormReport& r)
{
    j = nlohmann::json{{"region", r.region},     {"p", r.p},
                       {"value", r.value},       {"per_unit", r.per_unit},
                       {"error_estimate", r.error_estimate}, {"points", r.points}};
}

void to_json(nlohmann::json& j, const SlopeFit& f)
{
    j = nlohmann::json{{"log_x", f.log_x},     {"log_y", f.log_y},       {"slope", f.slope},
                       {"intercept", f.intercept}, {"residual", f.residual}, {"skipped", f.skipped},
                       {"note", f.note}};
}

}  // namespace conewave
