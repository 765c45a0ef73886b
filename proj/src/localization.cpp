#include "conewave/localization.hpp"

#include <algorithm>
#include <cmath>

#include "conewave/field.hpp"

namespace conewave {

namespace {

// C^6 polynomial step of degree 13: 0 for u <= 0, 1 for u >= 1, with six
// vanishing derivatives at both ends.
double smooth_step(double u)
{
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    constexpr int m = 6;
    double sum = 0.0, binom_a = 1.0, pw = 1.0;
    for (int k = 0; k <= m; ++k) {
        // binom(m + k, k) * binom(2m + 1, m - k) * (-u)^k
        double binom_b = 1.0;
        for (int i = 0; i < m - k; ++i) binom_b = binom_b * (2 * m + 1 - i) / (i + 1);
        sum += binom_a * binom_b * pw;
        binom_a = binom_a * (m + k + 1) / (k + 1);
        pw *= -u;
    }
    return std::pow(u, m + 1) * sum;
}

double torus_distance(std::span<const double> x, std::span<const double> c, double L)
{
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = x[i] - c[i];
        d -= L * std::round(d / L);
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace

double eta0_hat(double s, int n) { return wendland_bump(s, n); }

double ball_hat(double z, double r, int n)
{
    const double half = 0.5 * n;
    if (z * r < 1e-12) return std::pow(kPi, half) * std::pow(r, n) / std::tgamma(half + 1.0);
    return std::pow(r / z, half) * std::cyl_bessel_j(half, kTwoPi * r * z);
}

double smoothing_radius(int k, double r, double N)
{
    const double s = std::ldexp(1.0, k);
    return std::pow(s * r, 1.0 - 1.0 / N) / s;
}

EtaGrid make_eta(const TorusDomain& domain, double r)
{
    domain.validate();
    const int G = domain.grid_points;
    const double h = domain.period / G;
    if (r < 4.0 * h) fail(ErrorKind::GridTooCoarse, "eta radius is below four grid cells");
    const int n = domain.n;
    const double L = domain.period;
    EtaGrid e;
    e.r = r;
    e.grid = G;
    e.spacing = h;
    // Coefficients of the periodised eta_r: L^{-n} eta0_hat(r m / L).
    std::vector<double> xi;
    std::vector<Complex> amp;
    double leak = 0.0;
    for_each_in_ball(n, L / r + 2.0, [&](std::span<const long> m) {
        double m2 = 0.0;
        for (long v : m) m2 += static_cast<double>(v * v);
        const double z = std::sqrt(m2) / L;
        const double c = eta0_hat(r * z, n) / std::pow(L, n);
        if (z >= 1.0 / r) leak = std::max(leak, std::abs(c));
        if (c == 0.0) return;
        for (long v : m) xi.push_back(static_cast<double>(v) / L);
        amp.emplace_back(c, 0.0);
    });
    e.max_leak = leak;
    std::size_t total = 1;
    for (int d = 0; d < n; ++d) total *= static_cast<std::size_t>(G);
    std::vector<Complex> folded(total);
    for (std::size_t i = 0; i < amp.size(); ++i) {
        std::size_t slot = 0;
        for (int d = 0; d < n; ++d) {
            long v = std::lround(xi[i * n + d] * L) % G;
            if (v < 0) v += G;
            slot = slot * static_cast<std::size_t>(G) + static_cast<std::size_t>(v);
        }
        folded[slot] += amp[i];
    }
    const std::vector<Complex> vals = inverse_fft(folded, n, G);
    e.values.resize(total);
    for (std::size_t p = 0; p < total; ++p) e.values[p] = vals[p].real();
    e.mass = pairwise_sum(e.values) * std::pow(h, n);
    e.min_value = *std::min_element(e.values.begin(), e.values.end());
    return e;
}

SmoothCutoff::SmoothCutoff(const TorusDomain& domain, const Disk& disk, double rho)
    : domain_(domain), disk_(disk), rho_(rho)
{
    const int n = domain.n;
    const double L = domain.period;
    if (2.0 * disk.radius >= L) fail(ErrorKind::RegionExceedsTorus, "disk does not fit in the torus");
    for_each_in_ball(n, L / rho, [&](std::span<const long> m) {
        double m2 = 0.0, ph = 0.0;
        for (int d = 0; d < n; ++d) {
            m2 += static_cast<double>(m[d] * m[d]);
            ph += disk.center[d] * static_cast<double>(m[d]) / L;
        }
        const double z = std::sqrt(m2) / L;
        const double mag = ball_hat(z, disk.radius, n) * eta0_hat(rho * z, n) / std::pow(L, n);
        if (mag == 0.0) return;
        idx_.insert(idx_.end(), m.begin(), m.end());
        coeffs_.push_back(mag * unit_phase(-ph));
    });
}

double SmoothCutoff::value(std::span<const double> x) const
{
    const int n = domain_.n;
    Complex s = 0.0;
    for (std::size_t i = 0; i < coeffs_.size(); ++i) {
        double ph = 0.0;
        for (int d = 0; d < n; ++d) ph += x[d] * static_cast<double>(idx_[i * n + d]) / domain_.period;
        s += coeffs_[i] * unit_phase(ph);
    }
    return s.real();
}

std::vector<double> SmoothCutoff::radial_profile(std::span<const double> s) const
{
    std::vector<double> out(s.size());
    parallel_for(s.size(), [&](std::size_t i) {
        std::vector<double> x = disk_.center;
        x[0] += s[i];
        out[i] = value(x);
    });
    return out;
}

std::vector<double> SmoothCutoff::grid_values(int G) const
{
    const int n = domain_.n;
    std::size_t total = 1;
    for (int d = 0; d < n; ++d) total *= static_cast<std::size_t>(G);
    std::vector<double> out(total);
    const double h = domain_.period / G;
    parallel_for(total, [&](std::size_t p) {
        std::vector<double> x(static_cast<std::size_t>(n));
        std::size_t f = p;
        for (int d = n - 1; d >= 0; --d) {
            x[d] = h * static_cast<double>(f % static_cast<std::size_t>(G));
            f /= static_cast<std::size_t>(G);
        }
        out[p] = value(x);
    });
    return out;
}

double EvolutionSymbol::operator()(std::span<const double> xi, int k) const
{
    const double rho = norm2(xi) * std::ldexp(1.0, -k);
    double radial;
    if (rho <= 0.5 || rho >= 4.0) return 0.0;
    if (rho < 1.0)
        radial = smooth_step((rho - 0.5) / 0.5);
    else if (rho <= 2.0)
        radial = 1.0;
    else
        radial = smooth_step((4.0 - rho) / 2.0);
    const double theta = angle_to_e1(xi);
    double angular;
    if (theta <= kPi / 8)
        angular = 1.0;
    else if (theta >= kPi / 4)
        return 0.0;
    else
        angular = smooth_step((kPi / 4 - theta) / (kPi / 8));
    return radial * angular;
}

std::vector<Complex> propagation_kernel(const TorusDomain& domain, double t, int G)
{
    const int n = domain.n;
    const double L = domain.period;
    const EvolutionSymbol a;
    // Lattice frequencies folded modulo G; exact at the grid points.
    std::size_t total = 1;
    for (int d = 0; d < n; ++d) total *= static_cast<std::size_t>(G);
    std::vector<Complex> folded(total);
    for_each_in_ball(n, 4.0 * L, [&](std::span<const long> m) {
        std::vector<double> xi(static_cast<std::size_t>(n));
        for (int d = 0; d < n; ++d) xi[d] = static_cast<double>(m[d]) / L;
        const double av = a(xi);
        if (av == 0.0) return;
        std::size_t s = 0;
        for (int d = 0; d < n; ++d) {
            long r = m[d] % G;
            if (r < 0) r += G;
            s = s * static_cast<std::size_t>(G) + static_cast<std::size_t>(r);
        }
        folded[s] += av * unit_phase(t * norm2(xi)) / std::pow(L, n);
    });
    return inverse_fft(folded, n, G);
}

KernelDecay kernel_decay(const TorusDomain& domain, double t, int G, double d_near, double d_far,
                         double wedge)
{
    const std::vector<Complex> K = propagation_kernel(domain, t, G);
    const int n = domain.n;
    const double L = domain.period, h = L / G;
    KernelDecay out;
    std::vector<double> x(static_cast<std::size_t>(n)), img(static_cast<std::size_t>(n));
    const std::vector<double> origin(static_cast<std::size_t>(n), 0.0);
    int images = 1;
    for (int d = 0; d < n; ++d) images *= 3;
    for (std::size_t p = 0; p < K.size(); ++p) {
        std::size_t f = p;
        for (int d = n - 1; d >= 0; --d) {
            double v = h * static_cast<double>(f % static_cast<std::size_t>(G));
            if (v >= 0.5 * L) v -= L;
            x[d] = v;
            f /= static_cast<std::size_t>(G);
        }
        double dist = std::numeric_limits<double>::infinity();
        double dir = 0.0;
        for (int im = 0; im < images; ++im) {
            int q = im;
            for (int d = 0; d < n; ++d) {
                img[d] = -(x[d] + L * static_cast<double>(q % 3 - 1));
                q /= 3;
            }
            const double di = cone_distance(ConeColor::Red, origin, 0.0, img, -t);
            if (di < dist) {
                dist = di;
                dir = angle_to_e1(img);
            }
        }
        if (dir > wedge) continue;
        const double mag = std::abs(K[p]);
        if (dist >= d_near) out.near_sup = std::max(out.near_sup, mag);
        if (dist >= d_far) out.far_sup = std::max(out.far_sup, mag);
    }
    out.ratio = out.far_sup > 0.0 ? out.near_sup / out.far_sup : std::numeric_limits<double>::infinity();
    return out;
}

namespace {

void check_projection(const Wave& wave, const Disk& D, const LocalizationParams& p)
{
    if (static_cast<int>(D.center.size()) != wave.n())
        fail(ErrorKind::InvalidArgument, "disk dimension differs from wave");
    const double s = wave.frequency();
    if (D.radius < p.C0 / s) fail(ErrorKind::DiskTooSmall, "disk radius below C0 2^{-k}");
    if (wave.empty()) return;
    const double need = p.C0 * std::pow(s * D.radius, -1.0 + 1.0 / p.N);
    if (margin(wave) < need)
        fail(ErrorKind::MarginTooSmall, "margin " + std::to_string(margin(wave)) + " below required " +
                                            std::to_string(need));
}

}  // namespace

Wave project_disk(const Wave& wave, const Disk& D, const LocalizationParams& params)
{
    check_projection(wave, D, params);
    if (wave.empty()) return wave;
    const int n = wave.n();
    const std::size_t h = static_cast<std::size_t>(wave.hilbert_dim());
    const TorusDomain& dom = wave.domain();
    const SmoothCutoff cutoff(dom, D, smoothing_radius(wave.k(), D.radius, params.N));

    // Fourier coefficients of cutoff * phi(t_D).
    AtomAccumulator acc(dom, wave.hilbert_dim());
    std::vector<long> p(static_cast<std::size_t>(n)), q(static_cast<std::size_t>(n));
    std::vector<Complex> b(h);
    for (std::size_t i = 0; i < wave.size(); ++i) {
        const Complex tp = unit_phase(D.t * wave.temporal_frequency(i));
        for (std::size_t c = 0; c < h; ++c) b[c] = wave.amplitude(i)[c] * tp;
        for (int d = 0; d < n; ++d) p[d] = dom.lattice_index(wave.xi(i)[d]);
        for (std::size_t m = 0; m < cutoff.terms(); ++m) {
            const auto idx = cutoff.index(m);
            for (int d = 0; d < n; ++d) q[d] = p[d] + idx[d];
            acc.add(std::span<const long>(q), b, cutoff.coefficient(m));
        }
    }
    // The margin hypothesis keeps every shifted frequency inside the band where
    // a = 1; the symbol is still applied so the construction mirrors U(t - t_D).
    const Wave at_tD = acc.build(wave.color(), wave.k());
    const EvolutionSymbol a;
    std::vector<double> xi = at_tD.xi_data();
    std::vector<Complex> amp = at_tD.amplitude_data();
    for (std::size_t i = 0; i < at_tD.size(); ++i) {
        const Complex f = a(at_tD.xi(i), wave.k()) * unit_phase(-D.t * at_tD.temporal_frequency(i));
        for (std::size_t c = 0; c < h; ++c) amp[i * h + c] *= f;
    }
    return make_wave(dom, wave.color(), wave.k(), wave.hilbert_dim(), std::move(xi), std::move(amp));
}

Wave project_disk_complement(const Wave& wave, const Disk& D, const LocalizationParams& params)
{
    const Wave pd = project_disk(wave, D, params);
    AtomAccumulator acc(wave.domain(), wave.hilbert_dim());
    acc.add_wave(wave);
    acc.add_wave(pd, -1.0);
    return acc.build(wave.color(), wave.k());
}

namespace {

// Full-torus cell-centred grid aligned so that spacing divides the period.
BoxGrid torus_grid(const TorusDomain& dom, std::span<const double> centre, double per_unit)
{
    const int cells = static_cast<int>(std::lround(dom.period * per_unit));
    BoxGrid g;
    g.spacing = dom.period / cells;
    g.counts.assign(static_cast<std::size_t>(dom.n), cells);
    g.origin.resize(static_cast<std::size_t>(dom.n));
    for (int d = 0; d < dom.n; ++d) g.origin[d] = centre[d] - 0.5 * dom.period + 0.5 * g.spacing;
    return g;
}

std::vector<double> squared(std::vector<double> v)
{
    for (double& x : v) x *= x;
    return v;
}

}  // namespace

double disk_mass(const Wave& wave, const Disk& D, double per_unit)
{
    if (wave.empty()) return 0.0;
    BoxGrid g;
    const int cells = std::max(1, static_cast<int>(std::ceil(2.0 * D.radius * per_unit)));
    g.spacing = 2.0 * D.radius / cells;
    g.counts.assign(static_cast<std::size_t>(wave.n()), cells);
    g.origin.resize(static_cast<std::size_t>(wave.n()));
    for (int d = 0; d < wave.n(); ++d) g.origin[d] = D.center[d] - D.radius + 0.5 * g.spacing;
    const std::vector<double> mag2 = squared(sample_box_magnitude(wave, D.t, g));
    std::vector<double> kept(mag2.size(), 0.0);
    std::vector<double> x(static_cast<std::size_t>(wave.n()));
    for (std::size_t p = 0; p < mag2.size(); ++p) {
        g.point(p, x);
        if (D.contains(x)) kept[p] = mag2[p];
    }
    return pairwise_sum(kept) * std::pow(g.spacing, wave.n());
}

double exterior_mass(const Wave& wave, const Disk& D, double per_unit)
{
    return energy(wave) - disk_mass(wave, D, per_unit);
}

CutoffReport cutoff_report(const Wave& wave, const Disk& D, const CutoffOptions& opt)
{
    CutoffReport rep;
    const auto& P = opt.params;
    const double s = wave.frequency();
    rep.smoothing_radius = smoothing_radius(wave.k(), D.radius, P.N);
    const double shrink = std::pow(s * D.radius, -1.0 / (2.0 * P.N));
    rep.r_minus = D.radius * (1.0 - shrink);
    rep.r_plus = D.radius * (1.0 + shrink);
    rep.margin_allowance = P.C0 * std::pow(s * D.radius, -1.0 + 1.0 / P.N);
    if (wave.empty()) {
        check_projection(wave, D, P);
        return rep;
    }
    const Wave pd = project_disk(wave, D, P);
    const Wave qd = project_disk_complement(wave, D, P);
    rep.energy = energy(wave);
    rep.energy_projected = energy(pd);
    rep.energy_complement = energy(qd);
    rep.energy_minor = rep.energy_projected <= rep.energy && rep.energy_complement <= rep.energy;
    rep.margin_before = margin(wave);
    rep.margin_after = pd.empty() ? rep.margin_before : margin(pd);
    rep.margin_ok = rep.margin_after >= rep.margin_before - rep.margin_allowance - 1e-12;

    const BoxGrid g = torus_grid(wave.domain(), D.center, opt.per_unit);
    const std::vector<double> m_phi = squared(sample_box_magnitude(wave, D.t, g));
    const std::vector<double> m_pd = squared(sample_box_magnitude(pd, D.t, g));
    const std::vector<double> m_qd = squared(sample_box_magnitude(qd, D.t, g));
    std::vector<double> conc(g.size(), 0.0), van(g.size(), 0.0), plus(g.size(), 0.0), minus_ext(g.size(), 0.0);
    std::vector<double> x(static_cast<std::size_t>(wave.n()));
    for (std::size_t p = 0; p < g.size(); ++p) {
        g.point(p, x);
        const double r = torus_distance(x, D.center, wave.domain().period);
        if (r > rep.r_plus) conc[p] = std::pow(1.0 + r / D.radius, 2.0 * opt.weight_power) * m_pd[p];
        if (r <= rep.r_minus) van[p] = m_qd[p];
        if (r <= rep.r_plus) plus[p] = m_phi[p];
        if (r > rep.r_minus) minus_ext[p] = m_phi[p];
    }
    const double cell = std::pow(g.spacing, wave.n());
    const double E = rep.energy;
    rep.concentration = std::sqrt(pairwise_sum(conc) * cell / E);
    rep.vanishing = std::sqrt(pairwise_sum(van) * cell / E);
    rep.local_slack = (rep.energy_projected - pairwise_sum(plus) * cell) / E;
    rep.nonlocal_slack = (rep.energy_complement - pairwise_sum(minus_ext) * cell) / E;
    if (!rep.energy_minor) rep.flags.push_back("energy_minor");
    if (!rep.margin_ok) rep.flags.push_back("margin");
    if (rep.concentration > opt.ceiling) rep.flags.push_back("concentration");
    if (rep.vanishing > opt.ceiling) rep.flags.push_back("vanishing");
    if (rep.local_slack > opt.ceiling) rep.flags.push_back("local_energy");
    if (rep.nonlocal_slack > opt.ceiling) rep.flags.push_back("non_local_energy");
    return rep;
}

namespace {

double product_l2(const Region& region, const Wave& a, const Wave& b, double per_unit, double& err)
{
    const SliceIntegrand slice = [&](double t, const SpacetimeGrid& g) {
        BoxGrid box{g.origin, g.spacing, g.counts};
        std::vector<double> fa = sample_box_magnitude(a, t, box);
        const std::vector<double> fb = sample_box_magnitude(b, t, box);
        for (std::size_t i = 0; i < fa.size(); ++i) fa[i] = fa[i] * fa[i] * fb[i] * fb[i];
        return fa;
    };
    const QuadResult q = slice_quadrature(region, slice, per_unit);
    const double v = std::sqrt(std::max(q.value, 0.0));
    err = std::max(err, std::abs(v - std::sqrt(std::max(q.value - q.error_estimate, 0.0))));
    return v;
}

}  // namespace

HuygensReport huygens_report(const Wave& phi, const Wave& psi, const Disk& D, double R,
                             const HuygensOptions& opt)
{
    if (phi.color() != Color::Red || psi.color() != Color::Blue)
        fail(ErrorKind::InvalidArgument, "huygens_report expects red phi and blue psi");
    if (R > phi.domain().period || R > psi.domain().period)
        fail(ErrorKind::RegionExceedsTorus, "cube of side R does not fit in the torus");
    HuygensReport rep;
    if (phi.empty() || psi.empty()) return rep;
    const double C = opt.inflation, N = opt.params.N, r = D.radius;
    const double norm = std::sqrt(energy(phi) * energy(psi));
    const Wave pd = project_disk(phi, D, opt.params);
    const Wave qd = project_disk_complement(phi, D, opt.params);

    const Region small = Region::cube({D.center, D.t, r / C});
    rep.finite_propagation = product_l2(small, qd, psi, opt.per_unit, rep.error_estimate) / norm;

    const Cube big{D.center, D.t, R};
    const Region outside_cone =
        Region::cube(big) - Region::cone({D.center, D.t, C * r + std::pow(R, 1.0 / N), ConeColor::Red});
    rep.huygens = product_l2(outside_cone, pd, psi, opt.per_unit, rep.error_estimate) / norm;

    const double inner = C * r + C * std::pow(R, 1.0 / N);
    const double need = opt.params.C0 * std::pow(psi.frequency() * r, -1.0 + 1.0 / N);
    if (inner < R && r >= opt.params.C0 / psi.frequency() && margin(psi) >= need) {
        const Wave pp = project_disk(psi, D, opt.params);
        const Region ann = Region::cube_annulus(big, inner, R);
        rep.red_blue = product_l2(ann, pd, pp, opt.per_unit, rep.error_estimate) / norm;
        rep.red_blue_computed = true;
    }
    rep.error_estimate /= norm;
    return rep;
}

void to_json(nlohmann::json& j, const CutoffReport& r)
{
    j = nlohmann::json{{"energy", r.energy},
                       {"energy_projected", r.energy_projected},
                       {"energy_complement", r.energy_complement},
                       {"concentration", r.concentration},
                       {"vanishing", r.vanishing},
                       {"local_slack", r.local_slack},
                       {"nonlocal_slack", r.nonlocal_slack},
                       {"margin_before", r.margin_before},
                       {"margin_after", r.margin_after},
                       {"margin_allowance", r.margin_allowance},
                       {"smoothing_radius", r.smoothing_radius},
                       {"r_minus", r.r_minus},
                       {"r_plus", r.r_plus},
                       {"energy_minor", r.energy_minor},
                       {"margin_ok", r.margin_ok},
                       {"flags", r.flags}};
}

void to_json(nlohmann::json& j, const HuygensReport& r)
{
    j = nlohmann::json{{"finite_propagation", r.finite_propagation},
                       {"huygens", r.huygens},
                       {"red_blue", r.red_blue},
                       {"red_blue_computed", r.red_blue_computed},
                       {"error_estimate", r.error_estimate}};
}

}  // namespace conewave
