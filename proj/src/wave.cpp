#include "conewave/wave.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace conewave {

namespace {

constexpr double kSectorAngle = kPi / 8.0;

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace

Color opposite(Color c) noexcept { return c == Color::Red ? Color::Blue : Color::Red; }

const char* to_string(Color c) noexcept { return c == Color::Red ? "red" : "blue"; }

Color color_from_string(const std::string& s)
{
    if (s == "red" || s == "Red") return Color::Red;
    if (s == "blue" || s == "Blue") return Color::Blue;
    fail(ErrorKind::InvalidArgument, "unknown color '" + s + "'");
}

void TorusDomain::validate() const
{
    if (n < 1) fail(ErrorKind::InvalidArgument, "dimension must be positive");
    if (!(period > 0.0) || !std::isfinite(period))
        fail(ErrorKind::InvalidArgument, "period must be positive");
    if (grid_points < 16 || (grid_points & (grid_points - 1)) != 0)
        fail(ErrorKind::InvalidArgument, "grid_points must be a power of two >= 16");
}

bool TorusDomain::on_lattice(std::span<const double> xi, double tol) const
{
    for (double v : xi) {
        const double s = v * period;
        if (std::abs(s - std::round(s)) > tol * std::max(1.0, std::abs(s))) return false;
    }
    return true;
}

long TorusDomain::lattice_index(double xi_component) const
{
    return std::lround(xi_component * period);
}

double TorusDomain::volume() const { return std::pow(period, n); }

double angle_to_e1(std::span<const double> xi)
{
    const double r = norm2(xi);
    if (r == 0.0) return 0.0;
    double perp2 = 0.0;
    for (std::size_t i = 1; i < xi.size(); ++i) perp2 += xi[i] * xi[i];
    return std::atan2(std::sqrt(perp2), xi[0]);
}

bool in_sector(std::span<const double> xi, int k, double tol)
{
    const double scale = std::ldexp(1.0, k);
    const double r = norm2(xi) / scale;
    if (r < 1.0 - tol || r > 2.0 + tol) return false;
    return angle_to_e1(xi) <= kSectorAngle + tol;
}

double Wave::frequency() const { return std::ldexp(1.0, k_); }

std::vector<FrequencyAtom> Wave::atoms() const
{
    std::vector<FrequencyAtom> out(size());
    for (std::size_t i = 0; i < size(); ++i) {
        auto x = xi(i);
        auto a = amplitude(i);
        out[i].xi.assign(x.begin(), x.end());
        out[i].amplitude.assign(a.begin(), a.end());
    }
    return out;
}

Wave Wave::scaled(Complex factor) const
{
    Wave w = *this;
    for (auto& a : w.amp_) a *= factor;
    return w;
}

Wave make_wave(const TorusDomain& domain, Color color, int k, int hilbert_dim,
               std::vector<double> xi_flat, std::vector<Complex> amp_flat)
{
    domain.validate();
    if (k < 0) fail(ErrorKind::InvalidArgument, "frequency exponent k must be >= 0");
    if (hilbert_dim < 1) fail(ErrorKind::InvalidArgument, "hilbert_dim must be >= 1");
    const std::size_t n = static_cast<std::size_t>(domain.n);
    if (xi_flat.size() % n != 0)
        fail(ErrorKind::InvalidArgument, "frequency data is not a multiple of n");
    const std::size_t m = xi_flat.size() / n;
    if (amp_flat.size() != m * static_cast<std::size_t>(hilbert_dim))
        fail(ErrorKind::InvalidArgument, "amplitude data does not match hilbert_dim");

    Wave w;
    w.domain_ = domain;
    w.color_ = color;
    w.k_ = k;
    w.hilbert_dim_ = hilbert_dim;
    w.norms_.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::span<const double> x(xi_flat.data() + i * n, n);
        if (!domain.on_lattice(x))
            fail(ErrorKind::OffLattice, "atom " + std::to_string(i) + " is off the lattice");
        if (!in_sector(x, k))
            fail(ErrorKind::AtomOutsideSector,
                 "atom " + std::to_string(i) + " violates the band/sector constraint");
        w.norms_[i] = norm2(x);
    }
    w.xi_ = std::move(xi_flat);
    w.amp_ = std::move(amp_flat);
    return w;
}

Wave make_wave(const TorusDomain& domain, Color color, int k, int hilbert_dim,
               const std::vector<FrequencyAtom>& atoms)
{
    std::vector<double> xi;
    std::vector<Complex> amp;
    xi.reserve(atoms.size() * static_cast<std::size_t>(domain.n));
    amp.reserve(atoms.size() * static_cast<std::size_t>(std::max(hilbert_dim, 1)));
    for (const auto& a : atoms) {
        if (a.xi.size() != static_cast<std::size_t>(domain.n))
            fail(ErrorKind::InvalidArgument, "atom frequency has wrong dimension");
        if (a.amplitude.size() != static_cast<std::size_t>(hilbert_dim))
            fail(ErrorKind::InvalidArgument, "atom amplitude has wrong length");
        xi.insert(xi.end(), a.xi.begin(), a.xi.end());
        amp.insert(amp.end(), a.amplitude.begin(), a.amplitude.end());
    }
    return make_wave(domain, color, k, hilbert_dim, std::move(xi), std::move(amp));
}

Wave zero_wave(const TorusDomain& domain, Color color, int k, int hilbert_dim)
{
    return make_wave(domain, color, k, hilbert_dim, std::vector<double>{}, std::vector<Complex>{});
}

std::size_t AtomAccumulator::IndexHash::operator()(const std::vector<long>& v) const noexcept
{
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (long x : v) {
        h ^= static_cast<std::uint64_t>(x) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        h *= 0xbf58476d1ce4e5b9ULL;
    }
    return static_cast<std::size_t>(h ^ (h >> 31));
}

AtomAccumulator::AtomAccumulator(const TorusDomain& domain, int hilbert_dim)
    : domain_(domain), hilbert_dim_(hilbert_dim), scratch_(static_cast<std::size_t>(domain.n))
{
}

void AtomAccumulator::add(std::span<const double> xi, std::span<const Complex> amplitude,
                          Complex scale)
{
    for (std::size_t d = 0; d < scratch_.size(); ++d) scratch_[d] = domain_.lattice_index(xi[d]);
    std::vector<long> idx = scratch_;
    add(std::span<const long>(idx), amplitude, scale);
}

void AtomAccumulator::add(std::span<const long> index, std::span<const Complex> amplitude,
                          Complex scale)
{
    if (amplitude.size() != static_cast<std::size_t>(hilbert_dim_))
        fail(ErrorKind::InvalidArgument, "amplitude length mismatch in accumulator");
    std::vector<long> key(index.begin(), index.end());
    auto [it, inserted] = slots_.try_emplace(key, keys_.size());
    if (inserted) {
        keys_.push_back(std::move(key));
        amps_.resize(amps_.size() + amplitude.size(), Complex{});
    }
    Complex* dst = amps_.data() + it->second * static_cast<std::size_t>(hilbert_dim_);
    for (std::size_t c = 0; c < amplitude.size(); ++c) dst[c] += scale * amplitude[c];
}

void AtomAccumulator::add_wave(const Wave& w, Complex scale)
{
    if (!(w.domain() == domain_)) fail(ErrorKind::MixedDomains, "wave domain differs");
    for (std::size_t i = 0; i < w.size(); ++i) add(w.xi(i), w.amplitude(i), scale);
}

Wave AtomAccumulator::build(Color color, int k) const
{
    std::vector<std::size_t> order(keys_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return keys_[a] < keys_[b]; });
    const std::size_t h = static_cast<std::size_t>(hilbert_dim_);
    std::vector<double> xi;
    std::vector<Complex> amp;
    for (std::size_t s : order) {
        const Complex* a = amps_.data() + s * h;
        if (std::all_of(a, a + h, [](Complex v) { return v == Complex{}; })) continue;
        for (long v : keys_[s]) xi.push_back(static_cast<double>(v) / domain_.period);
        amp.insert(amp.end(), a, a + h);
    }
    return make_wave(domain_, color, k, hilbert_dim_, std::move(xi), std::move(amp));
}

Wave make_packet(const TorusDomain& domain, Color color, int k, const PacketSpec& spec)
{
    domain.validate();
    const int n = domain.n;
    if (spec.centre.size() != static_cast<std::size_t>(n))
        fail(ErrorKind::InvalidArgument, "packet centre has wrong dimension");
    if (!(spec.width > 0.0)) fail(ErrorKind::InvalidArgument, "packet width must be positive");
    if (spec.component < 0 || spec.component >= spec.hilbert_dim)
        fail(ErrorKind::InvalidArgument, "packet component out of range");
    std::vector<double> x0 = spec.x0;
    if (x0.empty()) x0.assign(static_cast<std::size_t>(n), 0.0);
    const double L = domain.period;
    const double sign = color == Color::Red ? 1.0 : -1.0;
    std::vector<long> lo(static_cast<std::size_t>(n)), hi(static_cast<std::size_t>(n));
    for (int d = 0; d < n; ++d) {
        lo[d] = static_cast<long>(std::floor((spec.centre[d] - spec.width) * L));
        hi[d] = static_cast<long>(std::ceil((spec.centre[d] + spec.width) * L));
    }
    std::vector<long> m = lo;
    std::vector<double> xi(static_cast<std::size_t>(n)), xs;
    std::vector<Complex> amps;
    const std::size_t h = static_cast<std::size_t>(spec.hilbert_dim);
    while (true) {
        double d2 = 0.0;
        for (int d = 0; d < n; ++d) {
            xi[d] = static_cast<double>(m[d]) / L;
            d2 += (xi[d] - spec.centre[d]) * (xi[d] - spec.centre[d]);
        }
        const double bump = wendland_bump(std::sqrt(d2) / spec.width, n);
        if (bump > 0.0 && in_sector(xi, k, 0.0) && atom_margin(xi, k) >= spec.min_margin) {
            double ph = -sign * spec.t0 * norm2(xi);
            for (int d = 0; d < n; ++d) ph -= x0[d] * xi[d];
            ph -= std::floor(ph);
            xs.insert(xs.end(), xi.begin(), xi.end());
            for (std::size_t c = 0; c < h; ++c)
                amps.push_back(static_cast<int>(c) == spec.component ? std::polar(bump, kTwoPi * ph) : Complex{});
        }
        int d = n - 1;
        while (d >= 0 && m[d] == hi[d]) {
            m[d] = lo[d];
            --d;
        }
        if (d < 0) break;
        ++m[d];
    }
    return make_wave(domain, color, k, spec.hilbert_dim, std::move(xs), std::move(amps));
}

Wave normalized(const Wave& w, double target)
{
    const double e = energy(w);
    if (e == 0.0) return w;
    return w.scaled(std::sqrt(target / e));
}

namespace {

void check_compatible(const Wave& a, const Wave& b)
{
    if (!(a.domain() == b.domain())) fail(ErrorKind::MixedDomains, "waves live on different tori");
    if (a.color() != b.color() || a.k() != b.k() || a.hilbert_dim() != b.hilbert_dim())
        fail(ErrorKind::InvalidArgument, "waves differ in color, frequency or hilbert_dim");
}

}  // namespace

Wave add(const Wave& a, const Wave& b)
{
    check_compatible(a, b);
    AtomAccumulator acc(a.domain(), a.hilbert_dim());
    acc.add_wave(a);
    acc.add_wave(b);
    return acc.build(a.color(), a.k());
}

Wave linear_combination(std::span<const Wave> waves, std::span<const Complex> coefficients)
{
    if (waves.empty()) fail(ErrorKind::InvalidArgument, "empty combination");
    if (waves.size() != coefficients.size())
        fail(ErrorKind::InvalidArgument, "coefficient count mismatch");
    AtomAccumulator acc(waves[0].domain(), waves[0].hilbert_dim());
    for (std::size_t i = 0; i < waves.size(); ++i) {
        check_compatible(waves[0], waves[i]);
        acc.add_wave(waves[i], coefficients[i]);
    }
    return acc.build(waves[0].color(), waves[0].k());
}

Wave stack_components(std::span<const Wave> components)
{
    if (components.empty()) fail(ErrorKind::InvalidArgument, "no components");
    const Wave& first = components[0];
    const int h = static_cast<int>(components.size());
    AtomAccumulator acc(first.domain(), h);
    std::vector<Complex> amp(static_cast<std::size_t>(h));
    for (std::size_t c = 0; c < components.size(); ++c) {
        const Wave& w = components[c];
        if (w.hilbert_dim() != 1) fail(ErrorKind::InvalidArgument, "components must be scalar");
        if (!(w.domain() == first.domain()) || w.color() != first.color() || w.k() != first.k())
            fail(ErrorKind::MixedDomains, "components differ in domain, color or frequency");
        for (std::size_t i = 0; i < w.size(); ++i) {
            std::fill(amp.begin(), amp.end(), Complex{});
            amp[c] = w.amplitude(i)[0];
            acc.add(w.xi(i), amp);
        }
    }
    return acc.build(first.color(), first.k());
}

std::vector<std::vector<Complex>> evaluate(const Wave& wave, std::span<const SpacetimePoint> points)
{
    const std::size_t n = static_cast<std::size_t>(wave.n());
    const std::size_t h = static_cast<std::size_t>(wave.hilbert_dim());
    std::vector<std::vector<Complex>> out(points.size(), std::vector<Complex>(h));
    parallel_for(points.size(), [&](std::size_t p) {
        const auto& pt = points[p];
        if (pt.x.size() != n) fail(ErrorKind::InvalidArgument, "point has wrong dimension");
        auto& v = out[p];
        for (std::size_t i = 0; i < wave.size(); ++i) {
            const auto xi = wave.xi(i);
            double phase = pt.t * wave.temporal_frequency(i);
            for (std::size_t d = 0; d < n; ++d) phase += pt.x[d] * xi[d];
            // Reduce before scaling by 2 pi to keep the argument small.
            phase -= std::floor(phase);
            const Complex e = std::polar(1.0, kTwoPi * phase);
            const auto a = wave.amplitude(i);
            for (std::size_t c = 0; c < h; ++c) v[c] += a[c] * e;
        }
    });
    return out;
}

double energy(const Wave& wave)
{
    KahanSum s;
    for (const Complex& a : wave.amplitude_data()) s.add(std::norm(a));
    return s.value() * wave.domain().volume();
}

double atom_margin(std::span<const double> xi, int k)
{
    const double rho = norm2(xi) * std::ldexp(1.0, -k);
    const double theta = angle_to_e1(xi);
    if (rho < 1.0 || rho > 2.0 || theta > kSectorAngle) return 0.0;
    // Nearest points of the excluded part of the cone: the two radial caps
    // (along the same ray) and the angular edge at aperture pi/8.
    const double radial = std::sqrt(2.0) * std::min(rho - 1.0, 2.0 - rho);
    const double cg = std::cos(kSectorAngle - theta);
    const double rs = std::clamp(0.5 * rho * (1.0 + cg), 1.0, 2.0);
    const double d2 = rho * rho + rs * rs - 2.0 * rho * rs * cg + (rho - rs) * (rho - rs);
    return std::min(radial, std::sqrt(std::max(d2, 0.0)));
}

double margin(const Wave& wave)
{
    if (wave.empty()) fail(ErrorKind::EmptyWave, "margin of an empty wave");
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < wave.size(); ++i) m = std::min(m, atom_margin(wave.xi(i), wave.k()));
    return m;
}

double angular_dispersion(const Wave& wave)
{
    if (wave.empty()) fail(ErrorKind::EmptyWave, "dispersion of an empty wave");
    const std::size_t m = wave.size();
    if (wave.n() == 2) {
        std::vector<double> ang(m);
        for (std::size_t i = 0; i < m; ++i) ang[i] = std::atan2(wave.xi(i)[1], wave.xi(i)[0]);
        const auto [lo, hi] = std::minmax_element(ang.begin(), ang.end());
        // Sector atoms span less than pi, so the extreme angles realise the diameter.
        return 2.0 * std::sin(0.5 * (*hi - *lo));
    }
    const std::size_t n = static_cast<std::size_t>(wave.n());
    std::vector<double> units(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t d = 0; d < n; ++d) units[i * n + d] = wave.xi(i)[d] / wave.frequency_norm(i);
    double best = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) {
            const double c = clamp_unit(dot({units.data() + i * n, n}, {units.data() + j * n, n}));
            best = std::max(best, std::sqrt(2.0 - 2.0 * c));
        }
    return best;
}

Wave dilate(const Wave& wave, int j)
{
    TorusDomain target = wave.domain();
    target.period = std::ldexp(target.period, -j);
    return dilate(wave, j, target);
}

Wave dilate(const Wave& wave, int j, const TorusDomain& target)
{
    if (wave.k() + j < 0) fail(ErrorKind::InvalidArgument, "dilation would give negative k");
    if (target.n != wave.n()) fail(ErrorKind::MixedDomains, "target dimension differs");
    std::vector<double> xi = wave.xi_data();
    for (double& v : xi) v = std::ldexp(v, j);
    for (std::size_t i = 0; i < wave.size(); ++i)
        if (!target.on_lattice({xi.data() + i * target.n, static_cast<std::size_t>(target.n)}))
            fail(ErrorKind::OffLattice, "dilated atom is not on the target lattice");
    return make_wave(target, wave.color(), wave.k() + j, wave.hilbert_dim(), std::move(xi),
                     wave.amplitude_data());
}

Wave time_reverse(const Wave& wave)
{
    return make_wave(wave.domain(), opposite(wave.color()), wave.k(), wave.hilbert_dim(),
                     wave.xi_data(), wave.amplitude_data());
}

void to_json(nlohmann::json& j, const TorusDomain& d)
{
    j = nlohmann::json{{"n", d.n}, {"period", d.period}, {"grid_points", d.grid_points}};
}

TorusDomain domain_from_json(const nlohmann::json& j)
{
    TorusDomain d;
    d.n = j.at("n").get<int>();
    d.period = j.at("period").get<double>();
    if (j.contains("grid_points")) d.grid_points = j.at("grid_points").get<int>();
    d.validate();
    return d;
}

void to_json(nlohmann::json& j, const Wave& w)
{
    nlohmann::json atoms = nlohmann::json::array();
    for (std::size_t i = 0; i < w.size(); ++i) {
        nlohmann::json amp = nlohmann::json::array();
        for (const Complex& a : w.amplitude(i)) amp.push_back({a.real(), a.imag()});
        const auto xi = w.xi(i);
        atoms.push_back({{"xi", std::vector<double>(xi.begin(), xi.end())}, {"amp", amp}});
    }
    j = nlohmann::json{{"n", w.n()},
                       {"period", w.domain().period},
                       {"grid_points", w.domain().grid_points},
                       {"color", to_string(w.color())},
                       {"k", w.k()},
                       {"hilbert_dim", w.hilbert_dim()},
                       {"atoms", atoms}};
}

Wave wave_from_json(const nlohmann::json& j)
{
    const TorusDomain d = domain_from_json(j);
    const Color color = color_from_string(j.at("color").get<std::string>());
    const int k = j.at("k").get<int>();
    const int h = j.value("hilbert_dim", 1);
    std::vector<double> xi;
    std::vector<Complex> amp;
    for (const auto& a : j.at("atoms")) {
        const auto x = a.at("xi").get<std::vector<double>>();
        if (x.size() != static_cast<std::size_t>(d.n))
            fail(ErrorKind::InvalidArgument, "atom xi has wrong dimension");
        xi.insert(xi.end(), x.begin(), x.end());
        const auto& am = a.at("amp");
        if (am.size() != static_cast<std::size_t>(h))
            fail(ErrorKind::InvalidArgument, "atom amp has wrong length");
        for (const auto& c : am) amp.emplace_back(c.at(0).get<double>(), c.at(1).get<double>());
    }
    return make_wave(d, color, k, h, std::move(xi), std::move(amp));
}

}  // namespace conewave
