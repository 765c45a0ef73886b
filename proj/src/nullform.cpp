#include "conewave/nullform.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

namespace conewave {

Spectrum wave_spectrum(const Wave& w)
{
    Spectrum s;
    s.n = w.n();
    s.dim = w.hilbert_dim();
    const double cell = 1.0 / w.domain().volume();
    for (std::size_t i = 0; i < w.size(); ++i) {
        auto xi = w.xi(i);
        s.freq.insert(s.freq.end(), xi.begin(), xi.end());
        s.freq.push_back(w.temporal_frequency(i));
        auto a = w.amplitude(i);
        s.amp.insert(s.amp.end(), a.begin(), a.end());
        s.cell.push_back(cell);
    }
    return s;
}

Spectrum product_spectrum(const Wave& phi, const Wave& psi, bool conjugate_psi)
{
    if (phi.n() != psi.n() || phi.domain().period != psi.domain().period)
        fail(ErrorKind::MixedDomains, "phi and psi live on different tori");
    Spectrum s;
    s.n = phi.n();
    s.dim = phi.hilbert_dim() * psi.hilbert_dim();
    const std::size_t n = static_cast<std::size_t>(s.n);
    const double cell = 1.0 / phi.domain().volume();
    const double sign = conjugate_psi ? -1.0 : 1.0;
    s.freq.reserve(phi.size() * psi.size() * (n + 1));
    s.amp.reserve(phi.size() * psi.size() * static_cast<std::size_t>(s.dim));
    for (std::size_t i = 0; i < phi.size(); ++i) {
        auto xi = phi.xi(i);
        auto a = phi.amplitude(i);
        for (std::size_t j = 0; j < psi.size(); ++j) {
            auto eta = psi.xi(j);
            for (std::size_t d = 0; d < n; ++d) s.freq.push_back(xi[d] + sign * eta[d]);
            s.freq.push_back(phi.temporal_frequency(i) + sign * psi.temporal_frequency(j));
            auto b = psi.amplitude(j);
            for (const Complex& ai : a)
                for (const Complex& bj : b) s.amp.push_back(ai * (conjugate_psi ? std::conj(bj) : bj));
            s.cell.push_back(cell);
        }
    }
    return s;
}

Spectrum coalesce(const Spectrum& s)
{
    Spectrum out;
    out.n = s.n;
    out.dim = s.dim;
    std::map<std::vector<double>, std::size_t> slot;
    const std::size_t dim = static_cast<std::size_t>(s.dim);
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto f = s.frequency(i);
        std::vector<double> key(f.begin(), f.end());
        for (double& v : key)
            if (v == 0.0) v = 0.0;  // -0 and +0 merge
        auto [it, fresh] = slot.emplace(key, out.size());
        auto a = s.amplitude(i);
        if (fresh) {
            out.freq.insert(out.freq.end(), key.begin(), key.end());
            out.amp.insert(out.amp.end(), a.begin(), a.end());
            out.cell.push_back(s.cell[i]);
        } else {
            for (std::size_t c = 0; c < dim; ++c) out.amp[it->second * dim + c] += a[c];
        }
    }
    return out;
}

std::vector<std::vector<Complex>> evaluate(const Spectrum& s, std::span<const SpacetimePoint> points)
{
    std::vector<std::vector<Complex>> out(points.size());
    const std::size_t n = static_cast<std::size_t>(s.n);
    parallel_for(points.size(), [&](std::size_t p) {
        const SpacetimePoint& pt = points[p];
        if (pt.x.size() != n) fail(ErrorKind::InvalidArgument, "point dimension does not match the spectrum");
        std::vector<Complex> v(static_cast<std::size_t>(s.dim), 0.0);
        for (std::size_t i = 0; i < s.size(); ++i) {
            auto f = s.frequency(i);
            double cycles = pt.t * f[n];
            for (std::size_t d = 0; d < n; ++d) cycles += pt.x[d] * f[d];
            const Complex e = unit_phase(cycles);
            auto a = s.amplitude(i);
            for (std::size_t c = 0; c < v.size(); ++c) v[c] += a[c] * e;
        }
        out[p] = std::move(v);
    });
    return out;
}

double spectrum_energy(const Spectrum& s)
{
    KahanSum sum;
    const std::size_t dim = static_cast<std::size_t>(s.dim);
    for (std::size_t i = 0; i < s.size(); ++i) {
        double a2 = 0.0;
        for (std::size_t c = 0; c < dim; ++c) a2 += std::norm(s.amp[i * dim + c]);
        sum.add(a2 / s.cell[i]);
    }
    return sum.value();
}

const char* to_string(Symbol s) noexcept
{
    switch (s) {
    case Symbol::D0: return "D0";
    case Symbol::Dplus: return "Dplus";
    case Symbol::Dminus: return "Dminus";
    case Symbol::Box: return "Box";
    }
    return "?";
}

Symbol symbol_from_string(const std::string& s)
{
    if (s == "D0") return Symbol::D0;
    if (s == "Dplus") return Symbol::Dplus;
    if (s == "Dminus") return Symbol::Dminus;
    if (s == "Box") return Symbol::Box;
    fail(ErrorKind::InvalidArgument, "unknown symbol '" + s + "'");
}

double symbol_value(Symbol s, std::span<const double> freq)
{
    const double xi = norm2(freq.first(freq.size() - 1));
    const double tau = std::abs(freq.back());
    switch (s) {
    case Symbol::D0: return xi;
    case Symbol::Dplus: return xi + tau;
    case Symbol::Dminus: return std::abs(xi - tau);
    case Symbol::Box: return (xi + tau) * std::abs(xi - tau);
    }
    return 0.0;
}

Spectrum apply_multiplier(const Spectrum& s, Symbol symbol, Complex beta)
{
    Spectrum out = s;
    if (beta == Complex(0.0)) return out;
    const std::size_t dim = static_cast<std::size_t>(s.dim);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double m = symbol_value(symbol, s.frequency(i));
        if (beta.real() < 0.0 && m < kSymbolFloor)
            fail(ErrorKind::SingularSymbol, std::string(to_string(symbol)) + " vanishes at a joint atom");
        const Complex factor = m == 0.0 ? Complex(0.0) : std::exp(beta * std::log(m));
        for (std::size_t c = 0; c < dim; ++c) out.amp[i * dim + c] *= factor;
    }
    return out;
}

std::vector<double> lorentz_map(std::span<const double> freq, int l)
{
    if (l < 0) fail(ErrorKind::NegativeL, "l must be non-negative");
    std::vector<double> out(freq.begin(), freq.end());
    if (l == 0) return out;
    const std::size_t n = freq.size() - 1;
    const double shrink = std::ldexp(1.0, -l);
    const double u = 0.5 * (freq[0] + freq[n]);
    const double v = 0.5 * (freq[0] - freq[n]) * shrink * shrink;
    out[0] = u + v;
    for (std::size_t d = 1; d < n; ++d) out[d] = shrink * freq[d];
    out[n] = u - v;
    return out;
}

Spectrum lorentz_rescale(const Spectrum& s, int l)
{
    if (l < 0) fail(ErrorKind::NegativeL, "l must be non-negative");
    Spectrum out = s;
    if (l == 0) return out;
    const std::size_t n = static_cast<std::size_t>(s.n);
    const double shrink = std::ldexp(1.0, -l);
    const double transverse = std::pow(shrink, static_cast<double>(n - 1));
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto f = s.frequency(i);
        const std::vector<double> g = lorentz_map(f, l);
        std::copy(g.begin(), g.end(), out.freq.begin() + static_cast<std::ptrdiff_t>(i * (n + 1)));
        // Jacobian of xi -> spatial part of L(xi, tau(xi)) along the cone through the atom
        const double r = norm2(f.first(n));
        const double slope = r > 0.0 ? f[n] * f[0] / (r * r) : 0.0;
        const double a1 = 0.5 * (1.0 + slope) + shrink * shrink * 0.5 * (1.0 - slope);
        out.cell[i] = s.cell[i] * std::abs(a1) * transverse;
    }
    return out;
}

Wave lorentz_rescale(const Wave& w, int l)
{
    if (l < 0) fail(ErrorKind::NegativeL, "l must be non-negative");
    if (l > 0) fail(ErrorKind::OffLattice, "T_L with l > 0 leaves the lattice; rescale the spectrum instead");
    return w;
}

double commutation_residual(const Spectrum& s, int l)
{
    const Spectrum a = apply_multiplier(lorentz_rescale(s, l), Symbol::Box, 1.0);
    const Spectrum b = lorentz_rescale(apply_multiplier(s, Symbol::Box, 1.0), l);
    const double c = std::ldexp(1.0, -2 * l);
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.amp.size(); ++i) {
        worst = std::max(worst, std::abs(a.amp[i] - c * b.amp[i]));
        scale = std::max(scale, std::abs(a.amp[i]));
    }
    return scale > 0.0 ? worst / scale : worst;
}

std::vector<Wave> sector_dyadic_split(const Wave& w, int l)
{
    if (l < 0) fail(ErrorKind::NegativeL, "l must be non-negative");
    const std::size_t n = static_cast<std::size_t>(w.n());
    const double cells = std::ldexp(1.0, l);
    std::map<std::vector<long>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < w.size(); ++i) {
        auto xi = w.xi(i);
        std::vector<long> key;
        if (n == 2) {
            key.push_back(std::lround(std::atan2(xi[1], xi[0]) * cells));
        } else {
            const double r = norm2(xi);
            for (std::size_t d = 1; d < n; ++d) key.push_back(std::lround(xi[d] / r * cells));
        }
        groups[key].push_back(i);
    }
    std::vector<Wave> out;
    for (const auto& [key, members] : groups) {
        std::vector<double> xi;
        std::vector<Complex> amp;
        for (std::size_t i : members) {
            auto x = w.xi(i);
            xi.insert(xi.end(), x.begin(), x.end());
            auto a = w.amplitude(i);
            amp.insert(amp.end(), a.begin(), a.end());
        }
        out.push_back(make_wave(w.domain(), w.color(), w.k(), w.hilbert_dim(), std::move(xi), std::move(amp)));
    }
    return out;
}

// ---- rationals

namespace {

using i128 = __int128;

i128 abs128(i128 v) { return v < 0 ? -v : v; }

i128 gcd128(i128 a, i128 b)
{
    a = abs128(a);
    b = abs128(b);
    while (b != 0) {
        const i128 r = a % b;
        a = b;
        b = r;
    }
    return a;
}

i128 mul(i128 a, i128 b)
{
    i128 r;
    if (__builtin_mul_overflow(a, b, &r)) fail(ErrorKind::InvalidArgument, "exponent arithmetic overflow");
    return r;
}

i128 add128(i128 a, i128 b)
{
    i128 r;
    if (__builtin_add_overflow(a, b, &r)) fail(ErrorKind::InvalidArgument, "exponent arithmetic overflow");
    return r;
}

std::string str128(i128 v)
{
    if (v == 0) return "0";
    const bool neg = v < 0;
    std::string s;
    while (v != 0) {
        const int d = static_cast<int>(v % 10);
        s.push_back(static_cast<char>('0' + (d < 0 ? -d : d)));
        v /= 10;
    }
    if (neg) s.push_back('-');
    std::reverse(s.begin(), s.end());
    return s;
}

}  // namespace

Rational::Rational(long long num, long long den)
{
    *this = make(num, den);
}

Rational Rational::make(i128 num, i128 den)
{
    if (den == 0) fail(ErrorKind::InvalidArgument, "zero denominator");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    const i128 g = gcd128(num, den);
    Rational r;
    r.num_ = g > 1 ? num / g : num;
    r.den_ = g > 1 ? den / g : den;
    return r;
}

Rational Rational::from_double(double v)
{
    if (!std::isfinite(v)) fail(ErrorKind::InvalidArgument, "non-finite exponent");
    if (v == 0.0) return Rational(0);
    int e = 0;
    const double m = std::frexp(v, &e);
    const auto mant = static_cast<long long>(std::ldexp(m, 53));
    int shift = e - 53;
    i128 num = mant, den = 1;
    // strip trailing zero bits first so typical values stay small
    while (shift < 0 && (num & 1) == 0) {
        num >>= 1;
        ++shift;
    }
    if (shift > 0) {
        if (shift > 70) fail(ErrorKind::InvalidArgument, "exponent too large for exact arithmetic");
        num = mul(num, static_cast<i128>(1) << shift);
    } else if (shift < 0) {
        if (-shift > 120) fail(ErrorKind::InvalidArgument, "exponent too small for exact arithmetic");
        den = static_cast<i128>(1) << (-shift);
    }
    return make(num, den);
}

Rational Rational::parse(const std::string& text)
{
    std::string s;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
    if (s.empty()) fail(ErrorKind::InvalidArgument, "empty rational");
    const auto slash = s.find('/');
    auto integer = [&](const std::string& t) -> i128 {
        if (t.empty()) fail(ErrorKind::InvalidArgument, "malformed rational '" + text + "'");
        std::size_t i = 0;
        bool neg = false;
        if (t[0] == '-' || t[0] == '+') {
            neg = t[0] == '-';
            i = 1;
        }
        if (i == t.size()) fail(ErrorKind::InvalidArgument, "malformed rational '" + text + "'");
        i128 v = 0;
        for (; i < t.size(); ++i) {
            if (!std::isdigit(static_cast<unsigned char>(t[i])))
                fail(ErrorKind::InvalidArgument, "malformed rational '" + text + "'");
            v = add128(mul(v, 10), t[i] - '0');
        }
        return neg ? -v : v;
    };
    if (slash != std::string::npos) return make(integer(s.substr(0, slash)), integer(s.substr(slash + 1)));
    const auto dot = s.find('.');
    if (s.find_first_of("eE") != std::string::npos) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != s.size()) fail(ErrorKind::InvalidArgument, "malformed rational '" + text + "'");
        return from_double(v);
    }
    if (dot == std::string::npos) return make(integer(s), 1);
    const std::string frac = s.substr(dot + 1);
    std::string whole = s.substr(0, dot);
    if (whole.empty() || whole == "-" || whole == "+") whole += "0";
    i128 den = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) den = mul(den, 10);
    const i128 w = integer(whole);
    const i128 f = frac.empty() ? 0 : integer(frac);
    if (!frac.empty() && (frac[0] == '-' || frac[0] == '+'))
        fail(ErrorKind::InvalidArgument, "malformed rational '" + text + "'");
    const bool neg = whole[0] == '-';
    return make(add128(mul(w, den), neg ? -f : f), den);
}

double Rational::to_double() const
{
    return static_cast<double>(static_cast<long double>(num_) / static_cast<long double>(den_));
}

std::string Rational::str() const
{
    return den_ == 1 ? str128(num_) : str128(num_) + "/" + str128(den_);
}

Rational operator+(const Rational& a, const Rational& b)
{
    const i128 g = gcd128(a.den_, b.den_);
    const i128 bd = b.den_ / g;
    return Rational::make(add128(mul(a.num_, bd), mul(b.num_, a.den_ / g)), mul(a.den_, bd));
}

Rational operator-(const Rational& a, const Rational& b)
{
    Rational nb = b;
    nb.num_ = -nb.num_;
    return a + nb;
}

Rational operator*(const Rational& a, const Rational& b)
{
    const i128 g1 = gcd128(a.num_, b.den_), g2 = gcd128(b.num_, a.den_);
    const i128 d1 = g1 == 0 ? 1 : g1, d2 = g2 == 0 ? 1 : g2;
    return Rational::make(mul(a.num_ / d1, b.num_ / d2), mul(a.den_ / d2, b.den_ / d1));
}

Rational operator/(const Rational& a, const Rational& b)
{
    if (b.num_ == 0) fail(ErrorKind::InvalidArgument, "division by zero");
    return a * Rational::make(b.den_, b.num_);
}

int compare(const Rational& a, const Rational& b)
{
    const Rational d = a - b;
    return d.num_ < 0 ? -1 : (d.num_ > 0 ? 1 : 0);
}

ExponentVerdict check_exponent_conditions(const ExponentTuple& t, const StrictnessFlags& flags)
{
    if (t.n < 2) fail(ErrorKind::InvalidArgument, "n must be at least 2");
    if (t.p <= Rational(0)) fail(ErrorKind::InvalidArgument, "p must be positive");
    const Rational n(t.n);
    const Rational one(1), half(1, 2);
    const Rational inv_p = one / t.p;
    ExponentVerdict v;
    v.p0 = (n + Rational(3)) / (n + one);
    v.p_range = v.p0 <= t.p && t.p <= Rational(2);

    v.scaling_rhs = t.alpha1 + t.alpha2 + (n + one) * inv_p - n;
    v.scaling = t.beta0 + t.beta_plus + t.beta_minus == v.scaling_rhs;

    v.beta_minus_threshold = (n + one) * inv_p * half - (n - one) * half;
    v.beta_minus = flags.strict_beta_minus ? t.beta_minus > v.beta_minus_threshold
                                           : t.beta_minus >= v.beta_minus_threshold;

    v.beta_0_threshold = (n + Rational(3)) * inv_p - (n + one);
    const bool b0_equal_ok = !flags.strict_beta_0 || (flags.p0_equality && t.p == v.p0);
    v.beta_0 = b0_equal_ok ? t.beta0 >= v.beta_0_threshold : t.beta0 > v.beta_0_threshold;

    v.alpha_threshold = t.beta_minus + (n - one) * half + (n + Rational(2)) * (half - inv_p);
    v.alpha_1 = flags.strict_alpha ? t.alpha1 < v.alpha_threshold : t.alpha1 <= v.alpha_threshold;
    v.alpha_2 = flags.strict_alpha ? t.alpha2 < v.alpha_threshold : t.alpha2 <= v.alpha_threshold;

    v.lin_threshold = half + (n + Rational(3)) / (n - one) * (inv_p - half);
    const Rational sum = t.alpha1 + t.alpha2;
    v.lin = flags.strict_lin ? sum > v.lin_threshold : sum >= v.lin_threshold;

    v.admissible = v.p_range && v.scaling && v.beta_minus && v.beta_0 && v.alpha_1 && v.alpha_2 && v.lin;
    return v;
}

namespace {

Rational rational_field(const nlohmann::json& j, const char* key, bool required)
{
    if (!j.contains(key)) {
        if (required) fail(ErrorKind::InvalidArgument, std::string("missing exponent '") + key + "'");
        return Rational(0);
    }
    const auto& v = j.at(key);
    if (v.is_string()) return Rational::parse(v.get<std::string>());
    if (v.is_number_integer()) return Rational(v.get<long long>());
    if (v.is_number()) return Rational::from_double(v.get<double>());
    fail(ErrorKind::InvalidArgument, std::string("exponent '") + key + "' must be a number or a string");
}

}  // namespace

ExponentTuple exponent_tuple_from_json(const nlohmann::json& j)
{
    if (!j.is_object()) fail(ErrorKind::InvalidArgument, "exponent tuple must be an object");
    static const char* known[] = {"n", "p", "beta0", "beta_plus", "beta_minus", "alpha1", "alpha2"};
    for (const auto& [key, value] : j.items())
        if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known))
            fail(ErrorKind::InvalidArgument, "unknown exponent field '" + key + "'");
    ExponentTuple t;
    t.n = j.value("n", 2);
    t.p = rational_field(j, "p", true);
    t.beta0 = rational_field(j, "beta0", false);
    t.beta_plus = rational_field(j, "beta_plus", false);
    t.beta_minus = rational_field(j, "beta_minus", false);
    t.alpha1 = rational_field(j, "alpha1", false);
    t.alpha2 = rational_field(j, "alpha2", false);
    return t;
}

void to_json(nlohmann::json& j, const ExponentVerdict& v)
{
    j = {{"p_range", v.p_range},
         {"scaling", v.scaling},
         {"beta_minus", v.beta_minus},
         {"beta_0", v.beta_0},
         {"alpha_1", v.alpha_1},
         {"alpha_2", v.alpha_2},
         {"lin", v.lin},
         {"admissible", v.admissible},
         {"p0", v.p0.str()},
         {"scaling_rhs", v.scaling_rhs.str()},
         {"beta_minus_threshold", v.beta_minus_threshold.str()},
         {"beta_0_threshold", v.beta_0_threshold.str()},
         {"alpha_threshold", v.alpha_threshold.str()},
         {"lin_threshold", v.lin_threshold.str()}};
}

// ---- sector bound scan

namespace {

struct JointAtom {
    std::size_t index;  // flat grid slot of the spatial frequency
    Complex coeff;      // multiplied amplitude
    double tau;
};

struct Plan2d {
    fftw_plan plan = nullptr;
    ~Plan2d()
    {
        if (plan) fftw_destroy_plan(plan);
    }
};

std::mutex& fftw_planner_mutex()
{
    static std::mutex mu;
    return mu;
}

long wrap_index(long v, long G)
{
    const long r = v % G;
    return r < 0 ? r + G : r;
}

}  // namespace

ToyCell toy_cell(int l, int k, const ToyOptions& o)
{
    if (l < 0) fail(ErrorKind::NegativeL, "l must be non-negative");
    if (k < 0) fail(ErrorKind::InvalidArgument, "k must be non-negative");
    if (!(o.p >= 1.0 && o.p <= 2.0)) fail(ErrorKind::InvalidArgument, "p must lie in [1, 2]");
    const double w = std::ldexp(1.0, -l);  // sector width
    const double K = std::ldexp(1.0, k);
    const double P1 = o.period, P2 = o.period / w;
    const double h = 1.0 / (K * o.samples);
    const double g1 = P1 / h, g2 = P2 / h;
    if (std::abs(g1 - std::round(g1)) > 1e-9 || std::abs(g2 - std::round(g2)) > 1e-9)
        fail(ErrorKind::InvalidArgument, "period * samples must be an integer");
    const long G1 = std::lround(g1), G2 = std::lround(g2);
    if (G1 * G2 > (1L << 24)) fail(ErrorKind::GridTooCoarse, "toy grid too large");

    // lattice atoms: xi = (a / P1, b / P2), Wendland bumps over the sector boxes
    struct Atom {
        double x1, x2, tau;
        double amp;
        long i1, i2;
    };
    auto sector = [&](double scale, double s1, double tau_sign) {
        std::vector<Atom> atoms;
        const double c1 = 1.5 * scale, c2 = 1.5 * w * scale;
        const double r1 = 0.5 * scale, r2 = 0.5 * w * scale;
        const long a_lo = static_cast<long>(std::ceil((c1 - r1) * P1)), a_hi = static_cast<long>(std::floor((c1 + r1) * P1));
        const long b_lo = static_cast<long>(std::ceil((c2 - r2) * P2)), b_hi = static_cast<long>(std::floor((c2 + r2) * P2));
        for (long a = a_lo; a <= a_hi; ++a)
            for (long b = b_lo; b <= b_hi; ++b) {
                const double x1 = a / P1, x2 = b / P2;
                const double s = std::hypot((x1 - c1) / r1, (x2 - c2) / r2);
                const double bump = wendland_bump(s, 2);
                if (bump <= 0.0) continue;
                const double f1 = s1 * x1;
                atoms.push_back({f1, x2, tau_sign * std::hypot(f1, x2), bump, static_cast<long>(s1) * a, b});
            }
        return atoms;
    };
    const std::vector<Atom> phi = sector(1.0, 1.0, 1.0);
    const std::vector<Atom> psi = sector(K, -1.0, -1.0);
    if (phi.empty() || psi.empty()) fail(ErrorKind::InfeasibleSpec, "sector holds no lattice points");

    ToyCell cell;
    cell.l = l;
    cell.k = k;
    const double vol = P1 * P2;
    for (const Atom& a : phi) cell.energy_phi += a.amp * a.amp * vol;
    for (const Atom& a : psi) cell.energy_psi += a.amp * a.amp * vol;

    std::vector<JointAtom> joint;
    joint.reserve(phi.size() * psi.size());
    for (const Atom& a : phi)
        for (const Atom& b : psi) {
            const double z1 = a.x1 + b.x1, z2 = a.x2 + b.x2, tau = a.tau + b.tau;
            const double f[3] = {z1, z2, tau};
            const double m = symbol_value(Symbol::Box, f);
            if (o.beta < 0.0 && m < kSymbolFloor) fail(ErrorKind::SingularSymbol, "|Box| vanishes on the product");
            const double factor = o.beta == 0.0 ? 1.0 : std::pow(m, o.beta);
            const long i1 = wrap_index(a.i1 + b.i1, G1), i2 = wrap_index(a.i2 + b.i2, G2);
            joint.push_back({static_cast<std::size_t>(i1 * G2 + i2), a.amp * b.amp * factor, tau});
        }
    cell.joint_atoms = joint.size();

    const double T = o.time_factor / (w * w);
    const long steps = std::lround(T / h);
    const long slices = 2 * steps + 1;  // t = -T .. T
    const std::size_t total = static_cast<std::size_t>(G1 * G2);

    Plan2d plan;
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_complex* in = fftw_alloc_complex(total);
        fftw_complex* out = fftw_alloc_complex(total);
        plan.plan = fftw_plan_dft_2d(static_cast<int>(G1), static_cast<int>(G2), in, out, FFTW_BACKWARD, FFTW_ESTIMATE);
        fftw_free(in);
        fftw_free(out);
    }

    // Slices are split in contiguous blocks; each block restarts the phase
    // recurrence exactly, so results do not depend on the thread count.
    const long block = 32;
    const std::size_t blocks = static_cast<std::size_t>((slices + block - 1) / block);
    std::vector<double> slice_sum(static_cast<std::size_t>(slices), 0.0);
    const double half_p = 0.5 * o.p;
    parallel_for(blocks, [&](std::size_t bi) {
        const long s0 = static_cast<long>(bi) * block;
        const long s1 = std::min(slices, s0 + block);
        std::unique_ptr<fftw_complex[], void (*)(void*)> buf(fftw_alloc_complex(total), fftw_free);
        std::unique_ptr<fftw_complex[], void (*)(void*)> res(fftw_alloc_complex(total), fftw_free);
        std::vector<Complex> phase(joint.size()), step(joint.size());
        const double t0 = (s0 - steps) * h;
        for (std::size_t j = 0; j < joint.size(); ++j) {
            phase[j] = joint[j].coeff * unit_phase(t0 * joint[j].tau);
            step[j] = unit_phase(h * joint[j].tau);
        }
        auto* c = reinterpret_cast<Complex*>(buf.get());
        const auto* r = reinterpret_cast<const Complex*>(res.get());
        for (long s = s0; s < s1; ++s) {
            std::fill(c, c + total, Complex(0.0));
            for (std::size_t j = 0; j < joint.size(); ++j) {
                c[joint[j].index] += phase[j];
                phase[j] *= step[j];
            }
            fftw_execute_dft(plan.plan, buf.get(), res.get());
            KahanSum acc;
            for (std::size_t q = 0; q < total; ++q) acc.add(std::pow(std::norm(r[q]), half_p));
            slice_sum[static_cast<std::size_t>(s)] = acc.value();
        }
    });

    KahanSum fine, coarse;
    for (long s = 0; s < slices; ++s) {
        fine.add(slice_sum[static_cast<std::size_t>(s)]);
        if ((s - steps) % 2 == 0) coarse.add(slice_sum[static_cast<std::size_t>(s)]);
    }
    const double cellvol = h * h;
    const double I = fine.value() * cellvol * h, I2 = coarse.value() * cellvol * 2.0 * h;
    cell.norm = std::pow(I, 1.0 / o.p);
    const double norm2h = std::pow(I2, 1.0 / o.p);
    cell.error_estimate = std::abs(cell.norm - norm2h);

    const double n = 2.0;
    cell.scale = std::pow(2.0, o.beta * (k - 2.0 * l)) * std::pow(2.0, l * ((n + 1.0) / o.p - (n - 1.0))) *
                 std::pow(2.0, k * (1.0 / o.p - 0.5 + o.epsilon)) * std::sqrt(cell.energy_phi * cell.energy_psi);
    cell.normalized = cell.norm / cell.scale;
    return cell;
}

std::vector<ToyCell> toy_scan(std::span<const int> ls, std::span<const int> ks, const ToyOptions& options)
{
    std::vector<ToyCell> out;
    for (int l : ls)
        for (int k : ks) out.push_back(toy_cell(l, k, options));
    return out;
}

void to_json(nlohmann::json& j, const ToyCell& c)
{
    j = {{"l", c.l},
         {"k", c.k},
         {"norm", c.norm},
         {"energy_phi", c.energy_phi},
         {"energy_psi", c.energy_psi},
         {"scale", c.scale},
         {"normalized", c.normalized},
         {"error_estimate", c.error_estimate},
         {"joint_atoms", c.joint_atoms}};
}

}  // namespace conewave
