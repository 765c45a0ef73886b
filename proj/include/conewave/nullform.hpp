#pragma once

#include "json.hpp"

#include "conewave/wave.hpp"

namespace conewave {

// Spacetime frequency representation: atoms (xi, tau) with dim amplitudes
// each. Frequencies are real and need not sit on a lattice. cell[i] is the
// frequency volume attached to atom i (1/L^n for a wave on a torus); it is
// only used for energies of single-wave spectra.
struct Spectrum {
    int n = 2;
    int dim = 1;
    std::vector<double> freq;  // n + 1 per atom, tau last
    std::vector<Complex> amp;  // dim per atom
    std::vector<double> cell;

    std::size_t size() const { return cell.size(); }
    std::span<const double> frequency(std::size_t i) const
    {
        return {freq.data() + i * static_cast<std::size_t>(n + 1), static_cast<std::size_t>(n + 1)};
    }
    std::span<const Complex> amplitude(std::size_t i) const
    {
        return {amp.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
};

Spectrum wave_spectrum(const Wave& w);

// Joint spectrum of phi (x) psi, or of phi (x) conj(psi). One joint atom per
// pair, amplitudes a_i (x) b_j flattened with the psi index fastest.
Spectrum product_spectrum(const Wave& phi, const Wave& psi, bool conjugate_psi = false);

// Merges atoms with identical (xi, tau), adding amplitudes and keeping the first cell.
Spectrum coalesce(const Spectrum& s);

// sum_i a_i e^{2 pi i (x.xi_i + t tau_i)}
std::vector<std::vector<Complex>> evaluate(const Spectrum& s, std::span<const SpacetimePoint> points);

double spectrum_energy(const Spectrum& s);  // sum |a|^2 / cell

enum class Symbol { D0, Dplus, Dminus, Box };

const char* to_string(Symbol s) noexcept;
Symbol symbol_from_string(const std::string& s);

// |xi|, |xi| + |tau|, ||xi| - |tau||, and their product D+ D-.
double symbol_value(Symbol s, std::span<const double> freq);

inline constexpr double kSymbolFloor = 1e-9;

// Amplitudes times symbol^beta. SingularSymbol when Re beta < 0 and some
// atom has symbol value below kSymbolFloor. beta = 0 is the identity.
Spectrum apply_multiplier(const Spectrum& s, Symbol symbol, Complex beta);

// The Lorentz-conformal map
// L(xi_1, xi', tau) = ((xi_1 + tau)/2 + 4^-l (xi_1 - tau)/2, 2^-l xi', (xi_1 + tau)/2 - 4^-l (xi_1 - tau)/2)
// applied to every frequency (T_L f = f o L^*). Cells pick up the Jacobian of
// the induced map on the cone. NegativeL for l < 0.
Spectrum lorentz_rescale(const Spectrum& s, int l);
std::vector<double> lorentz_map(std::span<const double> freq, int l);
// Waves stay on their lattice only for l = 0 (identity); OffLattice otherwise.
Wave lorentz_rescale(const Wave& w, int l);

// max |amp(|Box| T_L s) - 4^-l amp(T_L |Box| s)| / max |amp(|Box| T_L s)|
double commutation_residual(const Spectrum& s, int l);

// Splits atoms into angular sectors of width 2^-l about e_1 (cells centred on
// multiples of 2^-l). Every wave lives in one dyadic band, so the band split is
// the identity. Pieces are ordered by sector index.
std::vector<Wave> sector_dyadic_split(const Wave& w, int l);

// Exact rational arithmetic on 128-bit integers; overflow is an error.
class Rational {
public:
    Rational() = default;
    Rational(long long num, long long den = 1);
    static Rational from_double(double v);   // exact binary value
    static Rational parse(const std::string& s);  // "a/b", decimal, or integer

    __int128 num() const { return num_; }
    __int128 den() const { return den_; }
    double to_double() const;
    std::string str() const;

    friend Rational operator+(const Rational& a, const Rational& b);
    friend Rational operator-(const Rational& a, const Rational& b);
    friend Rational operator*(const Rational& a, const Rational& b);
    friend Rational operator/(const Rational& a, const Rational& b);
    friend int compare(const Rational& a, const Rational& b);
    friend bool operator==(const Rational& a, const Rational& b) { return compare(a, b) == 0; }
    friend bool operator<(const Rational& a, const Rational& b) { return compare(a, b) < 0; }
    friend bool operator<=(const Rational& a, const Rational& b) { return compare(a, b) <= 0; }
    friend bool operator>(const Rational& a, const Rational& b) { return compare(a, b) > 0; }
    friend bool operator>=(const Rational& a, const Rational& b) { return compare(a, b) >= 0; }

private:
    static Rational make(__int128 num, __int128 den);
    __int128 num_ = 0;
    __int128 den_ = 1;
};

struct ExponentTuple {
    int n = 2;
    Rational p{2};
    Rational beta0{0};
    Rational beta_plus{0};
    Rational beta_minus{0};
    Rational alpha1{0};
    Rational alpha2{0};
};

struct StrictnessFlags {
    bool strict_beta_minus = true;
    bool strict_beta_0 = true;
    bool strict_alpha = true;
    bool strict_lin = true;
    bool p0_equality = true;  // beta_0 may hold with equality at p = p_0
};

struct ExponentVerdict {
    bool p_range = false;      // p_0 <= p <= 2
    bool scaling = false;
    bool beta_minus = false;
    bool beta_0 = false;
    bool alpha_1 = false;
    bool alpha_2 = false;
    bool lin = false;
    bool admissible = false;
    Rational p0;
    Rational scaling_rhs;          // alpha_1 + alpha_2 + (n+1)/p - n
    Rational beta_minus_threshold; // (n+1)/(2p) - (n-1)/2
    Rational beta_0_threshold;     // (n+3)/p - (n+1)
    Rational alpha_threshold;      // beta_- + (n-1)/2 + (n+2)(1/2 - 1/p)
    Rational lin_threshold;        // 1/2 + (n+3)/(n-1) (1/p - 1/2)
};

ExponentVerdict check_exponent_conditions(const ExponentTuple& t, const StrictnessFlags& flags = {});

ExponentTuple exponent_tuple_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const ExponentVerdict& v);

// Frequency-localised products for the sector bound: phi in
// {xi_1 in [1,2], xi_2 in [2^-l, 2^{1-l}]} red, psi in
// 2^k {-xi_1 in [1,2], xi_2 in [2^-l, 2^{1-l}]} blue, both Wendland bumps
// focused at the origin at t = 0. The product is evaluated on an
// anisotropic torus (period `period` along x_1 and period * 2^l along x_2)
// by folding joint atoms onto an FFT grid, over |t| <= time_factor * 4^l.
struct ToyOptions {
    double p = 5.0 / 3.0;
    double beta = 0.5;
    double period = 16.0;
    double time_factor = 4.0;
    double samples = 4.0;  // grid points per 2^-k
    double epsilon = 0.0;  // the 2^{k epsilon} slack in the bound
};

struct ToyCell {
    int l = 0;
    int k = 0;
    double norm = 0.0;        // || |Box|^beta (phi psi) ||_p
    double energy_phi = 0.0;
    double energy_psi = 0.0;
    double scale = 0.0;       // the sector bound's right side without its constant
    double normalized = 0.0;  // norm / scale
    double error_estimate = 0.0;  // |I(dt) - I(2 dt)| carried through the 1/p root
    std::size_t joint_atoms = 0;
};

ToyCell toy_cell(int l, int k, const ToyOptions& options = {});
std::vector<ToyCell> toy_scan(std::span<const int> ls, std::span<const int> ks, const ToyOptions& options = {});

void to_json(nlohmann::json& j, const ToyCell& c);

}  // namespace conewave
