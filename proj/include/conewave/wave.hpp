#pragma once

#include "json.hpp"

#include <unordered_map>

#include "conewave/common.hpp"

namespace conewave {

enum class Color { Red, Blue };

Color opposite(Color c) noexcept;
const char* to_string(Color c) noexcept;
Color color_from_string(const std::string& s);

// Periodic spatial torus (R/LZ)^n standing in for R^n. Frequencies live on the
// lattice Z^n / L.
struct TorusDomain {
    int n = 2;
    double period = 64.0;
    int grid_points = 128;

    void validate() const;
    bool on_lattice(std::span<const double> xi, double tol = 1e-9) const;
    long lattice_index(double xi_component) const;
    double volume() const;
    bool operator==(const TorusDomain&) const = default;
};

struct FrequencyAtom {
    std::vector<double> xi;
    std::vector<Complex> amplitude;
};

struct SpacetimePoint {
    std::vector<double> x;
    double t = 0.0;
};

// Angle between xi and e_1.
double angle_to_e1(std::span<const double> xi);

// A red or blue wave stored as finitely many on-cone frequency atoms.
// Atom data is flat: xi as size()*n doubles, amplitudes as size()*hilbert_dim.
class Wave {
public:
    const TorusDomain& domain() const noexcept { return domain_; }
    int n() const noexcept { return domain_.n; }
    Color color() const noexcept { return color_; }
    int k() const noexcept { return k_; }
    int hilbert_dim() const noexcept { return hilbert_dim_; }
    std::size_t size() const noexcept { return norms_.size(); }
    bool empty() const noexcept { return norms_.empty(); }

    std::span<const double> xi(std::size_t i) const
    {
        return {xi_.data() + i * domain_.n, static_cast<std::size_t>(domain_.n)};
    }
    std::span<const Complex> amplitude(std::size_t i) const
    {
        return {amp_.data() + i * hilbert_dim_, static_cast<std::size_t>(hilbert_dim_)};
    }
    double frequency_norm(std::size_t i) const { return norms_[i]; }
    // +|xi| for red, -|xi| for blue.
    double temporal_frequency(std::size_t i) const
    {
        return color_ == Color::Red ? norms_[i] : -norms_[i];
    }
    double frequency() const;  // 2^k

    const std::vector<double>& xi_data() const noexcept { return xi_; }
    const std::vector<Complex>& amplitude_data() const noexcept { return amp_; }
    std::vector<FrequencyAtom> atoms() const;

    Wave scaled(Complex factor) const;

    friend Wave make_wave(const TorusDomain&, Color, int, int, std::vector<double>,
                          std::vector<Complex>);

private:
    Wave() = default;

    TorusDomain domain_;
    Color color_ = Color::Red;
    int k_ = 0;
    int hilbert_dim_ = 1;
    std::vector<double> xi_;
    std::vector<Complex> amp_;
    std::vector<double> norms_;
};

// Validating constructors. Reject atoms off the lattice (OffLattice) or
// outside 2^k <= |xi| <= 2^{k+1}, angle(xi, e_1) <= pi/8 (AtomOutsideSector).
Wave make_wave(const TorusDomain& domain, Color color, int k, int hilbert_dim,
               std::vector<double> xi_flat, std::vector<Complex> amp_flat);
Wave make_wave(const TorusDomain& domain, Color color, int k, int hilbert_dim,
               const std::vector<FrequencyAtom>& atoms);
Wave zero_wave(const TorusDomain& domain, Color color, int k, int hilbert_dim = 1);

// True when xi lies in the closed band/sector of frequency 2^k.
bool in_sector(std::span<const double> xi, int k, double tol = 1e-12);

// Merges atoms by lattice position, summing amplitudes.
class AtomAccumulator {
public:
    AtomAccumulator(const TorusDomain& domain, int hilbert_dim);

    void add(std::span<const double> xi, std::span<const Complex> amplitude, Complex scale = 1.0);
    void add(std::span<const long> index, std::span<const Complex> amplitude, Complex scale = 1.0);
    void add_wave(const Wave& w, Complex scale = 1.0);
    std::size_t size() const noexcept { return slots_.size(); }

    // Atoms sorted lexicographically by lattice index; entries with every
    // amplitude component exactly zero are dropped.
    Wave build(Color color, int k) const;

private:
    struct IndexHash {
        std::size_t operator()(const std::vector<long>& v) const noexcept;
    };

    TorusDomain domain_;
    int hilbert_dim_;
    std::vector<long> scratch_;
    std::unordered_map<std::vector<long>, std::size_t, IndexHash> slots_;
    std::vector<std::vector<long>> keys_;
    std::vector<Complex> amps_;
};

// A wave packet: amplitudes wendland_bump(|xi - centre| / width) on the lattice
// points of the band/sector, phased so the packet sits at x0 at time t0.
// Atoms with margin below min_margin are dropped. With hilbert_dim > 1 the
// packet occupies the given component.
struct PacketSpec {
    std::vector<double> centre;
    double width = 0.25;
    std::vector<double> x0;
    double t0 = 0.0;
    double min_margin = 0.0;
    int hilbert_dim = 1;
    int component = 0;
};
Wave make_packet(const TorusDomain& domain, Color color, int k, const PacketSpec& spec);

// Rescales amplitudes so that energy(w) = target (zero waves are returned as is).
Wave normalized(const Wave& w, double target = 1.0);

Wave add(const Wave& a, const Wave& b);
Wave linear_combination(std::span<const Wave> waves, std::span<const Complex> coefficients);

// Vector-valued wave whose i-th component is the (scalar) i-th input.
Wave stack_components(std::span<const Wave> components);

std::vector<std::vector<Complex>> evaluate(const Wave& wave, std::span<const SpacetimePoint> points);

double energy(const Wave& wave);
double margin(const Wave& wave);
double atom_margin(std::span<const double> xi, int k);
double angular_dispersion(const Wave& wave);

// D_j: frequencies scale by 2^j, period by 2^-j, frequency exponent k -> k+j.
Wave dilate(const Wave& wave, int j);
// D_j onto a prescribed torus; OffLattice unless every scaled atom is on it.
Wave dilate(const Wave& wave, int j, const TorusDomain& target);
Wave time_reverse(const Wave& wave);

void to_json(nlohmann::json& j, const Wave& w);
Wave wave_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const TorusDomain& d);
TorusDomain domain_from_json(const nlohmann::json& j);

}  // namespace conewave
