#pragma once

#include "conewave/geometry.hpp"
#include "conewave/wave.hpp"

namespace conewave {

// Maximal 1/r-separated set of unit directions in the cap {angle(omega, e_1) <= cap}.
// Cells are nearest-direction (Voronoi) cells, ties going to the lower index.
class DirectionNet {
public:
    DirectionNet() = default;
    DirectionNet(int n, double r, double cap = kPi / 4);

    int n() const { return n_; }
    double r() const { return r_; }
    double cap() const { return cap_; }
    std::size_t size() const { return dirs_.size() / static_cast<std::size_t>(std::max(n_, 1)); }
    std::span<const double> direction(std::size_t i) const
    {
        return {dirs_.data() + i * static_cast<std::size_t>(n_), static_cast<std::size_t>(n_)};
    }
    std::size_t nearest(std::span<const double> unit) const;
    double min_separation() const;
    // sup over a dense cap sample of r * distance to the nearest direction
    double max_cell_radius(int samples_per_axis = 400) const;

private:
    int n_ = 0;
    double r_ = 1.0;
    double cap_ = kPi / 4;
    std::vector<double> dirs_;
};

// Small rotations within angle 1/(2r) of the identity with smooth normalised weights.
struct Rotation {
    std::vector<double> matrix;  // row-major n x n
    double weight = 0.0;
};
std::vector<Rotation> rotation_family(int n, double r, int count = 8);

struct PacketOptions {
    int rotations = 8;
    double cap = kPi / 4;
};

// Tube index = direction slot * cells^n + row-major lattice cell.
class PacketDecomposition {
public:
    const Wave& source() const { return source_; }
    const Cube& cube() const { return cube_; }
    double c() const { return c_; }
    double R() const { return cube_.side; }
    double r() const { return r_; }                   // tube radius
    double r_scaled() const { return r_scaled_; }     // 2^k r, inverse angular separation
    double spacing() const { return spacing_; }       // lattice step of the tube bases
    int cells_per_axis() const { return cells_; }
    const DirectionNet& net() const { return net_; }
    const std::vector<Rotation>& rotations() const { return rotations_; }

    std::size_t size() const { return used_.size() * cells_total_; }
    std::size_t cells_total() const { return cells_total_; }
    std::size_t direction_index(std::size_t tube) const { return used_[tube / cells_total_]; }
    std::vector<double> base(std::size_t tube) const;
    Tube tube(std::size_t i) const;

    Wave packet(std::size_t i) const;
    // rotation-averaged angular projection of phi onto the tube's direction cell
    Wave angular_piece(std::size_t tube) const;
    // sum_T w_T phi_T, computed per direction through the combined cutoff
    // sum_x w(x) eta^x so the cost does not grow with the number of cells.
    Wave combine(std::span<const double> weights) const;
    std::vector<double> packet_energies() const;

    double dispersion_constant() const { return dispersion_constant_; }  // max r_scaled * dispersion
    double min_packet_margin() const { return min_packet_margin_; }

    friend PacketDecomposition tube_decompose(const Wave&, const Cube&, double, const PacketOptions&);
    friend std::vector<double> packet_sup(const PacketDecomposition&, std::span<const double>);

private:
    explicit PacketDecomposition(Wave source) : source_(std::move(source)) {}

    struct Piece {
        std::vector<long> index;     // lattice indices, n per atom
        std::vector<Complex> amp;    // hilbert_dim per atom, phases referred to t_Q
    };
    Wave assemble(const Piece& piece, const std::vector<Complex>& cutoff) const;

    Wave source_;
    Cube cube_;
    double c_ = 0.0, r_ = 0.0, r_scaled_ = 0.0, spacing_ = 0.0;
    int cells_ = 1;
    std::size_t cells_total_ = 1;
    DirectionNet net_;
    std::vector<Rotation> rotations_;
    std::vector<std::size_t> used_;  // net indices with a non-empty angular piece
    std::vector<Piece> pieces_;
    std::vector<long> ball_;         // cutoff lattice indices |m| < cells
    std::vector<double> ball_coeff_; // (s/L)^n eta0_hat(s|m|/L)
    double dispersion_constant_ = 0.0;
    double min_packet_margin_ = 0.0;
};

// Tube scale r = 2^{-J} R with 2^k r in [sqrt(2^k R), 2 sqrt(2^k R)).
double tube_radius(int k, double R);

PacketDecomposition tube_decompose(const Wave& phi, const Cube& Q, double c, const PacketOptions& options = {});

// Largest atom amplitude of sum_T phi_T - phi, summing materialised packets.
double reconstruction_residual(const PacketDecomposition& d);

// Row-stochastic weights m[T * groups + q0] with sum over q0 equal to 1 for each T.
struct Assignment {
    std::size_t tubes = 0;
    std::size_t groups = 0;
    std::vector<double> weight;
};
// (sum_q0 E(sum_T m_{q0,T} phi_T))^{1/2} / E(phi)^{1/2}
double bessel_check(const PacketDecomposition& d, const Assignment& m);

// Time-t mass of a packet outside the radius rho * spacing / 2 of its tube axis,
// relative to the packet energy (periodic distance on the torus).
double packet_spill(const PacketDecomposition& d, std::size_t tube, double rho, double t, int G);
// max over the given spacetime points (n + 1 numbers each) of |phi_T|, for every
// tube. All cells of one direction come out of a single K^n DFT per point.
std::vector<double> packet_sup(const PacketDecomposition& d, std::span<const double> points);
// Spacetime distance from the tube to the cube over the cube's lifespan (periodic).
double tube_cube_distance(const PacketDecomposition& d, std::size_t tube, int time_samples = 65);

// Weighted tube norms ||chi-tilde_T(t) f(t)||_2 with cutoff (1 + dist / radius)^{-power},
// radius = radius_scale * r. f is phi itself, or the tube's angular piece when
// `angular` is set.
std::vector<double> tube_weighted_norms(const PacketDecomposition& d, double t, int G, double power,
                                        bool angular = false, double radius_scale = 1.0);

// Wave tables and quilts.
struct WaveTable {
    Cube cube;
    int depth = 0;
    std::vector<Cube> cells;        // subcubes(cube, depth)
    std::vector<Wave> components;   // one per cell

    double energy() const;
    Wave stacked() const;           // direct sum as one vector-valued wave
    // components of the coarser partition Q_j(Q): direct sums of descendants
    std::vector<Wave> level(int j) const;
};

struct WaveTableOptions {
    int depth = 2;
    double per_unit = 2.0;      // quadrature density for the weights
    double decay_power = 4.0;   // desk exponent in chi-tilde_T
    PacketOptions packets;
};

struct WaveTableBuild {
    WaveTable table;
    PacketDecomposition decomposition;
    Assignment weights;          // m_{q0,T} / m_T
    double bessel_ratio = 0.0;   // (E(Phi) / E(phi))^{1/2}
};

WaveTableBuild build_wave_table(const Wave& phi, const Wave& psi, const Cube& Q, double c,
                                const WaveTableOptions& options = {});

// [Phi]_j at spacetime points (n + 1 numbers each, time last).
std::vector<double> quilt_eval(const WaveTable& table, int j, std::span<const double> points);
// ||[Phi]_j||_{L2(Q)} by midpoint quadrature in each level-j subcube.
double quilt_l2(const WaveTable& table, int j, double per_unit);
// ||(|phi| - [Phi]_depth) psi||_{L2(I^{c,depth}(Q))} / (E(phi) E(psi))^{1/2}
double table_approximation(const Wave& phi, const Wave& psi, const WaveTable& table, double c, double per_unit);

// Energy concentration E_{r,Q}(phi, psi).
struct Concentration {
    double value = 0.0;
    double global = 0.0;       // E(phi)^{1/2} E(psi)^{1/2} / 2
    double disk = 0.0;         // best ||phi||_{L2(D)} ||psi||_{L2(D)}
    std::vector<double> center;
    double t = 0.0;
};
Concentration energy_concentration(const Wave& phi, const Wave& psi, double r, const Cube& Q, double per_unit = 4.0);

void to_json(nlohmann::json& j, const Concentration& c);

}  // namespace conewave
