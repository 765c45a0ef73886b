#pragma once

#include "conewave/geometry.hpp"
#include "conewave/wave.hpp"

namespace conewave {

// Fourier transform of eta_0: a compactly supported positive-definite Wendland
// function of |zeta| (support |zeta| <= 1, value 1 at the origin), so eta_0 >= 0
// with unit mass.
double eta0_hat(double radius, int n);

// Fourier transform of the indicator of the ball of radius r about the origin.
double ball_hat(double zeta_norm, double r, int n);

// Desk-scale stand-ins for the large constants.
struct LocalizationParams {
    double C0 = 2.0;
    double N = 4.0;
};

// Mollification radius 2^{-k} (2^k r)^{1 - 1/N} used by P_D at frequency 2^k.
double smoothing_radius(int k, double r, double N);

// eta_r sampled on the periodic grid of the domain.
struct EtaGrid {
    double r = 1.0;
    int grid = 0;
    double spacing = 0.0;
    std::vector<double> values;  // row-major, G^n
    double mass = 0.0;           // sum(values) * spacing^n
    double min_value = 0.0;
    double max_leak = 0.0;       // largest |coefficient| with |m/L| >= 1/r
};

EtaGrid make_eta(const TorusDomain& domain, double r);

// The smooth cutoff chi_D * eta_rho as a trigonometric polynomial on the torus.
class SmoothCutoff {
public:
    SmoothCutoff(const TorusDomain& domain, const Disk& disk, double rho);

    double rho() const { return rho_; }
    const Disk& disk() const { return disk_; }
    std::size_t terms() const { return coeffs_.size(); }
    std::span<const long> index(std::size_t i) const
    {
        return {idx_.data() + i * static_cast<std::size_t>(domain_.n), static_cast<std::size_t>(domain_.n)};
    }
    Complex coefficient(std::size_t i) const { return coeffs_[i]; }

    double value(std::span<const double> x) const;
    // Values along the ray x_D + s e_1.
    std::vector<double> radial_profile(std::span<const double> s) const;
    // Values on the full periodic grid with G points per axis.
    std::vector<double> grid_values(int G) const;

private:
    TorusDomain domain_;
    Disk disk_;
    double rho_;
    std::vector<long> idx_;
    std::vector<Complex> coeffs_;
};

// Smooth symbol equal to 1 on the band {1 <= |xi| <= 2, angle <= pi/8} and
// supported in {1/2 <= |xi| <= 4, angle <= pi/4}. The radial and angular ramps
// are C^6 polynomial steps spanning the whole gaps.
class EvolutionSymbol {
public:
    double operator()(std::span<const double> xi, int k = 0) const;
};

// K_t(x) = sum over the frequency lattice of a(xi) e^{2 pi i (x.xi + t|xi|)} / L^n,
// sampled on the G^n periodic grid.
std::vector<Complex> propagation_kernel(const TorusDomain& domain, double t, int G);

// Decay of the sampled K_t away from the red cone: sup over grid points at
// cone distance >= d_near divided by sup at distance >= d_far. Only points x
// with angle(-x, e_1) <= wedge enter; pass wedge >= pi for the whole slice.
struct KernelDecay {
    double near_sup = 0.0;
    double far_sup = 0.0;
    double ratio = 0.0;
};
KernelDecay kernel_decay(const TorusDomain& domain, double t, int G, double d_near, double d_far,
                         double wedge = kPi / 8);

// P_D. Preconditions: r >= C0 2^{-k}, margin >= C0 (2^k r)^{-1+1/N}.
Wave project_disk(const Wave& wave, const Disk& D, const LocalizationParams& params = {});
Wave project_disk_complement(const Wave& wave, const Disk& D, const LocalizationParams& params = {});

// Sum over the disk of |phi(x, t_D)|^2 on a cell-centred grid.
double disk_mass(const Wave& wave, const Disk& D, double per_unit);
// Mass outside the disk (total energy minus disk mass).
double exterior_mass(const Wave& wave, const Disk& D, double per_unit);

struct CutoffReport {
    double energy = 0.0;
    double energy_projected = 0.0;
    double energy_complement = 0.0;
    double concentration = 0.0;        // ||w^p P_D phi||_{L2(D_+^ext)} / E^{1/2}
    double vanishing = 0.0;            // ||(1-P_D) phi||_{L2(D_-)} / E^{1/2}
    double local_slack = 0.0;          // (E(P_D phi) - ||phi||^2_{D_+}) / E
    double nonlocal_slack = 0.0;       // (E((1-P_D) phi) - ||phi||^2_{D_-^ext}) / E
    double margin_before = 0.0;
    double margin_after = 0.0;
    double margin_allowance = 0.0;     // C0 (2^k r)^{-1+1/N}
    double smoothing_radius = 0.0;
    double r_minus = 0.0;
    double r_plus = 0.0;
    bool energy_minor = true;
    bool margin_ok = true;
    std::vector<std::string> flags;
};

struct CutoffOptions {
    LocalizationParams params;
    double per_unit = 8.0;
    double weight_power = 2.0;  // desk stand-in for the chi-tilde^{-N} weight
    double ceiling = 1e-2;      // ratios above this are flagged
};

CutoffReport cutoff_report(const Wave& wave, const Disk& D, const CutoffOptions& options = {});

struct HuygensOptions {
    LocalizationParams params;
    double inflation = 2.0;   // the constant C in Cr + R^{1/N} and Q(x_D, t_D; r / C)
    double per_unit = 2.0;
};

struct HuygensReport {
    double finite_propagation = 0.0;  // ||((1-P_D) phi) psi||_{L2(Q(r/C))} / (E E)^{1/2}
    double huygens = 0.0;             // ||(P_D phi) psi||_{L2(Q(R) \ C^red(Cr + R^{1/N}))} / ...
    double red_blue = 0.0;            // ||(P_D phi)(P_D psi)||_{L2(Q^ann(Cr + C R^{1/N}, R))} / ...
    double error_estimate = 0.0;
    bool red_blue_computed = false;
};

// phi red, psi blue. RegionExceedsTorus if the cube of side R does not fit.
HuygensReport huygens_report(const Wave& phi, const Wave& psi, const Disk& D, double R,
                             const HuygensOptions& options = {});

void to_json(nlohmann::json& j, const CutoffReport& r);
void to_json(nlohmann::json& j, const HuygensReport& r);

}  // namespace conewave
