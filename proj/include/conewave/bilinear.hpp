#pragma once

#include <cstdint>

#include "json.hpp"

#include "conewave/geometry.hpp"
#include "conewave/packets.hpp"
#include "conewave/wave.hpp"

namespace conewave {

// ||phi psi||_{L^p(region)} with the pointwise magnitude |phi||psi|.
struct NormReport {
    nlohmann::json region;
    double p = 2.0;
    double value = 0.0;
    double per_unit = 0.0;
    double error_estimate = 0.0;  // from the |I(h) - I(2h)| Richardson difference
    std::size_t points = 0;
};

// Least squares fit of log(y) against log(x).
struct SlopeFit {
    std::vector<double> log_x;
    std::vector<double> log_y;
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;  // rms of the fit residuals
    bool skipped = false;
    std::string note;
};

// Needs at least three points; zero or negative ordinates skip the fit.
SlopeFit fit_loglog(std::span<const double> x, std::span<const double> y);

// 1 <= p <= 2. UnboundedRegion for regions without bounds, RegionExceedsTorus
// when a side of the bounding box exceeds the period.
NormReport product_lp_norm(const Wave& phi, const Wave& psi, const Region& region, double p,
                           double per_unit = 2.0);
// ||phi||_{L^p(region)}.
NormReport wave_lp_norm(const Wave& phi, const Region& region, double p, double per_unit = 2.0);

// ||phi||_{L^2} over blue cone neighbourhoods of thickness R about the vertex,
// all truncated to the cube of side 8 R_max centred there. One pass over the
// grid serves every R.
struct ConeEnergyReport {
    std::vector<double> R;
    std::vector<double> norms;
    std::vector<double> volumes;
    SlopeFit fit;
};
ConeEnergyReport cone_energy_check(const Wave& phi, std::span<const double> vertex, double t0,
                                   std::span<const double> R_list, double per_unit = 1.0);

struct DoubleConeReport {
    NormReport norm;   // over the purple neighbourhood of thickness r inside Q
    double ratio = 0.0;  // norm / (r R E(phi) E(psi))^{1/2}, R = side of Q
};
DoubleConeReport doublecone_l1_check(const Wave& phi, const Wave& psi, std::span<const double> vertex,
                                     double t0, double r, const Cube& Q, double per_unit = 2.0);

// Counter based seeding: one independent stream per (seed, experiment, cell).
std::uint64_t cell_seed(std::uint64_t seed, std::string_view experiment, std::uint64_t cell);

// Low-dispersion experiment. For each r a red phi with frequencies in a
// sector of angular width 1/r (coherent phases, random centre and amplitude
// jitter) meets a localised random blue psi head-on.
struct MockOptions {
    double period = 64.0;
    int grid = 128;
    int trials = 20;
    int psi_k = 1;
    double window = 24.0;     // time window about the crossing
    double local_C = 2.0;     // CQ in the localised variant
    std::uint64_t seed = 1;
};

struct MockRow {
    double r = 0.0;
    double max_ratio = 0.0;    // max over trials of ||phi psi||_2 / (E E)^{1/2}
    double mean_ratio = 0.0;
    double local_ratio = 0.0;  // max of ||phi psi||_{L2(Q_r)} / (r^{-(n+1)/2} ||phi||_{L2(CQ)} ||psi||_{L2(CQ)})
    double dispersion = 0.0;   // largest angular dispersion of phi over trials
};

struct MockReport {
    std::vector<MockRow> rows;
    SlopeFit fit;
    double single_atom_ratio = 0.0;  // measured / closed form for one atom each, excluded from the fit
};

// Red phi with angular dispersion <= 1/r; InfeasibleSpec when the sector
// holds fewer than two lattice directions.
Wave mock_red_wave(const TorusDomain& domain, double r, std::span<const double> centre, double t_c,
                   std::uint64_t seed);
Wave mock_blue_wave(const TorusDomain& domain, int k, std::span<const double> centre, double t_c,
                    std::uint64_t seed);

MockReport low_dispersion_l2_check(std::span<const double> r_list, const MockOptions& options = {});

// sup of d sigma_1 * d sigma_2 (as a density in spacetime frequency), with
// sigma_1 the red cone over the width-1/r sector about e_1 in 1 <= |xi| <= 2
// and sigma_2 the blue cone over the band/sector at 2^k. Both measures are
// the push-forward of d xi. Cells of side `cell` are histogrammed; when a
// window is given only cells inside it count.
struct OracleOptions {
    int n = 2;
    int k = 0;
    double cell = 0.1;
    double sample = 0.0125;  // sample spacing on sigma_2, sigma_1 is refined with r
    std::optional<Bounds> window;
};
double surface_convolution_oracle(double r, const OracleOptions& options = {});

// Empirical lower bound for A(R): the max of ||phi psi||_{L^p(Q)} over a
// declared family of energy-normalised pairs.
struct ARatioReport {
    double value = 0.0;
    std::size_t argmax = 0;
    std::string family_hash;
    std::vector<double> ratios;
};
ARatioReport empirical_A_ratio(std::span<const std::pair<Wave, Wave>> family, const Cube& Q, double p,
                               double per_unit = 2.0, double min_margin = 0.01);
std::string family_hash(std::span<const std::pair<Wave, Wave>> family);

// Extremizer pair for the k scaling experiment, both energy normalised.
struct KScalingOptions {
    double period = 128.0;
    int grid = 128;
    double psi_side = 0.5;     // side of the frequency square carrying psi
    double phi_width = 0.4;    // radius of the frequency cap of each phi_i
    double spacing = 3.0;      // distance between the balls along the tube
    double per_unit = 1.0;
    double pad = 8.0;          // Q extends this far beyond the end balls
};

struct ExtremizerPair {
    Wave phi;
    Wave psi;
    Cube Q;
};
ExtremizerPair kscaling_extremizer(int k, const KScalingOptions& options = {});

struct KScalingReport {
    std::vector<int> k;
    std::vector<double> ratios;
    std::vector<double> errors;
    SlopeFit fit;  // slope of log2(ratio) against k
};
KScalingReport k_scaling_experiment(std::span<const int> k_list, double p,
                                    const KScalingOptions& options = {});

// ||[Phi]_j psi||_{L^1(Q)} / (R E(Phi)^{1/2} E(psi)^{1/2}).
double quilt_product_ratio(const WaveTable& table, const Wave& psi, int j, double per_unit = 1.0);

void to_json(nlohmann::json& j, const NormReport& r);
void to_json(nlohmann::json& j, const SlopeFit& f);

}  // namespace conewave
