#pragma once

#include "conewave/wave.hpp"

namespace conewave {

// Uniform tensor grid origin + j * spacing, 0 <= j_d < counts[d].
struct BoxGrid {
    std::vector<double> origin;
    double spacing = 1.0;
    std::vector<int> counts;

    std::size_t size() const;
    int n() const { return static_cast<int>(counts.size()); }
    void point(std::size_t flat, std::span<double> x) const;
};

// Cell-centred grid covering [lo, lo + side)^n with `per_unit` samples per unit length.
BoxGrid centered_cells(std::span<const double> lo, double side, double per_unit);

enum class SampleMethod { Auto, Fft, Direct };

// Values of the wave on the grid at time t, row-major with the last axis
// fastest, hilbert_dim entries per point. The FFT route needs period/spacing to
// be an integer and is exact at the grid points (aliasing folds lattice
// indices modulo the grid size, which is harmless for point samples).
std::vector<Complex> sample_box(const Wave& wave, double t, const BoxGrid& grid,
                                SampleMethod method = SampleMethod::Auto);

// Pointwise Hilbert-space magnitude |phi(x, t)| on the grid.
std::vector<double> sample_box_magnitude(const Wave& wave, double t, const BoxGrid& grid,
                                         SampleMethod method = SampleMethod::Auto);

// Full periodic slice on G^n points x0 + j * period / G via one inverse FFT per
// Hilbert component.
std::vector<Complex> fft_slice(const Wave& wave, double t, int G, std::span<const double> x0);

// Inverse DFT (positive exponent, no normalisation) of a row-major G^n array.
std::vector<Complex> inverse_fft(const std::vector<Complex>& coeffs, int n, int G);

}  // namespace conewave
