#include "conewave/field.hpp"

#include <Eigen/Dense>
#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

namespace conewave {

std::size_t BoxGrid::size() const
{
    std::size_t s = 1;
    for (int c : counts) s *= static_cast<std::size_t>(c);
    return s;
}

void BoxGrid::point(std::size_t flat, std::span<double> x) const
{
    for (int d = n() - 1; d >= 0; --d) {
        const std::size_t c = static_cast<std::size_t>(counts[d]);
        x[d] = origin[d] + spacing * static_cast<double>(flat % c);
        flat /= c;
    }
}

BoxGrid centered_cells(std::span<const double> lo, double side, double per_unit)
{
    BoxGrid g;
    const int cells = std::max(1, static_cast<int>(std::lround(side * per_unit)));
    g.spacing = side / cells;
    g.counts.assign(lo.size(), cells);
    g.origin.resize(lo.size());
    for (std::size_t d = 0; d < lo.size(); ++d) g.origin[d] = lo[d] + 0.5 * g.spacing;
    return g;
}

namespace {

struct PlanCache {
    std::mutex mu;
    std::map<std::pair<int, int>, fftw_plan> plans;

    ~PlanCache()
    {
        for (auto& [key, p] : plans) fftw_destroy_plan(p);
    }

    fftw_plan get(int n, int G)
    {
        std::lock_guard lock(mu);
        auto it = plans.find({n, G});
        if (it != plans.end()) return it->second;
        std::vector<int> dims(static_cast<std::size_t>(n), G);
        std::size_t total = 1;
        for (int d : dims) total *= static_cast<std::size_t>(d);
        auto* in = fftw_alloc_complex(total);
        auto* out = fftw_alloc_complex(total);
        fftw_plan p = fftw_plan_dft(n, dims.data(), in, out, FFTW_BACKWARD, FFTW_ESTIMATE);
        fftw_free(in);
        fftw_free(out);
        plans.emplace(std::make_pair(n, G), p);
        return p;
    }
};

PlanCache& plan_cache()
{
    static PlanCache cache;
    return cache;
}

struct FftwDeleter {
    void operator()(fftw_complex* p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwDeleter>;

FftwBuffer fftw_buffer(std::size_t n) { return FftwBuffer(fftw_alloc_complex(n)); }

long wrap(long v, long G)
{
    const long r = v % G;
    return r < 0 ? r + G : r;
}

int fft_size(const Wave& wave, double spacing)
{
    const double g = wave.domain().period / spacing;
    const double r = std::round(g);
    if (r < 1.0 || std::abs(g - r) > 1e-9 * r || r > 1 << 14) return 0;
    return static_cast<int>(r);
}

std::vector<Complex> sample_fft(const Wave& wave, double t, const BoxGrid& grid, int G)
{
    const std::vector<Complex> full = fft_slice(wave, t, G, grid.origin);
    const int n = grid.n();
    const std::size_t h = static_cast<std::size_t>(wave.hilbert_dim());
    std::vector<Complex> out(grid.size() * h);
    std::vector<std::size_t> stride(static_cast<std::size_t>(n));
    std::size_t s = 1;
    for (int d = n - 1; d >= 0; --d) {
        stride[d] = s;
        s *= static_cast<std::size_t>(G);
    }
    const std::size_t total = s;
    for (std::size_t p = 0; p < grid.size(); ++p) {
        std::size_t flat = p, src = 0;
        for (int d = n - 1; d >= 0; --d) {
            const std::size_t c = static_cast<std::size_t>(grid.counts[d]);
            src += static_cast<std::size_t>(wrap(static_cast<long>(flat % c), G)) * stride[d];
            flat /= c;
        }
        for (std::size_t c = 0; c < h; ++c) out[p * h + c] = full[c * total + src];
    }
    return out;
}

std::vector<Complex> sample_direct(const Wave& wave, double t, const BoxGrid& grid)
{
    using Mat = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const int n = grid.n();
    const std::size_t m = wave.size();
    const std::size_t h = static_cast<std::size_t>(wave.hilbert_dim());
    const std::size_t rows = static_cast<std::size_t>(grid.counts[0]);
    const std::size_t rest = grid.size() / std::max<std::size_t>(rows, 1);
    std::vector<Complex> out(grid.size() * h);
    if (m == 0 || grid.size() == 0) return out;

    // Per-axis phase tables e^{2 pi i x_d xi_d}.
    std::vector<Mat> tables(static_cast<std::size_t>(n));
    for (int d = 0; d < n; ++d) {
        Mat& T = tables[d];
        T.resize(static_cast<Eigen::Index>(m), grid.counts[d]);
        for (std::size_t i = 0; i < m; ++i) {
            const double xi = wave.xi(i)[d];
            for (int j = 0; j < grid.counts[d]; ++j)
                T(static_cast<Eigen::Index>(i), j) = unit_phase((grid.origin[d] + grid.spacing * j) * xi);
        }
    }
    // Left factor per component: amplitude * temporal phase * first-axis phase.
    std::vector<Mat> left(h, Mat(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(m)));
    for (std::size_t i = 0; i < m; ++i) {
        const Complex tp = unit_phase(t * wave.temporal_frequency(i));
        const auto a = wave.amplitude(i);
        for (std::size_t c = 0; c < h; ++c)
            for (std::size_t r = 0; r < rows; ++r)
                left[c](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) =
                    a[c] * tp * tables[0](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r));
    }
    constexpr std::size_t kBlock = 1024;
    const std::size_t blocks = (rest + kBlock - 1) / kBlock;
    parallel_for(blocks, [&](std::size_t b) {
        const std::size_t c0 = b * kBlock;
        const std::size_t cols = std::min(kBlock, rest - c0);
        Mat right(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(cols));
        std::vector<int> idx(static_cast<std::size_t>(n));
        for (std::size_t col = 0; col < cols; ++col) {
            std::size_t flat = c0 + col;
            for (int d = n - 1; d >= 1; --d) {
                idx[d] = static_cast<int>(flat % static_cast<std::size_t>(grid.counts[d]));
                flat /= static_cast<std::size_t>(grid.counts[d]);
            }
            for (std::size_t i = 0; i < m; ++i) {
                Complex v = 1.0;
                for (int d = 1; d < n; ++d) v *= tables[d](static_cast<Eigen::Index>(i), idx[d]);
                right(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col)) = v;
            }
        }
        for (std::size_t c = 0; c < h; ++c) {
            const Mat block = left[c] * right;
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t col = 0; col < cols; ++col)
                    out[((r * rest) + c0 + col) * h + c] =
                        block(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col));
        }
    });
    return out;
}

}  // namespace

std::vector<Complex> fft_slice(const Wave& wave, double t, int G, std::span<const double> x0)
{
    const int n = wave.n();
    if (G < 1) fail(ErrorKind::InvalidArgument, "FFT grid size must be positive");
    if (x0.size() != static_cast<std::size_t>(n))
        fail(ErrorKind::InvalidArgument, "slice origin has wrong dimension");
    std::size_t total = 1;
    for (int d = 0; d < n; ++d) total *= static_cast<std::size_t>(G);
    const std::size_t h = static_cast<std::size_t>(wave.hilbert_dim());
    std::vector<Complex> out(total * h);
    if (wave.empty()) return out;

    fftw_plan plan = plan_cache().get(n, G);
    FftwBuffer in = fftw_buffer(total);
    FftwBuffer res = fftw_buffer(total);
    std::vector<std::size_t> slot(wave.size());
    std::vector<Complex> phase(wave.size());
    for (std::size_t i = 0; i < wave.size(); ++i) {
        const auto xi = wave.xi(i);
        std::size_t s = 0;
        double cyc = t * wave.temporal_frequency(i);
        for (int d = 0; d < n; ++d) {
            s = s * static_cast<std::size_t>(G) +
                static_cast<std::size_t>(wrap(wave.domain().lattice_index(xi[d]), G));
            cyc += x0[d] * xi[d];
        }
        slot[i] = s;
        phase[i] = unit_phase(cyc);
    }
    for (std::size_t c = 0; c < h; ++c) {
        std::fill_n(reinterpret_cast<double*>(in.get()), 2 * total, 0.0);
        for (std::size_t i = 0; i < wave.size(); ++i) {
            const Complex v = wave.amplitude(i)[c] * phase[i];
            in[slot[i]][0] += v.real();
            in[slot[i]][1] += v.imag();
        }
        fftw_execute_dft(plan, in.get(), res.get());
        for (std::size_t p = 0; p < total; ++p) out[c * total + p] = {res[p][0], res[p][1]};
    }
    return out;
}

std::vector<Complex> inverse_fft(const std::vector<Complex>& coeffs, int n, int G)
{
    std::size_t total = 1;
    for (int d = 0; d < n; ++d) total *= static_cast<std::size_t>(G);
    if (coeffs.size() != total) fail(ErrorKind::InvalidArgument, "coefficient array has wrong size");
    fftw_plan plan = plan_cache().get(n, G);
    FftwBuffer in = fftw_buffer(total);
    FftwBuffer res = fftw_buffer(total);
    for (std::size_t p = 0; p < total; ++p) {
        in[p][0] = coeffs[p].real();
        in[p][1] = coeffs[p].imag();
    }
    fftw_execute_dft(plan, in.get(), res.get());
    std::vector<Complex> out(total);
    for (std::size_t p = 0; p < total; ++p) out[p] = {res[p][0], res[p][1]};
    return out;
}

std::vector<Complex> sample_box(const Wave& wave, double t, const BoxGrid& grid, SampleMethod method)
{
    if (grid.n() != wave.n()) fail(ErrorKind::InvalidArgument, "grid dimension differs from wave");
    const int G = fft_size(wave, grid.spacing);
    if (method == SampleMethod::Fft && G == 0)
        fail(ErrorKind::InvalidArgument, "period is not a multiple of the grid spacing");
    if (method == SampleMethod::Auto) {
        method = SampleMethod::Direct;
        if (G > 0) {
            const double full = std::pow(static_cast<double>(G), wave.n());
            const double fft_cost = full * (std::log2(full) + 4.0) * wave.hilbert_dim();
            const double direct_cost = static_cast<double>(grid.size()) *
                                       static_cast<double>(wave.size()) * wave.hilbert_dim();
            if (fft_cost < direct_cost) method = SampleMethod::Fft;
        }
    }
    return method == SampleMethod::Fft ? sample_fft(wave, t, grid, G) : sample_direct(wave, t, grid);
}

std::vector<double> sample_box_magnitude(const Wave& wave, double t, const BoxGrid& grid,
                                         SampleMethod method)
{
    const std::vector<Complex> v = sample_box(wave, t, grid, method);
    const std::size_t h = static_cast<std::size_t>(wave.hilbert_dim());
    std::vector<double> out(grid.size());
    for (std::size_t p = 0; p < out.size(); ++p) {
        double s = 0.0;
        for (std::size_t c = 0; c < h; ++c) s += std::norm(v[p * h + c]);
        out[p] = std::sqrt(s);
    }
    return out;
}

}  // namespace conewave
