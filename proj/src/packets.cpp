#include "conewave/packets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "conewave/field.hpp"
#include "conewave/localization.hpp"

namespace conewave {

namespace {

double wrap(double d, double L) { return d - L * std::round(d / L); }

double periodic_distance(std::span<const double> x, std::span<const double> y, double L)
{
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = wrap(x[i] - y[i], L);
        s += d * d;
    }
    return std::sqrt(s);
}

double chord(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

// Points of the cap used to build and audit the net in dimension >= 3.
std::vector<double> cap_samples(int n, double cap, double step)
{
    std::vector<double> out;
    if (n == 3) {
        const int na = std::max(1, static_cast<int>(std::ceil(cap / step)));
        for (int i = 0; i <= na; ++i) {
            const double a = cap * i / na;
            const int nb = std::max(1, static_cast<int>(std::ceil(kTwoPi * std::sin(a) / step)));
            for (int j = 0; j < nb; ++j) {
                const double b = kTwoPi * j / nb;
                out.insert(out.end(), {std::cos(a), std::sin(a) * std::cos(b), std::sin(a) * std::sin(b)});
            }
        }
        return out;
    }
    // n >= 4: fixed pseudo-random sample of the cap
    std::mt19937_64 rng(0x5eedULL + static_cast<unsigned>(n));
    std::normal_distribution<double> g;
    const std::size_t want = static_cast<std::size_t>(std::min(2e5, std::pow(cap / step, n - 1) * 4.0 + 1000.0));
    std::vector<double> u(static_cast<std::size_t>(n));
    while (out.size() < want * static_cast<std::size_t>(n)) {
        for (auto& v : u) v = g(rng);
        const double s = norm2(u);
        for (auto& v : u) v /= s;
        if (std::acos(std::clamp(u[0], -1.0, 1.0)) <= cap) out.insert(out.end(), u.begin(), u.end());
    }
    return out;
}

double bump_weight(double u) { return u >= 1.0 ? 0.0 : (1.0 - u * u) * (1.0 - u * u); }

std::vector<double> zeros(int n) { return std::vector<double>(static_cast<std::size_t>(n), 0.0); }

}  // namespace

DirectionNet::DirectionNet(int n, double r, double cap) : n_(n), r_(r), cap_(cap)
{
    if (n < 2) fail(ErrorKind::InvalidArgument, "direction net needs n >= 2");
    if (!(r > 0.0)) fail(ErrorKind::InvalidArgument, "direction net needs r > 0");
    const double sep = 1.0 / r;
    if (n == 2) {
        const double dmin = 2.0 * std::asin(std::min(1.0, 0.5 * sep));
        const int m = static_cast<int>(std::floor(2.0 * cap / dmin));
        if (m == 0) {
            dirs_ = {1.0, 0.0};
            return;
        }
        for (int i = 0; i <= m; ++i) {
            const double a = -cap + 2.0 * cap * i / m;
            dirs_.push_back(std::cos(a));
            dirs_.push_back(std::sin(a));
        }
        return;
    }
    // greedy selection over a cap sample ordered by polar angle
    const std::vector<double> cand = cap_samples(n, cap, 0.25 * sep);
    const std::size_t nn = static_cast<std::size_t>(n);
    std::vector<std::size_t> order(cand.size() / nn);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cand[a * nn] > cand[b * nn]; });
    for (std::size_t i : order) {
        std::span<const double> u(cand.data() + i * nn, nn);
        bool ok = true;
        for (std::size_t j = 0; j < size() && ok; ++j) ok = chord(u, direction(j)) >= sep;
        if (ok) dirs_.insert(dirs_.end(), u.begin(), u.end());
    }
}

std::size_t DirectionNet::nearest(std::span<const double> unit) const
{
    std::size_t best = 0;
    double bd = -2.0;
    for (std::size_t i = 0; i < size(); ++i) {
        const double d = dot(unit, direction(i));
        if (d > bd) {
            bd = d;
            best = i;
        }
    }
    return best;
}

double DirectionNet::min_separation() const
{
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < size(); ++i)
        for (std::size_t j = i + 1; j < size(); ++j) m = std::min(m, chord(direction(i), direction(j)));
    return m;
}

double DirectionNet::max_cell_radius(int samples_per_axis) const
{
    std::vector<double> pts;
    if (n_ == 2) {
        for (int i = 0; i <= samples_per_axis; ++i) {
            const double a = -cap_ + 2.0 * cap_ * i / samples_per_axis;
            pts.push_back(std::cos(a));
            pts.push_back(std::sin(a));
        }
    } else {
        pts = cap_samples(n_, cap_, 2.0 * cap_ / samples_per_axis);
    }
    const std::size_t nn = static_cast<std::size_t>(n_);
    double worst = 0.0;
    for (std::size_t p = 0; p < pts.size() / nn; ++p) {
        std::span<const double> u(pts.data() + p * nn, nn);
        worst = std::max(worst, chord(u, direction(nearest(u))));
    }
    return worst * r_;
}

std::vector<Rotation> rotation_family(int n, double r, int count)
{
    if (count < 1) fail(ErrorKind::InvalidArgument, "need at least one rotation");
    const double amax = 0.5 / r;
    std::vector<Rotation> out(static_cast<std::size_t>(count));
    std::mt19937_64 rng(0xa11ceULL);
    std::normal_distribution<double> g;
    double total = 0.0;
    for (int i = 0; i < count; ++i) {
        Rotation& R = out[static_cast<std::size_t>(i)];
        double u;
        if (n == 2) {
            u = 2.0 * (i + 0.5) / count - 1.0;
            const double a = amax * u;
            R.matrix = {std::cos(a), -std::sin(a), std::sin(a), std::cos(a)};
            u = std::abs(u);
        } else {
            // Cayley transform of a random skew matrix: exactly orthogonal, angle < |A|
            u = (i + 0.5) / count;
            Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
            for (int a = 0; a < n; ++a)
                for (int b = a + 1; b < n; ++b) {
                    A(a, b) = g(rng);
                    A(b, a) = -A(a, b);
                }
            const double norm = A.operatorNorm();
            if (norm > 0.0) A *= amax * u / norm;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
            const Eigen::MatrixXd Q = (I - 0.5 * A).lu().solve(I + 0.5 * A);
            R.matrix.resize(static_cast<std::size_t>(n * n));
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) R.matrix[static_cast<std::size_t>(a * n + b)] = Q(a, b);
        }
        R.weight = bump_weight(u);
        total += R.weight;
    }
    for (auto& R : out) R.weight /= total;
    return out;
}

double tube_radius(int k, double R)
{
    const double s = std::ldexp(1.0, k);
    const double Rs = s * R;
    if (!(Rs > 0.0)) fail(ErrorKind::InvalidArgument, "cube side must be positive");
    const int J = static_cast<int>(std::floor(0.5 * std::log2(Rs)));
    return std::ldexp(Rs, -J) / s;
}

std::vector<double> PacketDecomposition::base(std::size_t tube) const
{
    const int n = source_.n();
    std::size_t cell = tube % cells_total_;
    std::vector<double> x(cube_.center);
    for (int d = n - 1; d >= 0; --d) {
        x[d] += spacing_ * static_cast<double>(cell % static_cast<std::size_t>(cells_));
        cell /= static_cast<std::size_t>(cells_);
    }
    return x;
}

Tube PacketDecomposition::tube(std::size_t i) const
{
    const auto w = net_.direction(direction_index(i));
    // red waves e^{2 pi i (x.xi + t|xi|)} travel along -xi, blue ones along +xi
    const double sgn = source_.color() == Color::Red ? -1.0 : 1.0;
    Tube T;
    T.base = base(i);
    T.direction.resize(w.size());
    for (std::size_t d = 0; d < w.size(); ++d) {
        T.direction[d] = sgn * w[d];
        T.base[d] -= T.direction[d] * cube_.t;
    }
    T.radius = r_;
    return T;
}

Wave PacketDecomposition::assemble(const Piece& piece, const std::vector<Complex>& cutoff) const
{
    const TorusDomain& dom = source_.domain();
    const int n = dom.n;
    const std::size_t h = static_cast<std::size_t>(source_.hilbert_dim());
    const std::size_t atoms = piece.amp.size() / h;
    if (atoms == 0) return zero_wave(dom, source_.color(), source_.k(), source_.hilbert_dim());

    std::vector<long> lo(static_cast<std::size_t>(n), std::numeric_limits<long>::max());
    std::vector<long> hi(static_cast<std::size_t>(n), std::numeric_limits<long>::min());
    for (std::size_t a = 0; a < atoms; ++a)
        for (int d = 0; d < n; ++d) {
            lo[d] = std::min(lo[d], piece.index[a * n + d]);
            hi[d] = std::max(hi[d], piece.index[a * n + d]);
        }
    std::vector<std::size_t> stride(static_cast<std::size_t>(n));
    std::size_t vol = 1;
    for (int d = n - 1; d >= 0; --d) {
        lo[d] -= cells_;
        hi[d] += cells_;
        stride[d] = vol;
        vol *= static_cast<std::size_t>(hi[d] - lo[d] + 1);
    }
    const std::size_t nb = ball_coeff_.size();
    std::vector<std::ptrdiff_t> ball_off(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        std::ptrdiff_t o = 0;
        for (int d = 0; d < n; ++d) o += static_cast<std::ptrdiff_t>(ball_[b * n + d] * static_cast<long>(stride[d]));
        ball_off[b] = o;
    }
    std::vector<std::size_t> off(atoms);
    for (std::size_t a = 0; a < atoms; ++a) {
        std::ptrdiff_t o = 0;
        for (int d = 0; d < n; ++d)
            o += static_cast<std::ptrdiff_t>((piece.index[a * n + d] - lo[d]) * static_cast<long>(stride[d]));
        off[a] = static_cast<std::size_t>(o);
    }
    // dense box when the atoms fill it, otherwise a sorted list of touched slots
    std::vector<std::size_t> slots;
    const bool dense = atoms * nb * 4 >= vol;
    if (!dense) {
        slots.reserve(atoms * nb);
        for (std::size_t a = 0; a < atoms; ++a)
            for (std::size_t b = 0; b < nb; ++b)
                if (cutoff[b] != Complex{}) slots.push_back(static_cast<std::size_t>(static_cast<std::ptrdiff_t>(off[a]) + ball_off[b]));
        std::sort(slots.begin(), slots.end());
        slots.erase(std::unique(slots.begin(), slots.end()), slots.end());
    }
    auto slot_of = [&](std::size_t p) {
        return dense ? p : static_cast<std::size_t>(std::lower_bound(slots.begin(), slots.end(), p) - slots.begin());
    };
    std::vector<Complex> buf((dense ? vol : slots.size()) * h);
    for (std::size_t a = 0; a < atoms; ++a) {
        const Complex* amp = piece.amp.data() + a * h;
        for (std::size_t b = 0; b < nb; ++b) {
            if (cutoff[b] == Complex{}) continue;
            Complex* out = buf.data() + slot_of(static_cast<std::size_t>(static_cast<std::ptrdiff_t>(off[a]) + ball_off[b])) * h;
            for (std::size_t c = 0; c < h; ++c) out[c] += amp[c] * cutoff[b];
        }
    }

    // Back from time t_Q. The margin hypothesis keeps every shifted frequency
    // in the band where the evolution symbol is 1, so U(t) acts atom-wise.
    const double L = dom.period;
    const double sgn = source_.color() == Color::Red ? 1.0 : -1.0;
    std::vector<double> xi;
    std::vector<Complex> amp;
    std::vector<double> z(static_cast<std::size_t>(n));
    const std::size_t used = dense ? vol : slots.size();
    for (std::size_t p = 0; p < used; ++p) {
        bool any = false;
        for (std::size_t c = 0; c < h && !any; ++c) any = buf[p * h + c] != Complex{};
        if (!any) continue;
        std::size_t f = dense ? p : slots[p];
        for (int d = 0; d < n; ++d) {
            z[d] = static_cast<double>(lo[d] + static_cast<long>(f / stride[d])) / L;
            f %= stride[d];
        }
        const Complex back = unit_phase(-cube_.t * sgn * norm2(z));
        xi.insert(xi.end(), z.begin(), z.end());
        for (std::size_t c = 0; c < h; ++c) amp.push_back(buf[p * h + c] * back);
    }
    return make_wave(dom, source_.color(), source_.k(), source_.hilbert_dim(), std::move(xi), std::move(amp));
}

Wave PacketDecomposition::packet(std::size_t i) const
{
    if (i >= size()) fail(ErrorKind::InvalidArgument, "tube index out of range");
    const int n = source_.n();
    const std::vector<double> x0 = base(i);
    const double L = source_.domain().period;
    std::vector<Complex> cut(ball_coeff_.size());
    for (std::size_t b = 0; b < cut.size(); ++b) {
        double ph = 0.0;
        for (int d = 0; d < n; ++d) ph += x0[d] * static_cast<double>(ball_[b * n + d]) / L;
        cut[b] = ball_coeff_[b] * unit_phase(-ph);
    }
    return assemble(pieces_[i / cells_total_], cut);
}

Wave PacketDecomposition::angular_piece(std::size_t tube) const
{
    if (tube >= size()) fail(ErrorKind::InvalidArgument, "tube index out of range");
    std::vector<Complex> cut(ball_coeff_.size(), Complex{});
    for (std::size_t b = 0; b < cut.size(); ++b) {
        bool origin = true;
        for (int d = 0; d < source_.n(); ++d) origin = origin && ball_[b * source_.n() + d] == 0;
        if (origin) cut[b] = 1.0;
    }
    return assemble(pieces_[tube / cells_total_], cut);
}

Wave PacketDecomposition::combine(std::span<const double> weights) const
{
    if (weights.size() != size()) fail(ErrorKind::InvalidArgument, "one weight per tube expected");
    const int n = source_.n();
    const double L = source_.domain().period;
    // sum_x w(x) e^{-2 pi i x.m/L} over x = x_Q + s idx is the x_Q phase times the
    // K^n DFT of w at m mod K
    const std::size_t nb = ball_coeff_.size();
    std::vector<Complex> base_cut(nb);
    std::vector<std::size_t> fold(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        double ph = 0.0;
        std::size_t slot = 0;
        for (int d = 0; d < n; ++d) {
            const long m = ball_[b * n + d];
            ph += cube_.center[d] * static_cast<double>(m) / L;
            long v = m % cells_;
            if (v < 0) v += cells_;
            slot = slot * static_cast<std::size_t>(cells_) + static_cast<std::size_t>(v);
        }
        base_cut[b] = ball_coeff_[b] * unit_phase(-ph);
        fold[b] = slot;
    }
    AtomAccumulator acc(source_.domain(), source_.hilbert_dim());
    std::vector<Complex> cut(nb), col(cells_total_);
    for (std::size_t u = 0; u < used_.size(); ++u) {
        const std::span<const double> w = weights.subspan(u * cells_total_, cells_total_);
        if (std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0; })) continue;
        for (std::size_t q = 0; q < cells_total_; ++q) col[q] = w[q];
        // real weights: the forward DFT is the conjugate of the inverse one
        std::vector<Complex> W = cells_total_ > 1 ? inverse_fft(col, n, cells_) : col;
        for (std::size_t b = 0; b < nb; ++b) cut[b] = base_cut[b] * std::conj(W[fold[b]]);
        acc.add_wave(assemble(pieces_[u], cut));
    }
    return acc.build(source_.color(), source_.k());
}

std::vector<double> PacketDecomposition::packet_energies() const
{
    std::vector<double> e(size());
    parallel_for(size(), [&](std::size_t i) { e[i] = energy(packet(i)); });
    return e;
}

PacketDecomposition tube_decompose(const Wave& phi, const Cube& Q, double c, const PacketOptions& opt)
{
    const int n = phi.n();
    if (Q.n() != n) fail(ErrorKind::InvalidArgument, "cube dimension differs from wave");
    if (!(c > 0.0 && c <= 0.25)) fail(ErrorKind::InvalidArgument, "c must lie in (0, 1/4]");
    const TorusDomain& dom = phi.domain();
    const double L = dom.period;
    const double f = phi.frequency();

    PacketDecomposition D(phi);
    D.cube_ = Q;
    D.c_ = c;
    D.r_ = tube_radius(phi.k(), Q.side);
    D.r_scaled_ = f * D.r_;
    // c^{-2} r lattice, snapped so that a whole number of cells tiles the torus
    D.cells_ = std::max(1, static_cast<int>(std::lround(L * c * c / D.r_)));
    D.spacing_ = L / D.cells_;
    D.cells_total_ = 1;
    for (int d = 0; d < n; ++d) D.cells_total_ *= static_cast<std::size_t>(D.cells_);
    D.net_ = DirectionNet(n, D.r_scaled_, opt.cap);
    D.rotations_ = rotation_family(n, D.r_scaled_, opt.rotations);

    if (!phi.empty()) {
        const double m = margin(phi);
        const double need = std::max(1.0 / std::sqrt(f * Q.side), std::sqrt(2.0) / (D.spacing_ * f));
        if (m < need)
            fail(ErrorKind::MarginTooSmall,
                 "margin " + std::to_string(m) + " below required " + std::to_string(need));
    }

    // cutoff coefficients of eta^{x0}: (s/L)^n eta0_hat(s|m|/L) for |m| < L/s
    const int K = D.cells_;
    for_each_in_ball(n, K, [&](std::span<const long> mm) {
        double m2 = 0.0;
        for (long v : mm) m2 += static_cast<double>(v * v);
        const double val = eta0_hat(std::sqrt(m2) / K, n) / std::pow(static_cast<double>(K), n);
        if (val == 0.0) return;
        D.ball_.insert(D.ball_.end(), mm.begin(), mm.end());
        D.ball_coeff_.push_back(val);
    });

    // rotation-averaged Voronoi weights per atom
    const std::size_t h = static_cast<std::size_t>(phi.hilbert_dim());
    const double sgn = phi.color() == Color::Red ? 1.0 : -1.0;
    std::vector<PacketDecomposition::Piece> all(D.net_.size());
    std::vector<double> unit(static_cast<std::size_t>(n)), rot(static_cast<std::size_t>(n));
    std::vector<double> w(D.net_.size());
    for (std::size_t i = 0; i < phi.size(); ++i) {
        const auto xi = phi.xi(i);
        const double nrm = phi.frequency_norm(i);
        for (int d = 0; d < n; ++d) unit[d] = xi[d] / nrm;
        std::fill(w.begin(), w.end(), 0.0);
        for (const Rotation& R : D.rotations_) {
            if (R.weight == 0.0) continue;
            // xi/|xi| lies in Omega(A_w) iff Omega^T xi/|xi| lies in A_w
            for (int a = 0; a < n; ++a) {
                double s = 0.0;
                for (int b = 0; b < n; ++b) s += R.matrix[static_cast<std::size_t>(b * n + a)] * unit[b];
                rot[a] = s;
            }
            w[D.net_.nearest(rot)] += R.weight;
        }
        const Complex tp = unit_phase(Q.t * sgn * nrm);
        for (std::size_t k = 0; k < w.size(); ++k) {
            if (w[k] == 0.0) continue;
            for (int d = 0; d < n; ++d) all[k].index.push_back(dom.lattice_index(xi[d]));
            for (std::size_t cc = 0; cc < h; ++cc) all[k].amp.push_back(w[k] * phi.amplitude(i)[cc] * tp);
        }
    }
    for (std::size_t k = 0; k < all.size(); ++k) {
        if (all[k].amp.empty()) continue;
        D.used_.push_back(k);
        D.pieces_.push_back(std::move(all[k]));
    }

    // dispersion and margin are shared by all cells of one direction
    D.min_packet_margin_ = phi.empty() ? 0.0 : std::numeric_limits<double>::infinity();
    for (std::size_t u = 0; u < D.used_.size(); ++u) {
        const Wave p = D.packet(u * D.cells_total_);
        if (p.empty()) continue;
        D.dispersion_constant_ = std::max(D.dispersion_constant_, angular_dispersion(p) * D.r_scaled_);
        D.min_packet_margin_ = std::min(D.min_packet_margin_, margin(p));
    }
    return D;
}

double reconstruction_residual(const PacketDecomposition& d)
{
    const Wave& src = d.source();
    AtomAccumulator acc(src.domain(), src.hilbert_dim());
    for (std::size_t i = 0; i < d.size(); ++i) acc.add_wave(d.packet(i));
    acc.add_wave(src, -1.0);
    const Wave diff = acc.build(src.color(), src.k());
    double m = 0.0;
    for (const Complex& a : diff.amplitude_data()) m = std::max(m, std::abs(a));
    return m;
}

double bessel_check(const PacketDecomposition& d, const Assignment& m)
{
    if (m.tubes != d.size() || m.weight.size() != m.tubes * m.groups)
        fail(ErrorKind::InvalidArgument, "assignment shape does not match the decomposition");
    for (std::size_t t = 0; t < m.tubes; ++t) {
        double s = 0.0;
        for (std::size_t q = 0; q < m.groups; ++q) {
            const double v = m.weight[t * m.groups + q];
            if (v < 0.0) fail(ErrorKind::RowSumViolation, "negative assignment weight");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-9) fail(ErrorKind::RowSumViolation, "assignment row does not sum to 1");
    }
    const double e = energy(d.source());
    if (e == 0.0) return 1.0;
    std::vector<double> col(m.tubes), parts(m.groups);
    for (std::size_t q = 0; q < m.groups; ++q) {
        for (std::size_t t = 0; t < m.tubes; ++t) col[t] = m.weight[t * m.groups + q];
        parts[q] = energy(d.combine(col));
    }
    return std::sqrt(pairwise_sum(parts) / e);
}

double packet_spill(const PacketDecomposition& d, std::size_t tube, double rho, double t, int G)
{
    const Wave p = d.packet(tube);
    if (p.empty()) return 0.0;
    const int n = p.n();
    const double L = p.domain().period, h = L / G;
    const std::size_t hd = static_cast<std::size_t>(p.hilbert_dim());
    const std::vector<Complex> v = fft_slice(p, t, G, zeros(n));
    const Tube T = d.tube(tube);
    std::vector<double> axis(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) axis[k] = T.base[k] + T.direction[k] * t;
    const std::size_t total = v.size() / hd;
    std::vector<double> all(total), out(total);
    const double cut = 0.5 * rho * d.spacing();
    parallel_for(total, [&](std::size_t q) {
        std::vector<double> x(static_cast<std::size_t>(n));
        std::size_t f = q;
        for (int k = n - 1; k >= 0; --k) {
            x[k] = h * static_cast<double>(f % static_cast<std::size_t>(G));
            f /= static_cast<std::size_t>(G);
        }
        double m2 = 0.0;
        for (std::size_t c = 0; c < hd; ++c) m2 += std::norm(v[c * total + q]);
        all[q] = m2;
        out[q] = periodic_distance(x, axis, L) > cut ? m2 : 0.0;
    });
    const double a = pairwise_sum(all);
    return a > 0.0 ? std::sqrt(pairwise_sum(out) / a) : 0.0;
}

std::vector<double> packet_sup(const PacketDecomposition& d, std::span<const double> points)
{
    const Wave& src = d.source();
    std::vector<double> sup(d.size(), 0.0);
    if (src.empty()) return sup;
    const int n = src.n();
    const std::size_t nn = static_cast<std::size_t>(n);
    const std::size_t np = points.size() / (nn + 1);
    const std::size_t h = static_cast<std::size_t>(src.hilbert_dim());
    const int K = d.cells_;
    const std::size_t cells = d.cells_total_;
    const double L = src.domain().period;
    const double sgn = src.color() == Color::Red ? 1.0 : -1.0;
    const Cube& Q = d.cube_;
    // per ball entry: cutoff coefficient with the x_Q phase, and its slot mod K
    const std::size_t nb = d.ball_coeff_.size();
    std::vector<Complex> bc(nb);
    std::vector<std::size_t> fold(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        double ph = 0.0;
        std::size_t slot = 0;
        for (int k = 0; k < n; ++k) {
            const long m = d.ball_[b * nn + k];
            ph += Q.center[k] * static_cast<double>(m) / L;
            long v = m % K;
            if (v < 0) v += K;
            slot = slot * static_cast<std::size_t>(K) + static_cast<std::size_t>(v);
        }
        bc[b] = d.ball_coeff_[b] * unit_phase(-ph);
        fold[b] = slot;
    }
    for (std::size_t u = 0; u < d.pieces_.size(); ++u) {
        const auto& piece = d.pieces_[u];
        const std::size_t atoms = piece.amp.size() / h;
        std::vector<double> mags(np * cells);
        parallel_for(np, [&](std::size_t p) {
            const auto x = points.subspan(p * (nn + 1), nn);
            const double dt = points[p * (nn + 1) + nn] - Q.t;
            std::vector<Complex> A(h * cells);
            std::vector<double> z(nn);
            for (std::size_t a = 0; a < atoms; ++a)
                for (std::size_t b = 0; b < nb; ++b) {
                    double ph = 0.0;
                    for (std::size_t k = 0; k < nn; ++k) {
                        z[k] = static_cast<double>(piece.index[a * nn + k] + d.ball_[b * nn + k]) / L;
                        ph += x[k] * z[k];
                    }
                    ph += dt * sgn * norm2(z);
                    const Complex e = bc[b] * unit_phase(ph);
                    for (std::size_t c = 0; c < h; ++c) A[c * cells + fold[b]] += piece.amp[a * h + c] * e;
                }
            std::vector<double> m2(cells, 0.0);
            for (std::size_t c = 0; c < h; ++c) {
                // forward DFT over the cell index through the conjugated inverse
                std::vector<Complex> col(A.begin() + static_cast<std::ptrdiff_t>(c * cells),
                                         A.begin() + static_cast<std::ptrdiff_t>((c + 1) * cells));
                for (auto& v : col) v = std::conj(v);
                const std::vector<Complex> vals = cells > 1 ? inverse_fft(col, n, K) : col;
                for (std::size_t q = 0; q < cells; ++q) m2[q] += std::norm(vals[q]);
            }
            for (std::size_t q = 0; q < cells; ++q) mags[p * cells + q] = std::sqrt(m2[q]);
        });
        for (std::size_t p = 0; p < np; ++p)
            for (std::size_t q = 0; q < cells; ++q)
                sup[u * cells + q] = std::max(sup[u * cells + q], mags[p * cells + q]);
    }
    return sup;
}

double tube_cube_distance(const PacketDecomposition& d, std::size_t tube, int time_samples)
{
    const Tube T = d.tube(tube);
    const Cube& Q = d.cube();
    const double L = d.source().domain().period;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < time_samples; ++i) {
        const double t = Q.t - 0.5 * Q.side + Q.side * i / std::max(1, time_samples - 1);
        double s = 0.0;
        for (std::size_t k = 0; k < T.base.size(); ++k) {
            const double off = std::abs(wrap(T.base[k] + T.direction[k] * t - Q.center[k], L));
            const double g = std::max(0.0, off - 0.5 * Q.side);
            s += g * g;
        }
        best = std::min(best, std::sqrt(s));
    }
    return std::max(0.0, best - T.radius);
}

std::vector<double> tube_weighted_norms(const PacketDecomposition& d, double t, int G, double power,
                                        bool angular, double radius_scale)
{
    const Wave& src = d.source();
    std::vector<double> res(d.size(), 0.0);
    if (src.empty()) return res;
    const int n = src.n();
    const double L = src.domain().period, h = L / G;
    const std::size_t total = static_cast<std::size_t>(std::pow(G, n) + 0.5);
    std::vector<double> pts(total * static_cast<std::size_t>(n));
    for (std::size_t q = 0; q < total; ++q) {
        std::size_t f = q;
        for (int k = n - 1; k >= 0; --k) {
            pts[q * n + k] = h * static_cast<double>(f % static_cast<std::size_t>(G));
            f /= static_cast<std::size_t>(G);
        }
    }
    auto density = [&](const Wave& w) {
        std::vector<double> m2(total, 0.0);
        if (w.empty()) return m2;
        const std::vector<Complex> v = fft_slice(w, t, G, zeros(n));
        const std::size_t hd = static_cast<std::size_t>(w.hilbert_dim());
        for (std::size_t c = 0; c < hd; ++c)
            for (std::size_t q = 0; q < total; ++q) m2[q] += std::norm(v[c * total + q]);
        return m2;
    };
    // one density per direction slot (angular) or a single shared one
    const std::size_t slots = angular ? d.size() / d.cells_total() : 1;
    std::vector<std::vector<double>> dens(slots);
    for (std::size_t u = 0; u < slots; ++u) dens[u] = density(angular ? d.angular_piece(u * d.cells_total()) : src);
    parallel_for(d.size(), [&](std::size_t i) {
        const Tube T = d.tube(i);
        const std::vector<double>& m2 = dens[angular ? i / d.cells_total() : 0];
        std::vector<double> axis(static_cast<std::size_t>(n)), terms(total);
        for (int k = 0; k < n; ++k) axis[k] = T.base[k] + T.direction[k] * t;
        const double rad = radius_scale * T.radius;
        for (std::size_t q = 0; q < total; ++q) {
            const double dist = periodic_distance({pts.data() + q * n, static_cast<std::size_t>(n)}, axis, L);
            const double w = std::pow(1.0 + dist / rad, -power);
            terms[q] = w * w * m2[q];
        }
        res[i] = std::sqrt(pairwise_sum(terms) * std::pow(h, n));
    });
    return res;
}

double WaveTable::energy() const
{
    std::vector<double> e(components.size());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = conewave::energy(components[i]);
    return pairwise_sum(e);
}

namespace {

// direct sum of waves of equal colour, frequency and Hilbert dimension
Wave stack_waves(const std::vector<const Wave*>& parts)
{
    const Wave& first = *parts.at(0);
    const std::size_t h = static_cast<std::size_t>(first.hilbert_dim());
    const int total = static_cast<int>(h * parts.size());
    AtomAccumulator acc(first.domain(), total);
    std::vector<Complex> amp(static_cast<std::size_t>(total));
    for (std::size_t q = 0; q < parts.size(); ++q) {
        const Wave& w = *parts[q];
        for (std::size_t i = 0; i < w.size(); ++i) {
            std::fill(amp.begin(), amp.end(), Complex{});
            for (std::size_t c = 0; c < h; ++c) amp[q * h + c] = w.amplitude(i)[c];
            acc.add(w.xi(i), amp);
        }
    }
    return acc.build(first.color(), first.k());
}

}  // namespace

Wave WaveTable::stacked() const
{
    if (components.empty()) fail(ErrorKind::InvalidArgument, "empty wave table");
    std::vector<const Wave*> parts;
    for (const Wave& w : components) parts.push_back(&w);
    return stack_waves(parts);
}

std::vector<Wave> WaveTable::level(int j) const
{
    if (j < 0 || j > depth) fail(ErrorKind::InvalidArgument, "quilt level exceeds the table depth");
    if (j == depth) return components;
    // a coarser component is the table of its descendants, i.e. their direct sum
    std::vector<std::vector<const Wave*>> groups(subcubes(cube, j).size());
    for (std::size_t q = 0; q < cells.size(); ++q) {
        const long p = subcube_index(cube, j, cells[q].center, cells[q].t);
        groups.at(static_cast<std::size_t>(p)).push_back(&components[q]);
    }
    std::vector<Wave> out;
    out.reserve(groups.size());
    for (const auto& g : groups) out.push_back(stack_waves(g));
    return out;
}

WaveTableBuild build_wave_table(const Wave& phi, const Wave& psi, const Cube& Q, double c,
                                const WaveTableOptions& opt)
{
    if (!(phi.domain() == psi.domain())) fail(ErrorKind::MixedDomains, "phi and psi live on different tori");
    WaveTableBuild out{WaveTable{}, tube_decompose(phi, Q, c, opt.packets), Assignment{}, 0.0};
    const PacketDecomposition& D = out.decomposition;
    if (opt.per_unit * D.r() < 8.0)
        fail(ErrorKind::GridTooCoarse, "fewer than 8 quadrature cells across the tube radius");
    const int n = phi.n();
    WaveTable& table = out.table;
    table.cube = Q;
    table.depth = opt.depth;
    table.cells = subcubes(Q, opt.depth);
    const std::size_t nq = table.cells.size(), nt = D.size();

    Assignment& A = out.weights;
    A.tubes = nt;
    A.groups = nq;
    A.weight.assign(nt * nq, 1.0 / static_cast<double>(nq));
    const double epsi = energy(psi);
    if (epsi > 0.0 && nt > 0) {
        // m_{q0,T} = ||psi chi-tilde_T||^2_{L2(q0)} + R^{-10n} E(psi)
        Bounds b;
        for (int d = 0; d < n; ++d) {
            b.lo.push_back(Q.center[d] - 0.5 * Q.side);
            b.hi.push_back(Q.center[d] + 0.5 * Q.side);
        }
        b.lo.push_back(Q.t - 0.5 * Q.side);
        b.hi.push_back(Q.t + 0.5 * Q.side);
        const SpacetimeGrid g = make_grid(b, opt.per_unit);
        const std::size_t ns = g.space_size(), ntimes = g.times.size();
        std::vector<double> pts(ns * static_cast<std::size_t>(n));
        for (std::size_t p = 0; p < ns; ++p) g.point(p, {pts.data() + p * n, static_cast<std::size_t>(n)});
        std::vector<double> psi2(ns * ntimes);
        std::vector<long> cell(ns * ntimes);
        const BoxGrid box{g.origin, g.spacing, g.counts};
        for (std::size_t ti = 0; ti < ntimes; ++ti) {
            const std::vector<double> mag = sample_box_magnitude(psi, g.times[ti], box);
            for (std::size_t p = 0; p < ns; ++p) {
                psi2[ti * ns + p] = mag[p] * mag[p] * g.cell_volume;
                cell[ti * ns + p] = subcube_index(Q, opt.depth, {pts.data() + p * n, static_cast<std::size_t>(n)}, g.times[ti]);
            }
        }
        const double floor = std::pow(Q.side, -10.0 * n) * epsi;
        const double L = phi.domain().period;
        parallel_for(nt, [&](std::size_t i) {
            const Tube T = D.tube(i);
            std::vector<KahanSum> m(nq);
            std::vector<double> axis(static_cast<std::size_t>(n));
            for (std::size_t ti = 0; ti < ntimes; ++ti) {
                for (int k = 0; k < n; ++k) axis[k] = T.base[k] + T.direction[k] * g.times[ti];
                for (std::size_t p = 0; p < ns; ++p) {
                    const long q = cell[ti * ns + p];
                    if (q < 0) continue;
                    const double dist = periodic_distance({pts.data() + p * n, static_cast<std::size_t>(n)}, axis, L);
                    const double w = std::pow(1.0 + dist / T.radius, -opt.decay_power);
                    m[static_cast<std::size_t>(q)] += w * w * psi2[ti * ns + p];
                }
            }
            double total = 0.0;
            for (auto& v : m) total += v.value() + floor;
            for (std::size_t q = 0; q < nq; ++q) A.weight[i * nq + q] = (m[q].value() + floor) / total;
        });
    }

    table.components.reserve(nq);
    std::vector<double> col(nt);
    for (std::size_t q = 0; q < nq; ++q) {
        for (std::size_t t = 0; t < nt; ++t) col[t] = A.weight[t * nq + q];
        table.components.push_back(nt ? D.combine(col) : zero_wave(phi.domain(), phi.color(), phi.k(), phi.hilbert_dim()));
    }
    const double ephi = energy(phi);
    out.bessel_ratio = ephi > 0.0 ? std::sqrt(table.energy() / ephi) : 1.0;
    return out;
}

std::vector<double> quilt_eval(const WaveTable& table, int j, std::span<const double> points)
{
    const std::vector<Wave> comps = table.level(j);
    const int n = table.cube.n();
    const std::size_t stride = static_cast<std::size_t>(n + 1);
    const std::size_t np = points.size() / stride;
    std::vector<double> out(np, 0.0);
    std::vector<std::vector<std::size_t>> groups(comps.size());
    for (std::size_t p = 0; p < np; ++p) {
        const long q = subcube_index(table.cube, j, points.subspan(p * stride, static_cast<std::size_t>(n)),
                                     points[p * stride + static_cast<std::size_t>(n)]);
        if (q >= 0) groups[static_cast<std::size_t>(q)].push_back(p);
    }
    for (std::size_t q = 0; q < comps.size(); ++q) {
        if (groups[q].empty() || comps[q].empty()) continue;
        std::vector<SpacetimePoint> sp;
        sp.reserve(groups[q].size());
        for (std::size_t p : groups[q]) {
            SpacetimePoint s;
            s.x.assign(points.begin() + static_cast<std::ptrdiff_t>(p * stride),
                       points.begin() + static_cast<std::ptrdiff_t>(p * stride + static_cast<std::size_t>(n)));
            s.t = points[p * stride + static_cast<std::size_t>(n)];
            sp.push_back(std::move(s));
        }
        const auto vals = evaluate(comps[q], sp);
        for (std::size_t i = 0; i < sp.size(); ++i) {
            double m2 = 0.0;
            for (const Complex& v : vals[i]) m2 += std::norm(v);
            out[groups[q][i]] = std::sqrt(m2);
        }
    }
    return out;
}

double quilt_l2(const WaveTable& table, int j, double per_unit)
{
    const std::vector<Wave> comps = table.level(j);
    const std::vector<Cube> cells = subcubes(table.cube, j);
    const int n = table.cube.n();
    std::vector<double> parts(cells.size(), 0.0);
    for (std::size_t q = 0; q < cells.size(); ++q) {
        if (comps[q].empty()) continue;
        const Cube& c = cells[q];
        std::vector<double> lo(static_cast<std::size_t>(n));
        for (int d = 0; d < n; ++d) lo[d] = c.lo(d);
        const BoxGrid box = centered_cells(lo, c.side, per_unit);
        const int nt = std::max(1, static_cast<int>(std::ceil(c.side * per_unit)));
        const double dt = c.side / nt;
        std::vector<double> slices(static_cast<std::size_t>(nt));
        for (int i = 0; i < nt; ++i) {
            std::vector<double> m = sample_box_magnitude(comps[q], c.lo(n) + (i + 0.5) * dt, box);
            for (double& v : m) v *= v;
            slices[static_cast<std::size_t>(i)] = pairwise_sum(m);
        }
        parts[q] = pairwise_sum(slices) * std::pow(box.spacing, n) * dt;
    }
    return std::sqrt(pairwise_sum(parts));
}

double table_approximation(const Wave& phi, const Wave& psi, const WaveTable& table, double c, double per_unit)
{
    const double norm = std::sqrt(energy(phi) * energy(psi));
    if (norm == 0.0) return 0.0;
    const int n = phi.n();
    const Region region = Region::interior_set(table.cube, c, table.depth);
    const SliceIntegrand slice = [&](double t, const SpacetimeGrid& g) {
        const BoxGrid box{g.origin, g.spacing, g.counts};
        const std::size_t ns = g.space_size();
        const std::vector<double> fa = sample_box_magnitude(phi, t, box);
        const std::vector<double> fb = sample_box_magnitude(psi, t, box);
        std::vector<double> quilt(ns, 0.0);
        std::vector<long> cell(ns);
        std::vector<double> x(static_cast<std::size_t>(n));
        std::vector<char> needed(table.components.size(), 0);
        for (std::size_t p = 0; p < ns; ++p) {
            g.point(p, x);
            cell[p] = subcube_index(table.cube, table.depth, x, t);
            if (cell[p] >= 0) needed[static_cast<std::size_t>(cell[p])] = 1;
        }
        for (std::size_t q = 0; q < needed.size(); ++q) {
            if (!needed[q] || table.components[q].empty()) continue;
            const std::vector<double> m = sample_box_magnitude(table.components[q], t, box);
            for (std::size_t p = 0; p < ns; ++p)
                if (cell[p] == static_cast<long>(q)) quilt[p] = m[p];
        }
        std::vector<double> out(ns);
        for (std::size_t p = 0; p < ns; ++p) {
            const double d = fa[p] - quilt[p];
            out[p] = d * d * fb[p] * fb[p];
        }
        return out;
    };
    const QuadResult q = slice_quadrature(region, slice, per_unit);
    return std::sqrt(std::max(q.value, 0.0)) / norm;
}

namespace {

std::vector<Complex> forward_fft(const std::vector<Complex>& f, int n, int G)
{
    std::vector<Complex> c(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) c[i] = std::conj(f[i]);
    std::vector<Complex> out = inverse_fft(c, n, G);
    for (auto& v : out) v = std::conj(v);
    return out;
}

std::vector<double> slice_density(const Wave& w, double t, int G)
{
    const int n = w.n();
    const std::vector<Complex> v = fft_slice(w, t, G, zeros(n));
    const std::size_t hd = static_cast<std::size_t>(w.hilbert_dim());
    const std::size_t total = v.size() / hd;
    std::vector<double> out(total, 0.0);
    for (std::size_t c = 0; c < hd; ++c)
        for (std::size_t q = 0; q < total; ++q) out[q] += std::norm(v[c * total + q]);
    return out;
}

}  // namespace

Concentration energy_concentration(const Wave& phi, const Wave& psi, double r, const Cube& Q, double per_unit)
{
    if (!(r > 0.0)) fail(ErrorKind::InvalidArgument, "disk radius must be positive");
    if (!(phi.domain() == psi.domain())) fail(ErrorKind::MixedDomains, "phi and psi live on different tori");
    const int n = phi.n();
    const double L = phi.domain().period;
    if (2.0 * r >= L) fail(ErrorKind::RegionExceedsTorus, "disk does not fit in the torus");
    Concentration res;
    res.center = Q.center;
    res.t = Q.t;
    const double ea = energy(phi), eb = energy(psi);
    res.global = 0.5 * std::sqrt(ea * eb);
    res.value = res.global;
    if (ea == 0.0 || eb == 0.0) return res;

    // disk centres on a grid of step <= r/4, times in the lifespan with the same step
    const double h0 = std::min(0.25 * r, 1.0 / per_unit);
    int G = 8;
    while (L / G > h0) G *= 2;
    const double h = L / G;
    std::size_t total = 1;
    for (int d = 0; d < n; ++d) total *= static_cast<std::size_t>(G);

    // disk indicator with 4^n sub-samples per cell
    constexpr int ss = 4;
    const long B = static_cast<long>(std::ceil(r / h)) + 1;
    std::vector<Complex> W(total);
    std::vector<long> o(static_cast<std::size_t>(n), -B);
    std::vector<int> s(static_cast<std::size_t>(n));
    const int subs = static_cast<int>(std::pow(ss, n));
    while (true) {
        int inside = 0;
        for (int k = 0; k < subs; ++k) {
            int f = k;
            double d2 = 0.0;
            for (int d = 0; d < n; ++d) {
                const double y = (static_cast<double>(o[d]) - 0.5 + (f % ss + 0.5) / ss) * h;
                f /= ss;
                d2 += y * y;
            }
            if (d2 <= r * r) ++inside;
        }
        if (inside) {
            std::size_t slot = 0;
            for (int d = 0; d < n; ++d) {
                long v = o[d] % G;
                if (v < 0) v += G;
                slot = slot * static_cast<std::size_t>(G) + static_cast<std::size_t>(v);
            }
            W[slot] += static_cast<double>(inside) / subs;
        }
        int d = n - 1;
        while (d >= 0 && o[d] == B) {
            o[d] = -B;
            --d;
        }
        if (d < 0) break;
        ++o[d];
    }
    const std::vector<Complex> What = forward_fft(W, n, G);
    const double scale = std::pow(h, n) / static_cast<double>(total);

    auto disk_masses = [&](const Wave& w, double t) {
        const std::vector<double> dens = slice_density(w, t, G);
        std::vector<Complex> f(dens.begin(), dens.end());
        std::vector<Complex> F = forward_fft(f, n, G);
        for (std::size_t i = 0; i < total; ++i) F[i] *= What[i];
        const std::vector<Complex> m = inverse_fft(F, n, G);
        std::vector<double> out(total);
        for (std::size_t i = 0; i < total; ++i) out[i] = std::max(m[i].real() * scale, 0.0);
        return out;
    };

    const int steps = static_cast<int>(std::floor(Q.side / h0 + 1e-9));
    double best = 0.0;
    std::size_t best_slot = 0;
    double best_t = Q.t;
    for (int i = 0; i <= steps; ++i) {
        const double t = Q.t - 0.5 * Q.side + i * h0;
        const std::vector<double> ma = disk_masses(phi, t), mb = disk_masses(psi, t);
        for (std::size_t q = 0; q < total; ++q) {
            const double v = std::sqrt(ma[q] * mb[q]);
            if (v > best) {
                best = v;
                best_slot = q;
                best_t = t;
            }
        }
    }
    res.disk = best;
    if (best > res.global) {
        res.value = best;
        res.t = best_t;
        std::size_t f = best_slot;
        for (int d = n - 1; d >= 0; --d) {
            res.center[d] = h * static_cast<double>(f % static_cast<std::size_t>(G));
            f /= static_cast<std::size_t>(G);
        }
    }
    return res;
}

void to_json(nlohmann::json& j, const Concentration& c)
{
    j = nlohmann::json{{"value", c.value}, {"global", c.global}, {"disk", c.disk}, {"center", c.center}, {"t", c.t}};
}

}  // namespace conewave
