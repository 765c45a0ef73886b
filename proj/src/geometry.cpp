#include "conewave/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace conewave {

namespace {

constexpr double kCapAngle = kPi / 4.0;

double dist(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

std::vector<double> vec(const nlohmann::json& j) { return j.get<std::vector<double>>(); }

ConeColor cone_color_from_string(const std::string& s)
{
    if (s == "red") return ConeColor::Red;
    if (s == "blue") return ConeColor::Blue;
    if (s == "purple") return ConeColor::Purple;
    fail(ErrorKind::InvalidArgument, "unknown cone colour '" + s + "'");
}

// Squared distance to the red (sign = +1) or blue (sign = -1) capped cone.
double cone_distance2(double sign, std::span<const double> y, double tau)
{
    const double ny = norm2(y);
    double u_lo = 0.0, u_hi = 0.0;
    if (ny > 0.0) {
        double perp2 = 0.0;
        for (std::size_t i = 1; i < y.size(); ++i) perp2 += y[i] * y[i];
        const double theta = std::atan2(std::sqrt(perp2), y[0]);
        u_hi = ny * std::cos(std::max(0.0, theta - kCapAngle));
        u_lo = ny * std::cos(std::min(kPi, theta + kCapAngle));
    }
    // Along the ray s -> (s w, -sign s) the minimum over s leaves
    // |y|^2 + tau^2 - (u - sign tau)^2 / 2 with u = y.w; maximise over the cap.
    const double a = u_lo - sign * tau, b = u_hi - sign * tau;
    const double best = std::max(a * a, b * b);
    return std::max(0.0, ny * ny + tau * tau - 0.5 * best);
}

}  // namespace

bool Disk::contains(std::span<const double> x) const { return dist(x, center) <= radius; }

bool Cube::contains(std::span<const double> x, double tt) const
{
    const double h = 0.5 * side;
    for (std::size_t i = 0; i < center.size(); ++i)
        if (x[i] < center[i] - h || x[i] >= center[i] + h) return false;
    return tt >= t - h && tt < t + h;
}

Cube Cube::scaled(double c) const { return Cube{center, t, side * c}; }

double Cube::volume() const { return std::pow(side, n() + 1); }

double Cube::lo(int axis) const
{
    return (axis == n() ? t : center[static_cast<std::size_t>(axis)]) - 0.5 * side;
}

const char* to_string(ConeColor c) noexcept
{
    switch (c) {
    case ConeColor::Red: return "red";
    case ConeColor::Blue: return "blue";
    case ConeColor::Purple: return "purple";
    }
    return "?";
}

double cone_distance(ConeColor color, std::span<const double> vertex, double t0,
                     std::span<const double> x, double t)
{
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - vertex[i];
    const double tau = t - t0;
    switch (color) {
    case ConeColor::Red: return std::sqrt(cone_distance2(1.0, y, tau));
    case ConeColor::Blue: return std::sqrt(cone_distance2(-1.0, y, tau));
    case ConeColor::Purple:
        return std::sqrt(std::min(cone_distance2(1.0, y, tau), cone_distance2(-1.0, y, tau)));
    }
    return 0.0;
}

bool ConeNeighbourhood::contains(std::span<const double> x, double t) const
{
    return cone_distance(color, vertex, t0, x, t) <= thickness;
}

double Tube::axis_distance(std::span<const double> x, double t) const
{
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - (base[i] + direction[i] * t);
        s += d * d;
    }
    return std::sqrt(s);
}

bool Tube::contains(std::span<const double> x, double t) const { return axis_distance(x, t) <= radius; }

double cutoff_disk(const Disk& D, std::span<const double> x, double decay_power)
{
    return std::pow(1.0 + dist(x, D.center) / D.radius, -decay_power);
}

double cutoff_tube(const Tube& T, std::span<const double> x, double t, double decay_power)
{
    return std::pow(1.0 + T.axis_distance(x, t) / T.radius, -decay_power);
}

std::vector<Cube> subcubes(const Cube& Q, int j)
{
    if (j < 0) fail(ErrorKind::InvalidArgument, "subcube level must be >= 0");
    if (j > 20) fail(ErrorKind::InvalidArgument, "subcube level too deep");
    const int n = Q.n();
    const long per_axis = 1L << j;
    const double s = Q.side / static_cast<double>(per_axis);
    long total = 1;
    for (int d = 0; d <= n; ++d) total *= per_axis;
    std::vector<Cube> out;
    out.reserve(static_cast<std::size_t>(total));
    std::vector<long> idx(static_cast<std::size_t>(n + 1));
    for (long f = 0; f < total; ++f) {
        long r = f;
        for (int d = n; d >= 0; --d) {
            idx[d] = r % per_axis;
            r /= per_axis;
        }
        Cube q;
        q.side = s;
        q.center.resize(static_cast<std::size_t>(n));
        const double mid = 0.5 * static_cast<double>(per_axis);
        for (int d = 0; d < n; ++d) q.center[d] = Q.center[d] + (static_cast<double>(idx[d]) + 0.5 - mid) * s;
        q.t = Q.t + (static_cast<double>(idx[n]) + 0.5 - mid) * s;
        out.push_back(std::move(q));
    }
    return out;
}

long subcube_index(const Cube& Q, int j, std::span<const double> x, double t)
{
    if (!Q.contains(x, t)) return -1;
    const int n = Q.n();
    const long per_axis = 1L << j;
    const double s = Q.side / static_cast<double>(per_axis);
    long f = 0;
    for (int d = 0; d <= n; ++d) {
        const double v = d == n ? t : x[d];
        long i = static_cast<long>(std::floor((v - Q.lo(d)) / s));
        i = std::clamp(i, 0L, per_axis - 1);
        f = f * per_axis + i;
    }
    return f;
}

double interior_fraction(int n, double c) { return std::pow(1.0 - c, n + 1); }

namespace {

Bounds cube_bounds(const Cube& q)
{
    Bounds b;
    for (int d = 0; d <= q.n(); ++d) {
        b.lo.push_back(q.lo(d));
        b.hi.push_back(q.lo(d) + q.side);
    }
    return b;
}

nlohmann::json cube_json(const Cube& q)
{
    return {{"center", q.center}, {"t", q.t}, {"side", q.side}};
}

Cube cube_from(const nlohmann::json& j)
{
    Cube q{vec(j.at("center")), j.at("t").get<double>(), j.at("side").get<double>()};
    if (!(q.side > 0.0)) fail(ErrorKind::InvalidArgument, "cube side must be positive");
    return q;
}

struct DiskNode : Region::Node {
    Disk d;
    explicit DiskNode(Disk v) : d(std::move(v)) {}
    bool contains(std::span<const double> x, double t) const override
    {
        return t == d.t && d.contains(x);
    }
    std::optional<Bounds> bounds() const override
    {
        Bounds b;
        for (double c : d.center) {
            b.lo.push_back(c - d.radius);
            b.hi.push_back(c + d.radius);
        }
        b.lo.push_back(d.t);
        b.hi.push_back(d.t);
        b.time_slice = true;
        return b;
    }
    nlohmann::json to_json() const override
    {
        return {{"type", "disk"}, {"center", d.center}, {"t", d.t}, {"radius", d.radius}};
    }
};

struct CubeNode : Region::Node {
    Cube q;
    explicit CubeNode(Cube v) : q(std::move(v)) {}
    bool contains(std::span<const double> x, double t) const override { return q.contains(x, t); }
    std::optional<Bounds> bounds() const override { return cube_bounds(q); }
    nlohmann::json to_json() const override
    {
        auto j = cube_json(q);
        j["type"] = "cube";
        return j;
    }
};

struct AnnulusNode : Region::Node {
    Cube outer, inner;
    AnnulusNode(const Cube& c, double r1, double r2) : outer{c.center, c.t, r2}, inner{c.center, c.t, r1} {}
    bool contains(std::span<const double> x, double t) const override
    {
        return outer.contains(x, t) && !inner.contains(x, t);
    }
    std::optional<Bounds> bounds() const override { return cube_bounds(outer); }
    nlohmann::json to_json() const override
    {
        return {{"type", "cube_annulus"}, {"center", outer.center}, {"t", outer.t},
                {"r_inner", inner.side}, {"r_outer", outer.side}};
    }
};

struct ConeNode : Region::Node {
    ConeNeighbourhood c;
    explicit ConeNode(ConeNeighbourhood v) : c(std::move(v)) {}
    bool contains(std::span<const double> x, double t) const override { return c.contains(x, t); }
    std::optional<Bounds> bounds() const override { return std::nullopt; }
    nlohmann::json to_json() const override
    {
        return {{"type", "cone"}, {"color", to_string(c.color)}, {"vertex", c.vertex},
                {"t", c.t0}, {"thickness", c.thickness}};
    }
};

struct TubeNode : Region::Node {
    Tube tb;
    explicit TubeNode(Tube v) : tb(std::move(v)) {}
    bool contains(std::span<const double> x, double t) const override { return tb.contains(x, t); }
    std::optional<Bounds> bounds() const override { return std::nullopt; }
    nlohmann::json to_json() const override
    {
        return {{"type", "tube"}, {"direction", tb.direction}, {"base", tb.base}, {"radius", tb.radius}};
    }
};

// Membership in the (1 - c) shrink of the level-k subcube containing the point.
bool in_interior(const Cube& Q, double c, int k, std::span<const double> x, double t)
{
    if (!Q.contains(x, t)) return false;
    const int n = Q.n();
    const double s = std::ldexp(Q.side, -k);
    const double half = 0.5 * (1.0 - c) * s;
    for (int d = 0; d <= n; ++d) {
        const double v = (d == n ? t : x[d]) - Q.lo(d);
        const double centre = (std::floor(v / s) + 0.5) * s;
        if (std::abs(v - centre) > half) return false;
    }
    return true;
}

struct InteriorNode : Region::Node {
    Cube q;
    double c;
    int k;
    InteriorNode(Cube v, double cc, int kk) : q(std::move(v)), c(cc), k(kk) {}
    bool contains(std::span<const double> x, double t) const override { return in_interior(q, c, k, x, t); }
    std::optional<Bounds> bounds() const override { return cube_bounds(q); }
    nlohmann::json to_json() const override
    {
        auto j = cube_json(q);
        j["type"] = "interior_set";
        j["c"] = c;
        j["k"] = k;
        return j;
    }
};

struct XNode : Region::Node {
    Cube q;
    double c, N;
    int C0, k;
    XNode(Cube v, double cc, int c0, int kk, double nn) : q(std::move(v)), c(cc), N(nn), C0(c0), k(kk) {}
    bool contains(std::span<const double> x, double t) const override
    {
        for (int j = C0; j <= k; ++j)
            if (!in_interior(q, c * std::pow(2.0, -(k - j) / N), j, x, t)) return false;
        return true;
    }
    std::optional<Bounds> bounds() const override { return cube_bounds(q); }
    nlohmann::json to_json() const override
    {
        auto j = cube_json(q);
        j["type"] = "x_set";
        j["c"] = c;
        j["C0"] = C0;
        j["k"] = k;
        j["N"] = N;
        return j;
    }
};

enum class Op { And, Or, Minus };

std::optional<Bounds> merge(const std::optional<Bounds>& a, const std::optional<Bounds>& b, Op op)
{
    if (op == Op::Minus) return a;
    if (op == Op::Or) {
        if (!a || !b) return std::nullopt;
        if (a->time_slice != b->time_slice) return std::nullopt;
        Bounds r = *a;
        for (std::size_t i = 0; i < r.lo.size(); ++i) {
            r.lo[i] = std::min(r.lo[i], b->lo[i]);
            r.hi[i] = std::max(r.hi[i], b->hi[i]);
        }
        if (r.time_slice && r.lo.back() != r.hi.back()) return std::nullopt;
        return r;
    }
    if (!a) return b;
    if (!b) return a;
    Bounds r = *a;
    r.time_slice = a->time_slice || b->time_slice;
    for (std::size_t i = 0; i < r.lo.size(); ++i) {
        r.lo[i] = std::max(r.lo[i], b->lo[i]);
        r.hi[i] = std::min(r.hi[i], b->hi[i]);
        r.hi[i] = std::max(r.hi[i], r.lo[i]);
    }
    if (r.time_slice) r.hi.back() = r.lo.back() = (a->time_slice ? a->lo.back() : b->lo.back());
    return r;
}

struct BinaryNode : Region::Node {
    Region a, b;
    Op op;
    BinaryNode(Region x, Region y, Op o) : a(std::move(x)), b(std::move(y)), op(o) {}
    bool contains(std::span<const double> x, double t) const override
    {
        switch (op) {
        case Op::And: return a.contains(x, t) && b.contains(x, t);
        case Op::Or: return a.contains(x, t) || b.contains(x, t);
        case Op::Minus: return a.contains(x, t) && !b.contains(x, t);
        }
        return false;
    }
    std::optional<Bounds> bounds() const override { return merge(a.bounds(), b.bounds(), op); }
    nlohmann::json to_json() const override
    {
        const char* name = op == Op::And ? "intersection" : op == Op::Or ? "union" : "difference";
        return {{"type", name}, {"parts", {a.to_json(), b.to_json()}}};
    }
};

}  // namespace

Region Region::disk(const Disk& d)
{
    if (!(d.radius > 0.0)) fail(ErrorKind::InvalidArgument, "disk radius must be positive");
    return Region(std::make_shared<DiskNode>(d));
}

Region Region::cube(const Cube& q)
{
    if (!(q.side > 0.0)) fail(ErrorKind::InvalidArgument, "cube side must be positive");
    return Region(std::make_shared<CubeNode>(q));
}

Region Region::cube_annulus(const Cube& centre, double r_inner, double r_outer)
{
    if (!(r_inner >= 0.0) || !(r_outer > r_inner))
        fail(ErrorKind::InvalidArgument, "annulus needs 0 <= r_inner < r_outer");
    return Region(std::make_shared<AnnulusNode>(centre, r_inner, r_outer));
}

Region Region::cone(const ConeNeighbourhood& c)
{
    if (!(c.thickness >= 0.0)) fail(ErrorKind::InvalidArgument, "cone thickness must be >= 0");
    return Region(std::make_shared<ConeNode>(c));
}

Region Region::tube(const Tube& t)
{
    if (!(t.radius > 0.0)) fail(ErrorKind::InvalidArgument, "tube radius must be positive");
    return Region(std::make_shared<TubeNode>(t));
}

Region Region::interior_set(const Cube& Q, double c, int k)
{
    if (!(c > 0.0 && c < 0.5)) fail(ErrorKind::InvalidArgument, "c must lie in (0, 1/2)");
    if (k < 0) fail(ErrorKind::InvalidArgument, "k must be >= 0");
    return Region(std::make_shared<InteriorNode>(Q, c, k));
}

Region Region::x_set(const Cube& Q, double c, int C0, int k, double N)
{
    if (!(c > 0.0 && c < 0.5)) fail(ErrorKind::InvalidArgument, "c must lie in (0, 1/2)");
    if (C0 < 0 || k < C0) fail(ErrorKind::InvalidArgument, "need 0 <= C0 <= k");
    if (!(N > 0.0)) fail(ErrorKind::InvalidArgument, "N must be positive");
    return Region(std::make_shared<XNode>(Q, c, C0, k, N));
}

Region operator&(const Region& a, const Region& b) { return Region(std::make_shared<BinaryNode>(a, b, Op::And)); }
Region operator|(const Region& a, const Region& b) { return Region(std::make_shared<BinaryNode>(a, b, Op::Or)); }
Region operator-(const Region& a, const Region& b) { return Region(std::make_shared<BinaryNode>(a, b, Op::Minus)); }

Region region_from_json(const nlohmann::json& j)
{
    const std::string type = j.at("type").get<std::string>();
    if (type == "disk") return Region::disk({vec(j.at("center")), j.at("t").get<double>(), j.at("radius").get<double>()});
    if (type == "cube") return Region::cube(cube_from(j));
    if (type == "cube_annulus")
        return Region::cube_annulus(Cube{vec(j.at("center")), j.at("t").get<double>(), 1.0},
                                    j.at("r_inner").get<double>(), j.at("r_outer").get<double>());
    if (type == "cone")
        return Region::cone({vec(j.at("vertex")), j.at("t").get<double>(), j.at("thickness").get<double>(),
                             cone_color_from_string(j.at("color").get<std::string>())});
    if (type == "tube") return Region::tube({vec(j.at("direction")), vec(j.at("base")), j.at("radius").get<double>()});
    if (type == "interior_set") return Region::interior_set(cube_from(j), j.at("c").get<double>(), j.at("k").get<int>());
    if (type == "x_set")
        return Region::x_set(cube_from(j), j.at("c").get<double>(), j.at("C0").get<int>(), j.at("k").get<int>(),
                             j.at("N").get<double>());
    if (type == "intersection" || type == "union" || type == "difference") {
        const auto& p = j.at("parts");
        if (p.size() != 2) fail(ErrorKind::InvalidArgument, "binary region needs two parts");
        const Region a = region_from_json(p.at(0)), b = region_from_json(p.at(1));
        return type == "intersection" ? (a & b) : type == "union" ? (a | b) : (a - b);
    }
    fail(ErrorKind::InvalidArgument, "unknown region type '" + type + "'");
}

std::size_t SpacetimeGrid::space_size() const
{
    std::size_t s = 1;
    for (int c : counts) s *= static_cast<std::size_t>(c);
    return s;
}

void SpacetimeGrid::point(std::size_t flat, std::span<double> x) const
{
    for (int d = static_cast<int>(counts.size()) - 1; d >= 0; --d) {
        const std::size_t c = static_cast<std::size_t>(counts[d]);
        x[d] = origin[d] + spacing * static_cast<double>(flat % c);
        flat /= c;
    }
}

SpacetimeGrid make_grid(const Bounds& b, double per_unit)
{
    if (!(per_unit > 0.0)) fail(ErrorKind::InvalidArgument, "quadrature resolution must be positive");
    const std::size_t n = b.lo.size() - 1;
    SpacetimeGrid g;
    g.spacing = 1.0 / per_unit;
    g.counts.resize(n);
    g.origin.resize(n);
    double vol = 1.0;
    for (std::size_t d = 0; d < n; ++d) {
        const double ext = b.hi[d] - b.lo[d];
        g.counts[d] = std::max(1, static_cast<int>(std::ceil(ext * per_unit - 1e-9)));
        g.origin[d] = b.lo[d] + 0.5 * g.spacing;
        vol *= g.spacing;
    }
    if (b.time_slice) {
        g.times = {b.lo[n]};
    } else {
        const double ext = b.hi[n] - b.lo[n];
        const int nt = std::max(1, static_cast<int>(std::ceil(ext * per_unit - 1e-9)));
        const double dt = ext / nt;
        for (int i = 0; i < nt; ++i) g.times.push_back(b.lo[n] + (i + 0.5) * dt);
        vol *= dt;
    }
    g.cell_volume = vol;
    return g;
}

double masked_sum(const Region& region, const SpacetimeGrid& grid, const SliceIntegrand& slice)
{
    std::vector<double> partial(grid.times.size());
    const std::size_t npts = grid.space_size();
    const std::size_t n = grid.counts.size();
    for (std::size_t i = 0; i < grid.times.size(); ++i) {
        const double t = grid.times[i];
        const std::vector<double> v = slice(t, grid);
        std::vector<double> kept(npts, 0.0);
        parallel_for(npts, [&](std::size_t p) {
            std::vector<double> x(n);
            grid.point(p, x);
            if (region.contains(x, t)) kept[p] = v[p];
        });
        partial[i] = pairwise_sum(kept);
    }
    return pairwise_sum(partial) * grid.cell_volume;
}

namespace {

Bounds checked_bounds(const Region& region)
{
    const auto b = region.bounds();
    if (!b) fail(ErrorKind::UnboundedRegion, "quadrature needs a bounded region");
    return *b;
}

}  // namespace

QuadResult slice_quadrature(const Region& region, const SliceIntegrand& slice, double per_unit)
{
    const Bounds b = checked_bounds(region);
    const SpacetimeGrid fine = make_grid(b, per_unit);
    const SpacetimeGrid coarse = make_grid(b, 0.5 * per_unit);
    QuadResult r;
    r.value = masked_sum(region, fine, slice);
    r.error_estimate = std::abs(r.value - masked_sum(region, coarse, slice));
    r.per_unit = per_unit;
    r.points = fine.space_size() * fine.times.size();
    return r;
}

QuadResult region_quadrature(const Region& region,
                             const std::function<double(std::span<const double>, double)>& f,
                             double per_unit)
{
    auto slice = [&](double t, const SpacetimeGrid& g) {
        std::vector<double> v(g.space_size());
        const std::size_t n = g.counts.size();
        parallel_for(v.size(), [&](std::size_t p) {
            std::vector<double> x(n);
            g.point(p, x);
            v[p] = f(x, t);
        });
        return v;
    };
    return slice_quadrature(region, slice, per_unit);
}

}  // namespace conewave
