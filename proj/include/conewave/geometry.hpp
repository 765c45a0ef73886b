#pragma once

#include <memory>
#include <optional>

#include "json.hpp"

#include "conewave/common.hpp"

namespace conewave {

struct Disk {
    std::vector<double> center;
    double t = 0.0;
    double radius = 1.0;

    bool contains(std::span<const double> x) const;
};

// Spacetime cube Q(x_Q, t_Q; r_Q), half-open: lo <= coordinate < hi.
struct Cube {
    std::vector<double> center;
    double t = 0.0;
    double side = 1.0;

    int n() const { return static_cast<int>(center.size()); }
    bool contains(std::span<const double> x, double t) const;
    Cube scaled(double c) const;
    double volume() const;
    double lo(int axis) const;  // axis == n() is time
};

enum class ConeColor { Red, Blue, Purple };

const char* to_string(ConeColor c) noexcept;

struct ConeNeighbourhood {
    std::vector<double> vertex;
    double t0 = 0.0;
    double thickness = 1.0;
    ConeColor color = ConeColor::Red;

    bool contains(std::span<const double> x, double t) const;
};

struct Tube {
    std::vector<double> direction;
    std::vector<double> base;
    double radius = 1.0;

    bool contains(std::span<const double> x, double t) const;
    double axis_distance(std::span<const double> x, double t) const;
};

// Distance from (x, t) to the capped cone through the vertex; the cone is
// {(x0 + s w, t0 -+ s) : s real, angle(w, e_1) <= pi/4}, minus sign for red.
// Purple takes the smaller of the two.
double cone_distance(ConeColor color, std::span<const double> vertex, double t0,
                     std::span<const double> x, double t);

// (1 + |x - x_D| / r_D)^{-decay_power}
double cutoff_disk(const Disk& D, std::span<const double> x, double decay_power);
// Disk cutoff centred on the tube axis at time t.
double cutoff_tube(const Tube& T, std::span<const double> x, double t, double decay_power);

// The partition Q_j(Q) into 2^{(n+1)j} subcubes, ordered lexicographically
// by (x_1, ..., x_n, t) cell index.
std::vector<Cube> subcubes(const Cube& Q, int j);
// Index into subcubes(Q, j) of the subcube containing (x, t); -1 if outside Q.
long subcube_index(const Cube& Q, int j, std::span<const double> x, double t);

struct Bounds {
    std::vector<double> lo;  // n + 1 entries, time last
    std::vector<double> hi;
    bool time_slice = false;  // region lives in a single time slice (disks)
};

class Region {
public:
    struct Node {
        virtual ~Node() = default;
        virtual bool contains(std::span<const double> x, double t) const = 0;
        virtual std::optional<Bounds> bounds() const = 0;
        virtual nlohmann::json to_json() const = 0;
    };

    Region() = default;
    explicit Region(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

    bool contains(std::span<const double> x, double t) const { return node_->contains(x, t); }
    std::optional<Bounds> bounds() const { return node_->bounds(); }
    nlohmann::json to_json() const { return node_->to_json(); }
    bool valid() const { return static_cast<bool>(node_); }

    static Region disk(const Disk& d);
    static Region cube(const Cube& q);
    // Q(r_outer) minus the concentric open Q(r_inner).
    static Region cube_annulus(const Cube& centre, double r_inner, double r_outer);
    static Region cone(const ConeNeighbourhood& c);
    static Region tube(const Tube& t);
    // I^{c,k}(Q): union of the level-k subcubes shrunk by (1 - c) about their centres.
    static Region interior_set(const Cube& Q, double c, int k);
    // X(Q): intersection over j = C0..k of I^{c 2^{-(k-j)/N}, j}(Q).
    static Region x_set(const Cube& Q, double c, int C0, int k, double N);

    friend Region operator&(const Region& a, const Region& b);  // intersection
    friend Region operator|(const Region& a, const Region& b);  // union
    friend Region operator-(const Region& a, const Region& b);  // difference

private:
    std::shared_ptr<const Node> node_;
};

Region region_from_json(const nlohmann::json& j);

// Exact measure fraction |I^{c,k}(Q)| / |Q| = (1 - c)^{n+1}.
double interior_fraction(int n, double c);

struct QuadResult {
    double value = 0.0;
    double error_estimate = 0.0;
    double per_unit = 0.0;
    std::size_t points = 0;
};

// Midpoint tensor rule over the region's bounding box, masked by membership.
// The error estimate is |I(h) - I(2h)|.
QuadResult region_quadrature(const Region& region,
                             const std::function<double(std::span<const double>, double)>& f,
                             double per_unit);

// Cell-centred spacetime grid over a bounding box.
struct SpacetimeGrid {
    std::vector<double> origin;  // spatial, first cell centre
    std::vector<int> counts;     // spatial
    double spacing = 1.0;
    std::vector<double> times;   // cell-centre times (a single entry for slices)
    double cell_volume = 1.0;

    std::size_t space_size() const;
    void point(std::size_t flat, std::span<double> x) const;
};

SpacetimeGrid make_grid(const Bounds& b, double per_unit);

// Per-slice quadrature: slice(t, grid) returns integrand values at every
// spatial grid point for time t; values outside the region are masked away.
using SliceIntegrand = std::function<std::vector<double>(double, const SpacetimeGrid&)>;
double masked_sum(const Region& region, const SpacetimeGrid& grid, const SliceIntegrand& slice);
QuadResult slice_quadrature(const Region& region, const SliceIntegrand& slice, double per_unit);

}  // namespace conewave
