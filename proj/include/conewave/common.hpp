#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace conewave {

using Complex = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum class ErrorKind {
    InvalidArgument,
    AtomOutsideSector,
    OffLattice,
    EmptyWave,
    MarginTooSmall,
    DiskTooSmall,
    RegionExceedsTorus,
    UnboundedRegion,
    GridTooCoarse,
    RowSumViolation,
    EnergyNotNormalized,
    SingularSymbol,
    MixedDomains,
    NegativeL,
    InfeasibleSpec,
    Config,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what);
    ErrorKind kind() const noexcept { return kind_; }
    const std::string& detail() const noexcept { return detail_; }  // message without the kind prefix

private:
    ErrorKind kind_;
    std::string detail_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

// Worker count used by parallel_for. Results never depend on it.
void set_thread_count(int threads);
int thread_count();

// Runs body(i) for i in [0, count). Work is split into contiguous blocks, so
// callers that write results by index and reduce afterwards in index order get
// output independent of the thread count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

// Neumaier compensated accumulator.
class KahanSum {
public:
    void add(double v) noexcept
    {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    KahanSum& operator+=(double v) noexcept
    {
        add(v);
        return *this;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

// Pairwise summation over a fixed binary tree; order depends only on size.
double pairwise_sum(std::span<const double> values);

// Compactly supported positive-definite radial bump on R^n (Wendland type,
// smoothness C^6): value 1 at s = 0, zero for s >= 1.
double wendland_bump(double s, int n);

// e^{2 pi i cycles}, reduced mod 1 first.
Complex unit_phase(double cycles);

// Calls f(m) for every integer vector with |m| < bound, lexicographically.
void for_each_in_ball(int n, double bound, const std::function<void(std::span<const long>)>& f);

double norm2(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);

}  // namespace conewave
