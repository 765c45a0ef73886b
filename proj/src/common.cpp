#include "conewave/common.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace conewave {

namespace {

std::atomic<int> g_threads{0};

}  // namespace

const char* to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::AtomOutsideSector: return "AtomOutsideSector";
    case ErrorKind::OffLattice: return "OffLattice";
    case ErrorKind::EmptyWave: return "EmptyWave";
    case ErrorKind::MarginTooSmall: return "MarginTooSmall";
    case ErrorKind::DiskTooSmall: return "DiskTooSmall";
    case ErrorKind::RegionExceedsTorus: return "RegionExceedsTorus";
    case ErrorKind::UnboundedRegion: return "UnboundedRegion";
    case ErrorKind::GridTooCoarse: return "GridTooCoarse";
    case ErrorKind::RowSumViolation: return "RowSumViolation";
    case ErrorKind::EnergyNotNormalized: return "EnergyNotNormalized";
    case ErrorKind::SingularSymbol: return "SingularSymbol";
    case ErrorKind::MixedDomains: return "MixedDomains";
    case ErrorKind::NegativeL: return "NegativeL";
    case ErrorKind::InfeasibleSpec: return "InfeasibleSpec";
    case ErrorKind::Config: return "Config";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what)
{
}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

void set_thread_count(int threads) { g_threads = std::max(threads, 0); }

int thread_count()
{
    const int t = g_threads.load();
    if (t > 0) return t;
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body)
{
    const std::size_t workers = std::min<std::size_t>(thread_count(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    const std::size_t block = (count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                const std::size_t lo = w * block;
                const std::size_t hi = std::min(count, lo + block);
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

double pairwise_sum(std::span<const double> values)
{
    if (values.size() <= 16) {
        KahanSum s;
        for (double v : values) s += v;
        return s.value();
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double wendland_bump(double s, int n)
{
    if (s >= 1.0) return 0.0;
    if (s < 0.0) s = -s;
    const double l = static_cast<double>(n / 2 + 4);
    const double p3 = l * l * l + 9 * l * l + 23 * l + 15;
    const double p2 = 6 * l * l + 36 * l + 45;
    const double p1 = 15 * l + 45;
    return std::pow(1.0 - s, l + 3.0) * (((p3 * s + p2) * s + p1) * s + 15.0) / 15.0;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Complex unit_phase(double cycles)
{
    cycles -= std::floor(cycles);
    return std::polar(1.0, kTwoPi * cycles);
}

void for_each_in_ball(int n, double bound, const std::function<void(std::span<const long>)>& f)
{
    const long B = static_cast<long>(std::ceil(bound));
    std::vector<long> m(static_cast<std::size_t>(n), -B);
    const double b2 = bound * bound;
    while (true) {
        double s = 0.0;
        for (long v : m) s += static_cast<double>(v * v);
        if (s < b2) f(m);
        int d = n - 1;
        while (d >= 0 && m[d] == B) {
            m[d] = -B;
            --d;
        }
        if (d < 0) break;
        ++m[d];
    }
}

}  // namespace conewave
