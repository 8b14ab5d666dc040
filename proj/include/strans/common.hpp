#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace strans {

using index_t = std::int64_t;
using Shape = std::vector<index_t>;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when a kernel or loss produces NaN/Inf.
struct NumericsError : Error {
    using Error::Error;
};

#define ST_CHECK(cond, msg)                                                    \
    do {                                                                       \
        if (!(cond)) {                                                         \
            std::ostringstream st_oss_;                                        \
            st_oss_ << "check failed (" #cond "): " << msg;                    \
            throw ::strans::Error(st_oss_.str());                             \
        }                                                                      \
    } while (0)

inline index_t shape_numel(const Shape& s) {
    index_t n = 1;
    for (index_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

/// Keeps multi-megabyte activation buffers inside the heap instead of
/// round-tripping them through mmap/munmap; the kernel page churn otherwise
/// dominates training wall time. Call once at program start.
void tune_allocator();

/// Deterministic random source. mt19937_64 gives an implementation-independent
/// bit stream; the distributions below are hand-rolled on top of it so that
/// sampled values are reproducible across standard libraries too.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t raw() { return eng_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (pair cached).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Normal(0, stddev) restricted to [lo, hi] by rejection.
    double trunc_normal(double stddev, double lo, double hi) {
        for (;;) {
            double v = stddev * normal();
            if (v >= lo && v <= hi) return v;
        }
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Modulo bias is irrelevant at the ranges used here (n << 2^64).
        return eng_() % n;
    }

    std::string state() const {
        std::ostringstream oss;
        oss << eng_ << ' ' << (have_spare_ ? 1 : 0);
        if (have_spare_) {
            std::uint64_t bits;
            static_assert(sizeof(bits) == sizeof(spare_));
            std::memcpy(&bits, &spare_, sizeof(bits));
            oss << ' ' << bits;
        }
        return oss.str();
    }

    void set_state(const std::string& s) {
        std::istringstream iss(s);
        iss >> eng_;
        int flag = 0;
        iss >> flag;
        have_spare_ = flag != 0;
        if (have_spare_) {
            std::uint64_t bits = 0;
            iss >> bits;
            std::memcpy(&spare_, &bits, sizeof(bits));
        }
        ST_CHECK(!iss.fail(), "malformed rng state string");
    }

    /// Derives an independent stream, e.g. per dataset index.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
        // splitmix64 finalizer over seed ^ rotated salt.
        std::uint64_t z = seed ^ (salt * 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace strans
