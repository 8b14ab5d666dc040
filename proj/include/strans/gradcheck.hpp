#pragma once

#include <functional>

#include "strans/networks.hpp"

// Central finite-difference verification of the reverse-mode gradients, at
// 64-bit only. Every case builds fresh random inputs (and, where a module is
// involved, registers its parameters as probed inputs too), reduces the
// output to a scalar through a fixed random readout, and compares analytic
// gradients against (f(x+h) - f(x-h)) / 2h at randomly probed coordinates.

namespace strans {

struct FdCase {
    std::string name;
    // builds inputs for one seed; every returned tensor is probed
    std::function<std::vector<Tensor<double>>(Rng&)> make_inputs;
    // scalar-valued function of those inputs
    std::function<Tensor<double>(const std::vector<Tensor<double>>&)> fn;
};

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0;
    bool pass = false;
};

inline constexpr double kFdTolerance = 1e-4;

inline std::uint64_t fnv_salt(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline double run_fd_case(const FdCase& c, std::uint64_t seed, int n_seeds,
                          index_t probes_per_input, double h) {
    double worst = 0;
    for (int s = 0; s < n_seeds; ++s) {
        Rng rng(Rng::mix(seed + static_cast<std::uint64_t>(s),
                         fnv_salt(c.name)));
        std::vector<Tensor<double>> inputs = c.make_inputs(rng);
        for (auto& t : inputs) t.set_requires_grad(true);
        Tensor<double> out = c.fn(inputs);
        ST_CHECK(out.numel() == 1, c.name << ": readout must be scalar");
        std::vector<Tensor<double>> grads = gradient(out, inputs);

        for (size_t i = 0; i < inputs.size(); ++i) {
            const index_t n = inputs[i].numel();
            const index_t probes = std::min<index_t>(probes_per_input, n);
            for (index_t p = 0; p < probes; ++p) {
                const index_t at =
                    n <= probes_per_input
                        ? p
                        : static_cast<index_t>(rng.below(static_cast<std::uint64_t>(n)));
                const double analytic = grads[i].values()[at];
                double& slot = inputs[i].raw()[at];
                const double orig = slot;
                double fp, fm;
                {
                    NoGradGuard ng;
                    slot = orig + h;
                    fp = c.fn(inputs).item();
                    slot = orig - h;
                    fm = c.fn(inputs).item();
                    slot = orig;
                }
                const double fd = (fp - fm) / (2 * h);
                const double rel = std::abs(fd - analytic) /
                                   std::max({1.0, std::abs(fd), std::abs(analytic)});
                if (rel > worst) worst = rel;
            }
        }
    }
    return worst;
}

namespace detail {

/// Fixed random readout so the scalar depends on every output element.
inline Tensor<double> readout(const Tensor<double>& y, const Tensor<double>& w) {
    return sum_all(mul(y, w));
}

inline Tensor<double> randn_like_shape(Rng& rng, Shape s, double stddev = 1.0) {
    return Tensor<double>::randn(std::move(s), rng, stddev);
}

/// Positive random tensor bounded away from zero for log/sqrt/reciprocal.
inline Tensor<double> positive(Rng& rng, Shape s) {
    Tensor<double> t(std::move(s));
    for (double& v : t.raw()) v = 0.5 + std::abs(rng.normal());
    return t;
}

}  // namespace detail

/// The full case list. Elementwise and structural primitives first, then the
/// composite modules up to whole conditioned transformer blocks.
std::vector<FdCase> gradcheck_cases();

/// Runs every case; a case passes when its worst relative error over
/// `n_seeds` seeds stays below kFdTolerance.
inline std::vector<GradCheckResult> run_gradcheck_suite(
    std::uint64_t seed = 1234, int n_seeds = 10, index_t probes = 10,
    double h = 1e-5) {
    std::vector<GradCheckResult> results;
    for (const FdCase& c : gradcheck_cases()) {
        GradCheckResult r;
        r.name = c.name;
        r.max_rel_err = run_fd_case(c, seed, n_seeds, probes, h);
        r.pass = r.max_rel_err < kFdTolerance;
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace strans
