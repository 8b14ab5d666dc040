#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "strans/common.hpp"
#include "strans/kernels.hpp"

// Times the serial reference kernels against the OpenMP variants on the
// shapes that dominate training (attention/MLP matmuls, elementwise maps,
// row softmax) and cross-checks that both backends produce identical bytes.

namespace {

using strans::index_t;
using strans::Rng;
namespace K = strans::kernels;

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

template <class F>
double time_best(F&& f, int reps) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_s();
        f();
        best = std::min(best, now_s() - t0);
    }
    return best;
}

template <class T>
std::vector<T> randv(Rng& rng, index_t n, double s = 1.0) {
    std::vector<T> v(static_cast<size_t>(n));
    for (T& x : v) x = static_cast<T>(s * rng.normal());
    return v;
}

template <class T>
bool same_bytes(const std::vector<T>& a, const std::vector<T>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

struct Row {
    std::string name;
    double serial_s = 0, omp_s = 0, work = 0;  // work: flop or bytes moved
    const char* unit = "GF/s";
    bool match = true;
};

std::vector<Row> rows;

template <class T>
void bench_matmul(Rng& rng, index_t g, index_t m, index_t k, index_t n,
                  const char* tag) {
    auto a = randv<T>(rng, g * m * k);
    auto b = randv<T>(rng, g * k * n);
    std::vector<T> c_s(static_cast<size_t>(g * m * n)),
        c_o(static_cast<size_t>(g * m * n));
    const double flop = 2.0 * static_cast<double>(g) * m * k * n;
    const int reps = flop > 5e7 ? 10 : 40;
    Row r;
    r.name = tag;
    r.work = flop;
    r.serial_s = time_best(
        [&] {
            std::fill(c_s.begin(), c_s.end(), T(0));
            K::serial::matmul(a.data(), b.data(), c_s.data(), g, m, k, n, false);
        },
        reps);
    r.omp_s = time_best(
        [&] {
            std::fill(c_o.begin(), c_o.end(), T(0));
            K::omp::matmul(a.data(), b.data(), c_o.data(), g, m, k, n, false);
        },
        reps);
    r.match = same_bytes(c_s, c_o);
    rows.push_back(r);
}

template <class T>
void bench_unary(Rng& rng, K::Unary kind, index_t n, const char* tag) {
    auto a = randv<T>(rng, n);
    std::vector<T> y_s(static_cast<size_t>(n)), y_o(static_cast<size_t>(n));
    Row r;
    r.name = tag;
    r.work = 2.0 * static_cast<double>(n) * sizeof(T);
    r.unit = "GB/s";
    r.serial_s = time_best(
        [&] { K::serial::unary_op(kind, a.data(), y_s.data(), n, T(0.2)); }, 20);
    r.omp_s = time_best(
        [&] { K::omp::unary_op(kind, a.data(), y_o.data(), n, T(0.2)); }, 20);
    r.match = same_bytes(y_s, y_o);
    rows.push_back(r);
}

template <class T>
void bench_softmax(Rng& rng, index_t m, index_t n, const char* tag) {
    auto a = randv<T>(rng, m * n);
    std::vector<T> y_s(static_cast<size_t>(m * n)), y_o(static_cast<size_t>(m * n));
    Row r;
    r.name = tag;
    r.work = 2.0 * static_cast<double>(m) * n * sizeof(T);
    r.unit = "GB/s";
    r.serial_s =
        time_best([&] { K::serial::softmax_rows(a.data(), y_s.data(), m, n); }, 20);
    r.omp_s =
        time_best([&] { K::omp::softmax_rows(a.data(), y_o.data(), m, n); }, 20);
    r.match = same_bytes(y_s, y_o);
    rows.push_back(r);
}

}  // namespace

int main() {
    strans::tune_allocator();
    Rng rng(7);

    bench_matmul<float>(rng, 1, 128, 128, 128, "matmul f32 128^3");
    bench_matmul<float>(rng, 1, 256, 256, 256, "matmul f32 256^3");
    bench_matmul<float>(rng, 64, 64, 32, 64, "matmul f32 64x[64,32,64]");
    bench_matmul<double>(rng, 1, 128, 128, 128, "matmul f64 128^3");
    bench_matmul<double>(rng, 1, 256, 256, 256, "matmul f64 256^3");
    bench_matmul<double>(rng, 64, 64, 32, 64, "matmul f64 64x[64,32,64]");
    bench_unary<float>(rng, K::Unary::Exp, 1 << 20, "exp f32 1M");
    bench_unary<double>(rng, K::Unary::Exp, 1 << 20, "exp f64 1M");
    bench_unary<double>(rng, K::Unary::Tanh, 1 << 20, "tanh f64 1M");
    bench_softmax<float>(rng, 4096, 256, "softmax f32 4096x256");
    bench_softmax<double>(rng, 4096, 256, "softmax f64 4096x256");

    std::printf("%-26s %11s %10s %9s %13s  %s\n", "kernel", "serial", "openmp",
                "speedup", "rate", "match");
    bool all_match = true;
    for (const Row& r : rows) {
        const double rate = r.work / r.omp_s * 1e-9;
        std::printf("%-26s %9.3fms %8.3fms %8.2fx %6.2f %s  %s\n", r.name.c_str(),
                    r.serial_s * 1e3, r.omp_s * 1e3, r.serial_s / r.omp_s, rate,
                    r.unit, r.match ? "yes" : "NO");
        all_match = all_match && r.match;
    }
    if (!all_match) {
        std::printf("backend mismatch detected\n");
        return 1;
    }
    return 0;
}
