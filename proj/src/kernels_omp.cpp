#include <omp.h>

#include <cmath>

#include "strans/kernels.hpp"

// OpenMP backend. Work is split over independent output elements only, and
// each element is computed with the same per-element arithmetic order as the
// serial reference, so results are bitwise identical to kernels_serial.cpp
// for any thread count.

namespace strans::kernels::omp {

template <class T>
void fill(T* out, index_t n, T v) {
#pragma omp parallel for schedule(static)
    for (index_t i = 0; i < n; ++i) out[i] = v;
}

template <class T>
static inline T unary_one(Unary kind, T x, T p) {
    switch (kind) {
        case Unary::Exp: return std::exp(x);
        case Unary::Log: return std::log(x);
        case Unary::Sqrt: return std::sqrt(x);
        case Unary::Reciprocal: return T(1) / x;
        case Unary::Erf: return std::erf(x);
        case Unary::Tanh: return std::tanh(x);
        case Unary::Sigmoid: return T(1) / (T(1) + std::exp(-x));
        case Unary::Softplus:
            return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
        case Unary::LeakyRelu: return x > T(0) ? x : p * x;
        case Unary::LeakyReluMask: return x > T(0) ? T(1) : p;
        case Unary::Square: return x * x;
    }
    return T(0);
}

template <class T>
void unary_op(Unary kind, const T* a, T* out, index_t n, T param) {
#pragma omp parallel for schedule(static)
    for (index_t i = 0; i < n; ++i) out[i] = unary_one(kind, a[i], param);
}

template <class T>
void binary_op(Binary kind, const T* a, const T* b, T* out, index_t n) {
    switch (kind) {
        case Binary::Add:
#pragma omp parallel for schedule(static)
            for (index_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
            break;
        case Binary::Sub:
#pragma omp parallel for schedule(static)
            for (index_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
            break;
        case Binary::Mul:
#pragma omp parallel for schedule(static)
            for (index_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
            break;
    }
}

template <class T>
void axpb(const T* a, T* out, index_t n, T s, T c) {
#pragma omp parallel for schedule(static)
    for (index_t i = 0; i < n; ++i) out[i] = s * a[i] + c;
}

template <class T>
void matmul(const T* a, const T* b, T* c, index_t g, index_t m, index_t k,
            index_t n, bool b_shared) {
    // Rows are independent; k stays ascending per output element so the
    // accumulation order matches the reference exactly.
#pragma omp parallel for collapse(2) schedule(static)
    for (index_t gi = 0; gi < g; ++gi) {
        for (index_t i = 0; i < m; ++i) {
            const T* arow = a + (gi * m + i) * k;
            const T* bg = b + (b_shared ? 0 : gi * k * n);
            T* crow = c + (gi * m + i) * n;
            for (index_t p = 0; p < k; ++p) {
                const T av = arow[p];
                const T* brow = bg + p * n;
                for (index_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

template <class T>
void softmax_rows(const T* x, T* y, index_t rows, index_t cols) {
#pragma omp parallel for schedule(static)
    for (index_t r = 0; r < rows; ++r) {
        const T* xr = x + r * cols;
        T* yr = y + r * cols;
        T mx = xr[0];
        for (index_t c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
        T sum = T(0);
        for (index_t c = 0; c < cols; ++c) {
            yr[c] = std::exp(xr[c] - mx);
            sum += yr[c];
        }
        const T inv = T(1) / sum;
        for (index_t c = 0; c < cols; ++c) yr[c] *= inv;
    }
}

template <class T>
void gather(const T* src, const index_t* idx, T* out, index_t n) {
#pragma omp parallel for schedule(static)
    for (index_t i = 0; i < n; ++i)
        out[i] = idx[i] >= 0 ? src[idx[i]] : T(0);
}

template <class T>
void scatter_add(const T* src, const AdjointCsr& adj, T* out, index_t dst_n) {
#pragma omp parallel for schedule(static)
    for (index_t d = 0; d < dst_n; ++d) {
        T acc = T(0);
        for (index_t k = adj.offsets[d]; k < adj.offsets[d + 1]; ++k)
            acc += src[adj.sources[k]];
        out[d] = acc;
    }
}

template <class T>
void interp_gather(const T* src, const InterpMap& map, T* out) {
#pragma omp parallel for schedule(static)
    for (index_t i = 0; i < map.out_numel; ++i) {
        T acc = T(0);
        for (int t = 0; t < 4; ++t) {
            const index_t j = map.idx[i * 4 + t];
            if (j >= 0) acc += static_cast<T>(map.w[i * 4 + t]) * src[j];
        }
        out[i] = acc;
    }
}

template <class T>
void interp_scatter(const T* src, const InterpMap& map, T* out) {
    const AdjointCsr& adj = map.adjoint();
    const std::vector<double>& w = map.adjoint_w();
#pragma omp parallel for schedule(static)
    for (index_t d = 0; d < map.src_numel; ++d) {
        T acc = T(0);
        for (index_t k = adj.offsets[d]; k < adj.offsets[d + 1]; ++k)
            acc += static_cast<T>(w[k]) * src[adj.sources[k]];
        out[d] = acc;
    }
}

template <class T>
void transpose2(const T* a, T* out, index_t g, index_t m, index_t n) {
#pragma omp parallel for collapse(2) schedule(static)
    for (index_t gi = 0; gi < g; ++gi) {
        for (index_t i = 0; i < m; ++i) {
            const T* ar = a + (gi * m + i) * n;
            T* og = out + gi * m * n;
            for (index_t j = 0; j < n; ++j) og[j * m + i] = ar[j];
        }
    }
}

inline constexpr index_t kSumChunks = 64;

template <class T>
T sum_all(const T* a, index_t n) {
    T partial[kSumChunks];
    const index_t step = (n + kSumChunks - 1) / kSumChunks;
#pragma omp parallel for schedule(static)
    for (index_t c = 0; c < kSumChunks; ++c) {
        T acc = T(0);
        const index_t lo = c * step, hi = std::min(n, lo + step);
        for (index_t i = lo; i < hi; ++i) acc += a[i];
        partial[c] = acc;
    }
    T total = T(0);
    for (index_t c = 0; c < kSumChunks; ++c) total += partial[c];
    return total;
}

template <class T>
T sumsq_all(const T* a, index_t n) {
    T partial[kSumChunks];
    const index_t step = (n + kSumChunks - 1) / kSumChunks;
#pragma omp parallel for schedule(static)
    for (index_t c = 0; c < kSumChunks; ++c) {
        T acc = T(0);
        const index_t lo = c * step, hi = std::min(n, lo + step);
        for (index_t i = lo; i < hi; ++i) acc += a[i] * a[i];
        partial[c] = acc;
    }
    T total = T(0);
    for (index_t c = 0; c < kSumChunks; ++c) total += partial[c];
    return total;
}

template <class T>
void sum_last(const T* a, index_t rows, index_t cols, T* out) {
#pragma omp parallel for schedule(static)
    for (index_t r = 0; r < rows; ++r) {
        T acc = T(0);
        const T* ar = a + r * cols;
        for (index_t c = 0; c < cols; ++c) acc += ar[c];
        out[r] = acc;
    }
}

template <class T>
void sum_leading(const T* a, index_t rows, index_t cols, T* out) {
#pragma omp parallel for schedule(static)
    for (index_t c = 0; c < cols; ++c) {
        T acc = T(0);
        for (index_t r = 0; r < rows; ++r) acc += a[r * cols + c];
        out[c] = acc;
    }
}

template <class T>
void bcast_last(const T* a, index_t rows, index_t cols, T* out) {
#pragma omp parallel for schedule(static)
    for (index_t r = 0; r < rows; ++r) {
        const T v = a[r];
        T* orow = out + r * cols;
        for (index_t c = 0; c < cols; ++c) orow[c] = v;
    }
}

template <class T>
void bcast_leading(const T* v, index_t rows, index_t cols, T* out) {
#pragma omp parallel for schedule(static)
    for (index_t r = 0; r < rows; ++r) {
        T* orow = out + r * cols;
        for (index_t c = 0; c < cols; ++c) orow[c] = v[c];
    }
}

template <class T>
bool all_finite(const T* a, index_t n) {
    bool ok = true;
#pragma omp parallel for schedule(static) reduction(&& : ok)
    for (index_t i = 0; i < n; ++i) ok = ok && std::isfinite(a[i]);
    return ok;
}

#define STRANS_INSTANTIATE_OMP(T)                                              \
    template void fill<T>(T*, index_t, T);                                     \
    template void unary_op<T>(Unary, const T*, T*, index_t, T);                \
    template void binary_op<T>(Binary, const T*, const T*, T*, index_t);       \
    template void axpb<T>(const T*, T*, index_t, T, T);                        \
    template void matmul<T>(const T*, const T*, T*, index_t, index_t, index_t, \
                            index_t, bool);                                    \
    template void softmax_rows<T>(const T*, T*, index_t, index_t);             \
    template void gather<T>(const T*, const index_t*, T*, index_t);            \
    template void scatter_add<T>(const T*, const AdjointCsr&, T*, index_t);    \
    template void interp_gather<T>(const T*, const InterpMap&, T*);            \
    template void interp_scatter<T>(const T*, const InterpMap&, T*);           \
    template void transpose2<T>(const T*, T*, index_t, index_t, index_t);      \
    template T sum_all<T>(const T*, index_t);                                  \
    template T sumsq_all<T>(const T*, index_t);                                \
    template void sum_last<T>(const T*, index_t, index_t, T*);                 \
    template void sum_leading<T>(const T*, index_t, index_t, T*);              \
    template void bcast_last<T>(const T*, index_t, index_t, T*);               \
    template void bcast_leading<T>(const T*, index_t, index_t, T*);            \
    template bool all_finite<T>(const T*, index_t);

STRANS_INSTANTIATE_OMP(float)
STRANS_INSTANTIATE_OMP(double)

}  // namespace strans::kernels::omp
