#include <cmath>

#include "strans/kernels.hpp"

// Reference backend: straightforward loops, no threading. The OpenMP backend
// must match these results bitwise, so any change here needs the mirror
// change in kernels_omp.cpp.

namespace strans::kernels::serial {

template <class T>
void fill(T* out, index_t n, T v) {
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
            // log(1 + e^x) = max(x,0) + log1p(e^-|x|), stable both tails
            return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
        case Unary::LeakyRelu: return x > T(0) ? x : p * x;
        case Unary::LeakyReluMask: return x > T(0) ? T(1) : p;
        case Unary::Square: return x * x;
    }
    return T(0);
}

template <class T>
void unary_op(Unary kind, const T* a, T* out, index_t n, T param) {
    for (index_t i = 0; i < n; ++i) out[i] = unary_one(kind, a[i], param);
}

template <class T>
void binary_op(Binary kind, const T* a, const T* b, T* out, index_t n) {
    switch (kind) {
        case Binary::Add:
            for (index_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
            break;
        case Binary::Sub:
            for (index_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
            break;
        case Binary::Mul:
            for (index_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
            break;
    }
}

template <class T>
void axpb(const T* a, T* out, index_t n, T s, T c) {
    for (index_t i = 0; i < n; ++i) out[i] = s * a[i] + c;
}

template <class T>
void matmul(const T* a, const T* b, T* c, index_t g, index_t m, index_t k,
            index_t n, bool b_shared) {
    for (index_t gi = 0; gi < g; ++gi) {
        const T* ag = a + gi * m * k;
        const T* bg = b + (b_shared ? 0 : gi * k * n);
        T* cg = c + gi * m * n;
        for (index_t i = 0; i < m; ++i) {
            const T* arow = ag + i * k;
            T* crow = cg + i * n;
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
    for (index_t i = 0; i < n; ++i)
        out[i] = idx[i] >= 0 ? src[idx[i]] : T(0);
}

template <class T>
void scatter_add(const T* src, const AdjointCsr& adj, T* out, index_t dst_n) {
    for (index_t d = 0; d < dst_n; ++d) {
        T acc = T(0);
        for (index_t k = adj.offsets[d]; k < adj.offsets[d + 1]; ++k)
            acc += src[adj.sources[k]];
        out[d] = acc;
    }
}

template <class T>
void interp_gather(const T* src, const InterpMap& map, T* out) {
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
    for (index_t d = 0; d < map.src_numel; ++d) {
        T acc = T(0);
        for (index_t k = adj.offsets[d]; k < adj.offsets[d + 1]; ++k)
            acc += static_cast<T>(w[k]) * src[adj.sources[k]];
        out[d] = acc;
    }
}

template <class T>
void transpose2(const T* a, T* out, index_t g, index_t m, index_t n) {
    for (index_t gi = 0; gi < g; ++gi) {
        const T* ag = a + gi * m * n;
        T* og = out + gi * m * n;
        for (index_t i = 0; i < m; ++i)
            for (index_t j = 0; j < n; ++j) og[j * m + i] = ag[i * n + j];
    }
}

// Reductions use a fixed 64-chunk split so the result does not depend on
// thread count; the OpenMP variant parallelizes over the same chunks.
inline constexpr index_t kSumChunks = 64;

template <class T>
T sum_all(const T* a, index_t n) {
    T partial[kSumChunks];
    const index_t step = (n + kSumChunks - 1) / kSumChunks;
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
    for (index_t r = 0; r < rows; ++r) {
        T acc = T(0);
        const T* ar = a + r * cols;
        for (index_t c = 0; c < cols; ++c) acc += ar[c];
        out[r] = acc;
    }
}

template <class T>
void sum_leading(const T* a, index_t rows, index_t cols, T* out) {
    for (index_t c = 0; c < cols; ++c) {
        T acc = T(0);
        for (index_t r = 0; r < rows; ++r) acc += a[r * cols + c];
        out[c] = acc;
    }
}

template <class T>
void bcast_last(const T* a, index_t rows, index_t cols, T* out) {
    for (index_t r = 0; r < rows; ++r) {
        const T v = a[r];
        T* orow = out + r * cols;
        for (index_t c = 0; c < cols; ++c) orow[c] = v;
    }
}

template <class T>
void bcast_leading(const T* v, index_t rows, index_t cols, T* out) {
    for (index_t r = 0; r < rows; ++r) {
        T* orow = out + r * cols;
        for (index_t c = 0; c < cols; ++c) orow[c] = v[c];
    }
}

template <class T>
bool all_finite(const T* a, index_t n) {
    for (index_t i = 0; i < n; ++i)
        if (!std::isfinite(a[i])) return false;
    return true;
}

#define STRANS_INSTANTIATE_SERIAL(T)                                           \
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

STRANS_INSTANTIATE_SERIAL(float)
STRANS_INSTANTIATE_SERIAL(double)

}  // namespace strans::kernels::serial
