#include <atomic>
#include <mutex>
#include <numeric>

#include "strans/kernels.hpp"

namespace strans::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::OpenMP};
std::atomic<std::int64_t> g_matmul_macs{0};
}  // namespace

Backend backend() { return g_backend.load(std::memory_order_relaxed); }
void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }

std::int64_t matmul_macs() { return g_matmul_macs.load(std::memory_order_relaxed); }
void reset_matmul_macs() { g_matmul_macs.store(0, std::memory_order_relaxed); }

const AdjointCsr& IndexMap::adjoint() const {
    if (!adj_) {
        auto adj = std::make_shared<AdjointCsr>();
        const index_t n = static_cast<index_t>(idx.size());
        adj->offsets.assign(src_numel + 1, 0);
        for (index_t i = 0; i < n; ++i)
            if (idx[i] >= 0) ++adj->offsets[idx[i] + 1];
        std::partial_sum(adj->offsets.begin(), adj->offsets.end(),
                         adj->offsets.begin());
        adj->sources.resize(adj->offsets.back());
        std::vector<index_t> cursor(adj->offsets.begin(), adj->offsets.end() - 1);
        for (index_t i = 0; i < n; ++i)
            if (idx[i] >= 0) adj->sources[cursor[idx[i]]++] = i;
        adj_ = std::move(adj);
    }
    return *adj_;
}

const AdjointCsr& InterpMap::adjoint() const {
    if (!adj_) {
        auto adj = std::make_shared<AdjointCsr>();
        auto wbuf = std::make_shared<std::vector<double>>();
        const index_t n = static_cast<index_t>(idx.size());
        adj->offsets.assign(src_numel + 1, 0);
        for (index_t i = 0; i < n; ++i)
            if (idx[i] >= 0) ++adj->offsets[idx[i] + 1];
        std::partial_sum(adj->offsets.begin(), adj->offsets.end(),
                         adj->offsets.begin());
        adj->sources.resize(adj->offsets.back());
        wbuf->resize(adj->offsets.back());
        std::vector<index_t> cursor(adj->offsets.begin(), adj->offsets.end() - 1);
        for (index_t i = 0; i < n; ++i) {
            if (idx[i] < 0) continue;
            const index_t slot = cursor[idx[i]]++;
            adj->sources[slot] = i / 4;  // tap i belongs to output element i/4
            (*wbuf)[slot] = w[i];
        }
        adj_ = std::move(adj);
        adj_w_ = std::move(wbuf);
    }
    return *adj_;
}

const std::vector<double>& InterpMap::adjoint_w() const {
    adjoint();
    return *adj_w_;
}

#define STRANS_DISPATCH(call)                                                  \
    do {                                                                       \
        if (backend() == Backend::Serial)                                      \
            serial::call;                                                      \
        else                                                                   \
            omp::call;                                                         \
    } while (0)

template <class T>
void fill(T* out, index_t n, T v) { STRANS_DISPATCH(fill(out, n, v)); }

template <class T>
void unary_op(Unary kind, const T* a, T* out, index_t n, T param) {
    STRANS_DISPATCH(unary_op(kind, a, out, n, param));
}

template <class T>
void binary_op(Binary kind, const T* a, const T* b, T* out, index_t n) {
    STRANS_DISPATCH(binary_op(kind, a, b, out, n));
}

template <class T>
void axpb(const T* a, T* out, index_t n, T s, T c) {
    STRANS_DISPATCH(axpb(a, out, n, s, c));
}

template <class T>
void matmul(const T* a, const T* b, T* c, index_t g, index_t m, index_t k,
            index_t n, bool b_shared) {
    g_matmul_macs.fetch_add(g * m * k * n, std::memory_order_relaxed);
    STRANS_DISPATCH(matmul(a, b, c, g, m, k, n, b_shared));
}

template <class T>
void softmax_rows(const T* x, T* y, index_t rows, index_t cols) {
    STRANS_DISPATCH(softmax_rows(x, y, rows, cols));
}

template <class T>
void gather(const T* src, const index_t* idx, T* out, index_t n) {
    STRANS_DISPATCH(gather(src, idx, out, n));
}

template <class T>
void scatter_add(const T* src, const AdjointCsr& adj, T* out, index_t dst_n) {
    STRANS_DISPATCH(scatter_add(src, adj, out, dst_n));
}

template <class T>
void interp_gather(const T* src, const InterpMap& map, T* out) {
    STRANS_DISPATCH(interp_gather(src, map, out));
}

template <class T>
void interp_scatter(const T* src, const InterpMap& map, T* out) {
    STRANS_DISPATCH(interp_scatter(src, map, out));
}

template <class T>
void transpose2(const T* a, T* out, index_t g, index_t m, index_t n) {
    STRANS_DISPATCH(transpose2(a, out, g, m, n));
}

template <class T>
T sum_all(const T* a, index_t n) {
    return backend() == Backend::Serial ? serial::sum_all(a, n)
                                        : omp::sum_all(a, n);
}

template <class T>
T sumsq_all(const T* a, index_t n) {
    return backend() == Backend::Serial ? serial::sumsq_all(a, n)
                                        : omp::sumsq_all(a, n);
}

template <class T>
void sum_last(const T* a, index_t rows, index_t cols, T* out) {
    STRANS_DISPATCH(sum_last(a, rows, cols, out));
}

template <class T>
void sum_leading(const T* a, index_t rows, index_t cols, T* out) {
    STRANS_DISPATCH(sum_leading(a, rows, cols, out));
}

template <class T>
void bcast_last(const T* a, index_t rows, index_t cols, T* out) {
    STRANS_DISPATCH(bcast_last(a, rows, cols, out));
}

template <class T>
void bcast_leading(const T* v, index_t rows, index_t cols, T* out) {
    STRANS_DISPATCH(bcast_leading(v, rows, cols, out));
}

template <class T>
bool all_finite(const T* a, index_t n) {
    return backend() == Backend::Serial ? serial::all_finite(a, n)
                                        : omp::all_finite(a, n);
}

#define STRANS_INSTANTIATE_DISPATCH(T)                                         \
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

STRANS_INSTANTIATE_DISPATCH(float)
STRANS_INSTANTIATE_DISPATCH(double)

}  // namespace strans::kernels
