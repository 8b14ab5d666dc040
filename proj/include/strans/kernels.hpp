#pragma once

#include <memory>

#include "strans/common.hpp"

// Low-level numeric kernels. Every kernel exists twice: a plain serial
// reference implementation (kernels_serial.cpp) and an OpenMP variant
// (kernels_omp.cpp). Both compute each output element with the same
// arithmetic order, so the two backends agree bitwise; tests rely on that.
// The active backend is a process-wide switch, Serial by default in tests
// and OpenMP in the CLI.

namespace strans::kernels {

enum class Backend { Serial, OpenMP };

Backend backend();
void set_backend(Backend b);

/// Cumulative multiply-accumulate count of all matmul calls. Used to
/// instrument attention score cost; callers snapshot around the matmul of
/// interest.
std::int64_t matmul_macs();
void reset_matmul_macs();

enum class Unary {
    Exp,
    Log,
    Sqrt,
    Reciprocal,
    Erf,
    Tanh,
    Sigmoid,
    Softplus,
    LeakyRelu,       // param = negative slope
    LeakyReluMask,   // 1 for x > 0 else param (grad mask; param at x == 0)
    Square,
};

enum class Binary { Add, Sub, Mul };

/// Gather/scatter plumbing for all structural ops (transpose, window
/// partition, rolls, pixel shuffle, im2col, tiling). `idx[i]` is the flat
/// source position of output element i, or -1 for zero fill. The adjoint CSR
/// groups output positions by source so scatter-add runs deterministically
/// (each destination accumulated in ascending source order).
struct AdjointCsr {
    std::vector<index_t> offsets;  // size dst_numel + 1
    std::vector<index_t> sources;
};

struct IndexMap {
    std::vector<index_t> idx;
    index_t src_numel = 0;
    const AdjointCsr& adjoint() const;

private:
    mutable std::shared_ptr<AdjointCsr> adj_;
};

/// Four-tap weighted gather (bilinear interpolation). idx/w hold 4 entries
/// per output element; idx -1 means the tap is skipped.
struct InterpMap {
    std::vector<index_t> idx;  // 4 * out_numel
    std::vector<double> w;     // 4 * out_numel
    index_t src_numel = 0;
    index_t out_numel = 0;
    const AdjointCsr& adjoint() const;      // per-source list of taps
    const std::vector<double>& adjoint_w() const;

private:
    mutable std::shared_ptr<AdjointCsr> adj_;
    mutable std::shared_ptr<std::vector<double>> adj_w_;
};

template <class T>
void fill(T* out, index_t n, T v);

template <class T>
void unary_op(Unary kind, const T* a, T* out, index_t n, T param);

template <class T>
void binary_op(Binary kind, const T* a, const T* b, T* out, index_t n);

/// out = s * a + c
template <class T>
void axpb(const T* a, T* out, index_t n, T s, T c);

/// c[g,i,j] = sum_p a[g,i,p] * b[gb,p,j], gb = 0 if b_shared else g.
/// c must be zero-initialized by the caller.
template <class T>
void matmul(const T* a, const T* b, T* c, index_t g, index_t m, index_t k,
            index_t n, bool b_shared);

template <class T>
void softmax_rows(const T* x, T* y, index_t rows, index_t cols);

template <class T>
void gather(const T* src, const index_t* idx, T* out, index_t n);

template <class T>
void scatter_add(const T* src, const AdjointCsr& adj, T* out, index_t dst_n);

template <class T>
void interp_gather(const T* src, const InterpMap& map, T* out);

template <class T>
void interp_scatter(const T* src, const InterpMap& map, T* out);

template <class T>
void transpose2(const T* a, T* out, index_t g, index_t m, index_t n);

template <class T>
T sum_all(const T* a, index_t n);

template <class T>
T sumsq_all(const T* a, index_t n);

template <class T>
void sum_last(const T* a, index_t rows, index_t cols, T* out);

template <class T>
void sum_leading(const T* a, index_t rows, index_t cols, T* out);

template <class T>
void bcast_last(const T* a, index_t rows, index_t cols, T* out);

template <class T>
void bcast_leading(const T* v, index_t rows, index_t cols, T* out);

template <class T>
bool all_finite(const T* a, index_t n);

// Serial reference implementations (always available, used directly by the
// backend-equivalence tests and the benchmark).
namespace serial {
template <class T>
void fill(T* out, index_t n, T v);
template <class T>
void unary_op(Unary kind, const T* a, T* out, index_t n, T param);
template <class T>
void binary_op(Binary kind, const T* a, const T* b, T* out, index_t n);
template <class T>
void axpb(const T* a, T* out, index_t n, T s, T c);
template <class T>
void matmul(const T* a, const T* b, T* c, index_t g, index_t m, index_t k,
            index_t n, bool b_shared);
template <class T>
void softmax_rows(const T* x, T* y, index_t rows, index_t cols);
template <class T>
void gather(const T* src, const index_t* idx, T* out, index_t n);
template <class T>
void scatter_add(const T* src, const AdjointCsr& adj, T* out, index_t dst_n);
template <class T>
void interp_gather(const T* src, const InterpMap& map, T* out);
template <class T>
void interp_scatter(const T* src, const InterpMap& map, T* out);
template <class T>
void transpose2(const T* a, T* out, index_t g, index_t m, index_t n);
template <class T>
T sum_all(const T* a, index_t n);
template <class T>
T sumsq_all(const T* a, index_t n);
template <class T>
void sum_last(const T* a, index_t rows, index_t cols, T* out);
template <class T>
void sum_leading(const T* a, index_t rows, index_t cols, T* out);
template <class T>
void bcast_last(const T* a, index_t rows, index_t cols, T* out);
template <class T>
void bcast_leading(const T* v, index_t rows, index_t cols, T* out);
template <class T>
bool all_finite(const T* a, index_t n);
}  // namespace serial

namespace omp {
template <class T>
void fill(T* out, index_t n, T v);
template <class T>
void unary_op(Unary kind, const T* a, T* out, index_t n, T param);
template <class T>
void binary_op(Binary kind, const T* a, const T* b, T* out, index_t n);
template <class T>
void axpb(const T* a, T* out, index_t n, T s, T c);
template <class T>
void matmul(const T* a, const T* b, T* c, index_t g, index_t m, index_t k,
            index_t n, bool b_shared);
template <class T>
void softmax_rows(const T* x, T* y, index_t rows, index_t cols);
template <class T>
void gather(const T* src, const index_t* idx, T* out, index_t n);
template <class T>
void scatter_add(const T* src, const AdjointCsr& adj, T* out, index_t dst_n);
template <class T>
void interp_gather(const T* src, const InterpMap& map, T* out);
template <class T>
void interp_scatter(const T* src, const InterpMap& map, T* out);
template <class T>
void transpose2(const T* a, T* out, index_t g, index_t m, index_t n);
template <class T>
T sum_all(const T* a, index_t n);
template <class T>
T sumsq_all(const T* a, index_t n);
template <class T>
void sum_last(const T* a, index_t rows, index_t cols, T* out);
template <class T>
void sum_leading(const T* a, index_t rows, index_t cols, T* out);
template <class T>
void bcast_last(const T* a, index_t rows, index_t cols, T* out);
template <class T>
void bcast_leading(const T* v, index_t rows, index_t cols, T* out);
template <class T>
bool all_finite(const T* a, index_t n);
}  // namespace omp

}  // namespace strans::kernels
