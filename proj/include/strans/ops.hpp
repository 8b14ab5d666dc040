#pragma once

#include <map>
#include <sstream>

#include "strans/tensor.hpp"

// Composite tensor operations used by the networks: index-map builders for
// data movement (window partition, cyclic roll, pixel shuffle, im2col,
// bilinear resize) and normalizations composed from differentiable
// primitives. Index maps are cached by their integer signature because the
// same layouts recur every step.

namespace strans {
namespace ops {

using kernels::IndexMap;
using kernels::InterpMap;

using IndexMapPtr = std::shared_ptr<const IndexMap>;
using InterpMapPtr = std::shared_ptr<const InterpMap>;

namespace detail {

inline std::map<std::string, IndexMapPtr>& index_cache() {
    static std::map<std::string, IndexMapPtr> cache;
    return cache;
}

inline std::map<std::string, InterpMapPtr>& interp_cache() {
    static std::map<std::string, InterpMapPtr> cache;
    return cache;
}

template <class... Args>
std::string cache_key(const char* tag, Args... args) {
    std::ostringstream os;
    os << tag;
    ((os << ':' << args), ...);
    return os.str();
}

template <class Build>
IndexMapPtr cached_index_map(const std::string& key, Build&& build) {
    auto& cache = index_cache();
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto map = std::make_shared<IndexMap>(build());
    cache.emplace(key, map);
    return map;
}

template <class Build>
InterpMapPtr cached_interp_map(const std::string& key, Build&& build) {
    auto& cache = interp_cache();
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto map = std::make_shared<InterpMap>(build());
    cache.emplace(key, map);
    return map;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Index-map builders
// ---------------------------------------------------------------------------

/// [B,H,W,C] -> [B*(H/M)*(W/M), M*M, C]; windows ordered batch-major then
/// tile-row-major, tokens within a window row-major.
inline IndexMapPtr window_partition_map(index_t B, index_t H, index_t W,
                                        index_t C, index_t M) {
    ST_CHECK(H % M == 0 && W % M == 0,
             "window size " << M << " must divide " << H << "x" << W);
    return detail::cached_index_map(
        detail::cache_key("winpart", B, H, W, C, M), [&] {
            IndexMap map;
            map.src_numel = B * H * W * C;
            map.idx.resize(map.src_numel);
            const index_t nwh = H / M, nww = W / M;
            index_t o = 0;
            for (index_t b = 0; b < B; ++b)
                for (index_t wi = 0; wi < nwh; ++wi)
                    for (index_t wj = 0; wj < nww; ++wj)
                        for (index_t r = 0; r < M; ++r)
                            for (index_t s = 0; s < M; ++s)
                                for (index_t c = 0; c < C; ++c)
                                    map.idx[o++] =
                                        ((b * H + wi * M + r) * W + wj * M + s) * C + c;
            return map;
        });
}

/// Inverse of window_partition_map: [B*nW, M*M, C] -> [B,H,W,C].
inline IndexMapPtr window_merge_map(index_t B, index_t H, index_t W, index_t C,
                                    index_t M) {
    ST_CHECK(H % M == 0 && W % M == 0,
             "window size " << M << " must divide " << H << "x" << W);
    return detail::cached_index_map(
        detail::cache_key("winmerge", B, H, W, C, M), [&] {
            IndexMap map;
            map.src_numel = B * H * W * C;
            map.idx.resize(map.src_numel);
            const index_t nww = W / M;
            index_t o = 0;
            for (index_t b = 0; b < B; ++b)
                for (index_t i = 0; i < H; ++i)
                    for (index_t j = 0; j < W; ++j)
                        for (index_t c = 0; c < C; ++c) {
                            const index_t win =
                                (b * (H / M) + i / M) * nww + j / M;
                            const index_t tok = (i % M) * M + (j % M);
                            map.idx[o++] = (win * M * M + tok) * C + c;
                        }
            return map;
        });
}

/// Cyclic shift: out[b,i,j,c] = in[b, (i-dy) mod H, (j-dx) mod W, c], i.e.
/// content moves down by dy and right by dx (negative values move up/left).
inline IndexMapPtr roll_map(index_t B, index_t H, index_t W, index_t C,
                            index_t dy, index_t dx) {
    return detail::cached_index_map(
        detail::cache_key("roll", B, H, W, C, dy, dx), [&] {
            IndexMap map;
            map.src_numel = B * H * W * C;
            map.idx.resize(map.src_numel);
            auto wrap = [](index_t v, index_t n) { return ((v % n) + n) % n; };
            index_t o = 0;
            for (index_t b = 0; b < B; ++b)
                for (index_t i = 0; i < H; ++i)
                    for (index_t j = 0; j < W; ++j) {
                        const index_t si = wrap(i - dy, H), sj = wrap(j - dx, W);
                        for (index_t c = 0; c < C; ++c)
                            map.idx[o++] = ((b * H + si) * W + sj) * C + c;
                    }
            return map;
        });
}

/// [B,H,W,4C] -> [B,2H,2W,C]; out[b,2i+di,2j+dj,c] = in[b,i,j,c*4+di*2+dj].
inline IndexMapPtr pixel_shuffle_map(index_t B, index_t H, index_t W,
                                     index_t C_out) {
    return detail::cached_index_map(
        detail::cache_key("pixshuf", B, H, W, C_out), [&] {
            IndexMap map;
            map.src_numel = B * H * W * C_out * 4;
            map.idx.resize(map.src_numel);
            index_t o = 0;
            for (index_t b = 0; b < B; ++b)
                for (index_t i = 0; i < 2 * H; ++i)
                    for (index_t j = 0; j < 2 * W; ++j)
                        for (index_t c = 0; c < C_out; ++c)
                            map.idx[o++] =
                                ((b * H + i / 2) * W + j / 2) * (C_out * 4) +
                                c * 4 + (i % 2) * 2 + (j % 2);
            return map;
        });
}

/// [B,H,W,C] -> [B*(H/stride)*(W/stride), 9*C] patches for a 3x3 convolution
/// with zero padding, sampled at stride spacing. Column order: tap (ky,kx)
/// row-major, channels fastest.
inline IndexMapPtr im2col3_map(index_t B, index_t H, index_t W, index_t C,
                               index_t stride = 1) {
    ST_CHECK(H % stride == 0 && W % stride == 0, "stride must divide extent");
    return detail::cached_index_map(
        detail::cache_key("im2col3", B, H, W, C, stride), [&] {
            IndexMap map;
            map.src_numel = B * H * W * C;
            const index_t Ho = H / stride, Wo = W / stride;
            map.idx.resize(B * Ho * Wo * 9 * C);
            index_t o = 0;
            for (index_t b = 0; b < B; ++b)
                for (index_t io = 0; io < Ho; ++io)
                    for (index_t jo = 0; jo < Wo; ++jo)
                        for (index_t ky = -1; ky <= 1; ++ky)
                            for (index_t kx = -1; kx <= 1; ++kx) {
                                const index_t y = io * stride + ky;
                                const index_t x = jo * stride + kx;
                                const bool in_range =
                                    y >= 0 && y < H && x >= 0 && x < W;
                                for (index_t c = 0; c < C; ++c)
                                    map.idx[o++] =
                                        in_range ? ((b * H + y) * W + x) * C + c
                                                 : index_t(-1);
                            }
            return map;
        });
}

/// [B,H,W,C] -> [B,H/2,W/2,C] picking the top-left pixel of each 2x2 cell.
inline IndexMapPtr subsample2_map(index_t B, index_t H, index_t W, index_t C) {
    ST_CHECK(H % 2 == 0 && W % 2 == 0, "subsample needs even extents");
    return detail::cached_index_map(
        detail::cache_key("subsample2", B, H, W, C), [&] {
            IndexMap map;
            map.src_numel = B * H * W * C;
            map.idx.resize(B * (H / 2) * (W / 2) * C);
            index_t o = 0;
            for (index_t b = 0; b < B; ++b)
                for (index_t i = 0; i < H; i += 2)
                    for (index_t j = 0; j < W; j += 2)
                        for (index_t c = 0; c < C; ++c)
                            map.idx[o++] = ((b * H + i) * W + j) * C + c;
            return map;
        });
}

/// Writes rows [start, start+len) of the last axis into a wider tensor via
/// scatter; used to build concat without a dedicated primitive.
inline IndexMapPtr place_last_map(index_t rows, index_t cols_in,
                                  index_t cols_out, index_t start) {
    ST_CHECK(start >= 0 && start + cols_in <= cols_out, "place_last out of range");
    return detail::cached_index_map(
        detail::cache_key("placelast", rows, cols_in, cols_out, start), [&] {
            IndexMap map;
            map.src_numel = rows * cols_out;
            map.idx.resize(rows * cols_in);
            index_t o = 0;
            for (index_t r = 0; r < rows; ++r)
                for (index_t c = 0; c < cols_in; ++c)
                    map.idx[o++] = r * cols_out + start + c;
            return map;
        });
}

/// Extracts columns [start, start+len) of the last axis.
inline IndexMapPtr slice_last_map(index_t rows, index_t cols, index_t start,
                                  index_t len) {
    ST_CHECK(start >= 0 && len > 0 && start + len <= cols, "slice_last out of range");
    return detail::cached_index_map(
        detail::cache_key("slicelast", rows, cols, start, len), [&] {
            IndexMap map;
            map.src_numel = rows * cols;
            map.idx.resize(rows * len);
            index_t o = 0;
            for (index_t r = 0; r < rows; ++r)
                for (index_t c = 0; c < len; ++c)
                    map.idx[o++] = r * cols + start + c;
            return map;
        });
}

/// Bilinear resampling map with half-pixel centers (align_corners=false),
/// border-clamped. Tap order per output element: (y0,x0),(y0,x1),(y1,x0),(y1,x1).
inline InterpMapPtr bilinear_map(index_t B, index_t Hi, index_t Wi, index_t C,
                                 index_t Ho, index_t Wo) {
    return detail::cached_interp_map(
        detail::cache_key("bilerp", B, Hi, Wi, C, Ho, Wo), [&] {
            InterpMap map;
            map.src_numel = B * Hi * Wi * C;
            map.out_numel = B * Ho * Wo * C;
            map.idx.resize(map.out_numel * 4);
            map.w.resize(map.out_numel * 4);
            const double sy = static_cast<double>(Hi) / static_cast<double>(Ho);
            const double sx = static_cast<double>(Wi) / static_cast<double>(Wo);
            index_t o = 0;
            for (index_t b = 0; b < B; ++b)
                for (index_t i = 0; i < Ho; ++i) {
                    double fy = (static_cast<double>(i) + 0.5) * sy - 0.5;
                    if (fy < 0) fy = 0;
                    index_t y0 = static_cast<index_t>(fy);
                    if (y0 > Hi - 1) y0 = Hi - 1;
                    const index_t y1 = y0 + 1 < Hi ? y0 + 1 : Hi - 1;
                    const double wy = fy - static_cast<double>(y0);
                    for (index_t j = 0; j < Wo; ++j) {
                        double fx = (static_cast<double>(j) + 0.5) * sx - 0.5;
                        if (fx < 0) fx = 0;
                        index_t x0 = static_cast<index_t>(fx);
                        if (x0 > Wi - 1) x0 = Wi - 1;
                        const index_t x1 = x0 + 1 < Wi ? x0 + 1 : Wi - 1;
                        const double wx = fx - static_cast<double>(x0);
                        for (index_t c = 0; c < C; ++c) {
                            auto at = [&](index_t y, index_t x) {
                                return ((b * Hi + y) * Wi + x) * C + c;
                            };
                            map.idx[o * 4 + 0] = at(y0, x0);
                            map.idx[o * 4 + 1] = at(y0, x1);
                            map.idx[o * 4 + 2] = at(y1, x0);
                            map.idx[o * 4 + 3] = at(y1, x1);
                            map.w[o * 4 + 0] = (1 - wy) * (1 - wx);
                            map.w[o * 4 + 1] = (1 - wy) * wx;
                            map.w[o * 4 + 2] = wy * (1 - wx);
                            map.w[o * 4 + 3] = wy * wx;
                            ++o;
                        }
                    }
                }
            return map;
        });
}

// ---------------------------------------------------------------------------
// Data-movement ops
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> window_partition(const Tensor<T>& x, index_t M) {
    ST_CHECK(x.ndim() == 4, "window_partition expects [B,H,W,C]");
    const index_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    auto map = window_partition_map(B, H, W, C, M);
    return gather(x, map, Shape{B * (H / M) * (W / M), M * M, C});
}

template <class T>
Tensor<T> window_merge(const Tensor<T>& x, index_t B, index_t H, index_t W,
                       index_t M) {
    ST_CHECK(x.ndim() == 3 && x.dim(1) == M * M, "window_merge expects [nW,M*M,C]");
    const index_t C = x.dim(2);
    auto map = window_merge_map(B, H, W, C, M);
    return gather(x, map, Shape{B, H, W, C});
}

template <class T>
Tensor<T> roll2d(const Tensor<T>& x, index_t dy, index_t dx) {
    ST_CHECK(x.ndim() == 4, "roll2d expects [B,H,W,C]");
    if (dy == 0 && dx == 0) return x;
    auto map = roll_map(x.dim(0), x.dim(1), x.dim(2), x.dim(3), dy, dx);
    return gather(x, map, x.shape());
}

template <class T>
Tensor<T> pixel_shuffle2(const Tensor<T>& x) {
    ST_CHECK(x.ndim() == 4 && x.dim(3) % 4 == 0,
             "pixel_shuffle2 expects [B,H,W,4C]");
    const index_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3) / 4;
    auto map = pixel_shuffle_map(B, H, W, C);
    return gather(x, map, Shape{B, 2 * H, 2 * W, C});
}

template <class T>
Tensor<T> resize_bilinear(const Tensor<T>& x, index_t Ho, index_t Wo) {
    ST_CHECK(x.ndim() == 4, "resize_bilinear expects [B,H,W,C]");
    const index_t B = x.dim(0), Hi = x.dim(1), Wi = x.dim(2), C = x.dim(3);
    if (Hi == Ho && Wi == Wo) return x;
    auto map = bilinear_map(B, Hi, Wi, C, Ho, Wo);
    return interp_gather(x, map, Shape{B, Ho, Wo, C});
}

template <class T>
Tensor<T> slice_last(const Tensor<T>& x, index_t start, index_t len) {
    const index_t cols = x.dim(x.ndim() - 1);
    const index_t rows = x.numel() / cols;
    auto map = slice_last_map(rows, cols, start, len);
    Shape s = x.shape();
    s.back() = len;
    return gather(x, map, std::move(s));
}

template <class T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b) {
    ST_CHECK(a.ndim() == b.ndim(), "concat rank mismatch");
    for (int d = 0; d + 1 < a.ndim(); ++d)
        ST_CHECK(a.dim(d) == b.dim(d), "concat leading dims mismatch");
    const index_t ca = a.dim(a.ndim() - 1), cb = b.dim(b.ndim() - 1);
    const index_t rows = a.numel() / ca;
    Shape s = a.shape();
    s.back() = ca + cb;
    Tensor<T> pa = scatter_add(a, place_last_map(rows, ca, ca + cb, 0), s);
    Tensor<T> pb = scatter_add(b, place_last_map(rows, cb, ca + cb, ca), s);
    return add(pa, pb);
}

// ---------------------------------------------------------------------------
// Reductions and normalizations
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> mean_all(const Tensor<T>& x) {
    return scale(sum_all(x), T(1) / static_cast<T>(x.numel()));
}

/// [B,N,C] -> [B,C], average over tokens.
template <class T>
Tensor<T> mean_tokens(const Tensor<T>& x) {
    ST_CHECK(x.ndim() == 3, "mean_tokens expects [B,N,C]");
    const index_t B = x.dim(0), N = x.dim(1), C = x.dim(2);
    Tensor<T> t = sum_last(transpose2(x));  // [B,C,1]
    return scale(reshape(t, {B, C}), T(1) / static_cast<T>(N));
}

/// Normalizes over the last axis; no affine part.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, T eps = T(1e-5)) {
    const index_t C = x.dim(x.ndim() - 1);
    const T inv_c = T(1) / static_cast<T>(C);
    Tensor<T> mu = broadcast_last(scale(sum_last(x), inv_c), C);
    Tensor<T> xc = sub(x, mu);
    Tensor<T> var = broadcast_last(scale(sum_last(square(xc)), inv_c), C);
    return mul(xc, reciprocal(sqrt(add_scalar(var, eps))));
}

/// Normalizes each (batch, channel) pair over its spatial extent; input is
/// tokens [B,N,C]. No affine part.
template <class T>
Tensor<T> instance_norm(const Tensor<T>& x, T eps = T(1e-5)) {
    ST_CHECK(x.ndim() == 3, "instance_norm expects [B,N,C]");
    const index_t N = x.dim(1);
    const T inv_n = T(1) / static_cast<T>(N);
    Tensor<T> t = transpose2(x);  // [B,C,N]
    Tensor<T> mu = broadcast_last(scale(sum_last(t), inv_n), N);
    Tensor<T> tc = sub(t, mu);
    Tensor<T> var = broadcast_last(scale(sum_last(square(tc)), inv_n), N);
    Tensor<T> yn = mul(tc, reciprocal(sqrt(add_scalar(var, eps))));
    return transpose2(yn);
}

/// Per-channel statistics over all leading axes, returned as ([C], [C]).
template <class T>
std::pair<Tensor<T>, Tensor<T>> channel_stats(const Tensor<T>& x) {
    const index_t C = x.dim(x.ndim() - 1);
    const index_t rows = x.numel() / C;
    const T inv_r = T(1) / static_cast<T>(rows);
    Tensor<T> mu = scale(sum_leading(x), inv_r);
    Shape lead(x.shape().begin(), x.shape().end() - 1);
    Tensor<T> xc = sub(x, broadcast_leading(mu, lead));
    Tensor<T> var = scale(sum_leading(square(xc)), inv_r);
    return {std::move(mu), std::move(var)};
}

/// Normalizes per channel with the given statistics ([C] each); used for the
/// batch-statistics norm in both train mode (batch stats) and eval mode
/// (running stats).
template <class T>
Tensor<T> batch_norm_with_stats(const Tensor<T>& x, const Tensor<T>& mu,
                                const Tensor<T>& var, T eps = T(1e-5)) {
    Shape lead(x.shape().begin(), x.shape().end() - 1);
    Tensor<T> xc = sub(x, broadcast_leading(mu, lead));
    Tensor<T> denom = broadcast_leading(sqrt(add_scalar(var, eps)), lead);
    return mul(xc, reciprocal(denom));
}

/// y = x * gain + bias with per-channel [C] parameters.
template <class T>
Tensor<T> affine_channels(const Tensor<T>& x, const Tensor<T>& gain,
                          const Tensor<T>& bias) {
    Shape lead(x.shape().begin(), x.shape().end() - 1);
    return add(mul(x, broadcast_leading(gain, lead)),
               broadcast_leading(bias, lead));
}

template <class T>
T l2_norm(const Tensor<T>& x) {
    return std::sqrt(kernels::sumsq_all(x.values().data(), x.numel()));
}

}  // namespace ops
}  // namespace strans
