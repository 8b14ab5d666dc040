#pragma once

#include <atomic>

#include "strans/ops.hpp"

// Multi-head self-attention in three flavours: dense over all tokens,
// windowed (each MxM tile attends within itself), and shifted-window (the
// grid is cyclically rolled by half a window first, with an additive mask
// keeping tokens from attending across the seam). A module-level counter
// accumulates the multiply-accumulate work spent on score matrices so the
// quadratic-vs-linear cost claim is measurable rather than asserted.

namespace strans {

namespace detail {
inline std::atomic<std::int64_t> g_attention_score_macs{0};
}

inline std::int64_t attention_score_macs() {
    return detail::g_attention_score_macs.load(std::memory_order_relaxed);
}
inline void reset_attention_score_macs() {
    detail::g_attention_score_macs.store(0, std::memory_order_relaxed);
}

/// Score-matrix multiply-accumulate count for one image: dense attention pays
/// heads * N^2 * d_head with N = H*W; windowed attention pays
/// heads * N * M^2 * d_head.
inline std::int64_t attention_op_count(bool windowed, index_t H, index_t W,
                                       index_t M, index_t heads,
                                       index_t d_head) {
    const index_t n = H * W;
    return windowed ? heads * n * M * M * d_head : heads * n * n * d_head;
}

/// Additive pre-softmax mask surrogate for "never attend": large enough that
/// the masked weight underflows to < 1e-30 after softmax at either precision.
template <class T>
constexpr T mask_fill_value() {
    return static_cast<T>(sizeof(T) == 4 ? -1e9 : -1e18);
}

template <class T>
struct Linear {
    Tensor<T> w;  // [in, out]
    Tensor<T> b;  // [out]; undefined means no bias
    T runtime_scale = T(1);

    Tensor<T> forward(const Tensor<T>& x) const {
        Tensor<T> weight = runtime_scale == T(1) ? w : scale(w, runtime_scale);
        Tensor<T> y = matmul(x, weight);
        if (b.defined()) {
            Tensor<T> bias = runtime_scale == T(1) ? b : scale(b, runtime_scale);
            Shape lead(y.shape().begin(), y.shape().end() - 1);
            y = add(y, broadcast_leading(bias, std::move(lead)));
        }
        return y;
    }
};

template <class T>
struct AttentionOutput {
    Tensor<T> out;      // same shape as the input tokens
    Tensor<T> weights;  // detached [groups*heads, N, N]; undefined unless captured
};

/// Parameters of one attention layer. The relative position bias table, when
/// present, is sized for a fixed token grid: (2*bh-1)*(2*bw-1) rows by heads.
template <class T>
struct MultiheadAttention {
    index_t dim = 0;
    index_t heads = 1;
    Linear<T> qkv;   // dim -> 3*dim, fused
    Linear<T> proj;  // dim -> dim
    Tensor<T> bias_table;  // undefined when relative bias is disabled
    index_t bias_h = 0, bias_w = 0;

    index_t d_head() const { return dim / heads; }
};

namespace detail {

/// out[(g*heads+h), n, d] = in[g, n, h*d_head + d]
inline ops::IndexMapPtr head_split_map(index_t g, index_t n, index_t heads,
                                       index_t d) {
    return ops::detail::cached_index_map(
        ops::detail::cache_key("headsplit", g, n, heads, d), [&] {
            kernels::IndexMap map;
            map.src_numel = g * n * heads * d;
            map.idx.resize(map.src_numel);
            index_t o = 0;
            for (index_t gi = 0; gi < g; ++gi)
                for (index_t h = 0; h < heads; ++h)
                    for (index_t ni = 0; ni < n; ++ni)
                        for (index_t di = 0; di < d; ++di)
                            map.idx[o++] = (gi * n + ni) * (heads * d) + h * d + di;
            return map;
        });
}

/// Inverse of head_split_map.
inline ops::IndexMapPtr head_merge_map(index_t g, index_t n, index_t heads,
                                       index_t d) {
    return ops::detail::cached_index_map(
        ops::detail::cache_key("headmerge", g, n, heads, d), [&] {
            kernels::IndexMap map;
            map.src_numel = g * n * heads * d;
            map.idx.resize(map.src_numel);
            index_t o = 0;
            for (index_t gi = 0; gi < g; ++gi)
                for (index_t ni = 0; ni < n; ++ni)
                    for (index_t h = 0; h < heads; ++h)
                        for (index_t di = 0; di < d; ++di)
                            map.idx[o++] = ((gi * heads + h) * n + ni) * d + di;
            return map;
        });
}

/// out[h, i, j] = table[((yi-yj+bh-1)*(2*bw-1) + (xi-xj+bw-1)) * heads + h]
/// for tokens laid out row-major on a bh x bw grid.
inline ops::IndexMapPtr rel_bias_map(index_t heads, index_t bh, index_t bw) {
    return ops::detail::cached_index_map(
        ops::detail::cache_key("relbias", heads, bh, bw), [&] {
            kernels::IndexMap map;
            const index_t n = bh * bw;
            map.src_numel = (2 * bh - 1) * (2 * bw - 1) * heads;
            map.idx.resize(heads * n * n);
            index_t o = 0;
            for (index_t h = 0; h < heads; ++h)
                for (index_t i = 0; i < n; ++i)
                    for (index_t j = 0; j < n; ++j) {
                        const index_t dy = i / bw - j / bw + bh - 1;
                        const index_t dx = i % bw - j % bw + bw - 1;
                        map.idx[o++] = (dy * (2 * bw - 1) + dx) * heads + h;
                    }
            return map;
        });
}

/// Region label of a rolled-grid coordinate for the shifted-window mask.
/// Bands [0, n-m), [n-m, n-s), [n-s, n) of the rolled axis hold content that
/// must not attend across band boundaries after the cyclic shift.
inline index_t shift_region(index_t v, index_t n, index_t m, index_t s) {
    if (v < n - m) return 0;
    if (v < n - s) return 1;
    return 2;
}

/// Constant additive mask [B*nW*heads, M*M, M*M] for shifted windows, cached
/// per geometry. Entries are 0 for same-region pairs and mask_fill otherwise.
template <class T>
Tensor<T> shifted_window_mask(index_t B, index_t H, index_t W, index_t heads,
                              index_t M) {
    static std::map<std::string, Tensor<T>> cache;
    const std::string key = ops::detail::cache_key("swmask", B, H, W, heads, M);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    const index_t s = M / 2;
    const index_t nwh = H / M, nww = W / M, nsq = M * M;
    std::vector<T> win(nwh * nww * nsq * nsq);
    index_t o = 0;
    for (index_t wi = 0; wi < nwh; ++wi)
        for (index_t wj = 0; wj < nww; ++wj) {
            std::vector<index_t> region(nsq);
            for (index_t r = 0; r < M; ++r)
                for (index_t c = 0; c < M; ++c)
                    region[r * M + c] =
                        3 * shift_region(wi * M + r, H, M, s) +
                        shift_region(wj * M + c, W, M, s);
            for (index_t i = 0; i < nsq; ++i)
                for (index_t j = 0; j < nsq; ++j)
                    win[o++] = region[i] == region[j] ? T(0) : mask_fill_value<T>();
        }
    std::vector<T> full(B * nwh * nww * heads * nsq * nsq);
    index_t f = 0;
    for (index_t b = 0; b < B; ++b)
        for (index_t w = 0; w < nwh * nww; ++w)
            for (index_t h = 0; h < heads; ++h)
                for (index_t ij = 0; ij < nsq * nsq; ++ij)
                    full[f++] = win[w * nsq * nsq + ij];
    Tensor<T> mask(Shape{B * nwh * nww * heads, nsq, nsq}, std::move(full));
    cache.emplace(key, mask);
    return mask;
}

/// Shared attention core over grouped tokens [G, N, C].
template <class T>
AttentionOutput<T> attention_core(const MultiheadAttention<T>& attn,
                                  const Tensor<T>& x, const Tensor<T>& bias_nn,
                                  const Tensor<T>& mask, bool capture) {
    const index_t g0 = x.dim(0), n = x.dim(1), c = x.dim(2);
    ST_CHECK(c == attn.dim, "attention dim mismatch: tokens have " << c
                            << " channels, layer built for " << attn.dim);
    ST_CHECK(attn.dim % attn.heads == 0, "heads must divide dim");
    const index_t h = attn.heads, d = attn.d_head();

    Tensor<T> qkv = attn.qkv.forward(x);  // [G, N, 3C]
    Tensor<T> q = ops::slice_last(qkv, 0, c);
    Tensor<T> k = ops::slice_last(qkv, c, c);
    Tensor<T> v = ops::slice_last(qkv, 2 * c, c);
    auto split = head_split_map(g0, n, h, d);
    q = gather(q, split, Shape{g0 * h, n, d});
    k = gather(k, split, Shape{g0 * h, n, d});
    v = gather(v, split, Shape{g0 * h, n, d});

    const std::int64_t macs0 = kernels::matmul_macs();
    Tensor<T> scores = matmul(q, transpose2(k));  // [G*h, N, N]
    detail::g_attention_score_macs.fetch_add(kernels::matmul_macs() - macs0,
                                             std::memory_order_relaxed);
    scores = scale(scores, T(1) / std::sqrt(static_cast<T>(d)));

    if (bias_nn.defined()) {
        // per-head bias shared across the leading group axis
        Tensor<T> expanded = broadcast_leading(
            reshape(bias_nn, {h * n * n}), Shape{g0});
        scores = add(scores, reshape(expanded, {g0 * h, n, n}));
    }
    if (mask.defined()) scores = add(scores, mask);

    Tensor<T> w = softmax_last(scores);
    AttentionOutput<T> result;
    if (capture) result.weights = w.detach();

    Tensor<T> ctx = matmul(w, v);  // [G*h, N, d]
    ctx = gather(ctx, head_merge_map(g0, n, h, d), Shape{g0, n, c});
    result.out = attn.proj.forward(ctx);
    return result;
}

template <class T>
Tensor<T> relative_bias(const MultiheadAttention<T>& attn, index_t bh,
                        index_t bw) {
    if (!attn.bias_table.defined()) return Tensor<T>();
    ST_CHECK(attn.bias_h == bh && attn.bias_w == bw,
             "relative bias table built for " << attn.bias_h << "x" << attn.bias_w
             << " but used on " << bh << "x" << bw);
    const index_t n = bh * bw;
    return gather(attn.bias_table, rel_bias_map(attn.heads, bh, bw),
                  Shape{attn.heads, n, n});
}

}  // namespace detail

/// Dense attention over tokens [B, N, C] on an H x W grid.
template <class T>
AttentionOutput<T> global_msa(const MultiheadAttention<T>& attn,
                              const Tensor<T>& x, index_t H, index_t W,
                              bool capture = false) {
    ST_CHECK(x.ndim() == 3 && x.dim(1) == H * W,
             "global_msa expects [B," << H * W << ",C], got " << shape_str(x.shape()));
    return detail::attention_core(attn, x, detail::relative_bias(attn, H, W),
                                  Tensor<T>(), capture);
}

/// Windowed attention on an image [B, H, W, C] with MxM tiles.
template <class T>
AttentionOutput<T> w_msa(const MultiheadAttention<T>& attn, const Tensor<T>& x,
                         index_t M, bool capture = false) {
    ST_CHECK(x.ndim() == 4, "w_msa expects [B,H,W,C]");
    const index_t B = x.dim(0), H = x.dim(1), W = x.dim(2);
    Tensor<T> win = ops::window_partition(x, M);
    AttentionOutput<T> r = detail::attention_core(
        attn, win, detail::relative_bias(attn, M, M), Tensor<T>(), capture);
    r.out = ops::window_merge(r.out, B, H, W, M);
    return r;
}

/// Shifted-window attention: cyclic roll by half a window, masked windowed
/// attention, inverse roll. Degenerates to w_msa when the window covers the
/// whole grid (nothing to shift across).
template <class T>
AttentionOutput<T> sw_msa(const MultiheadAttention<T>& attn, const Tensor<T>& x,
                          index_t M, bool capture = false) {
    ST_CHECK(x.ndim() == 4, "sw_msa expects [B,H,W,C]");
    const index_t B = x.dim(0), H = x.dim(1), W = x.dim(2);
    const index_t s = M / 2;
    if (M >= H && M >= W) return w_msa(attn, x, M, capture);

    Tensor<T> rolled = ops::roll2d(x, -s, -s);
    Tensor<T> win = ops::window_partition(rolled, M);
    Tensor<T> mask = detail::shifted_window_mask<T>(B, H, W, attn.heads, M);
    AttentionOutput<T> r = detail::attention_core(
        attn, win, detail::relative_bias(attn, M, M), mask, capture);
    r.out = ops::roll2d(ops::window_merge(r.out, B, H, W, M), s, s);
    return r;
}

}  // namespace strans
