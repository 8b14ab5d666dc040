#pragma once

#include <optional>
#include <string>

#include "strans/attention.hpp"

// Composite building blocks: transformer blocks in residual pre-norm form
// with optional skip projections and conditional normalization, the 2x MLP,
// toRGB heads, and the small conv pieces of the discriminator front end.
//
// Residual wiring per conditioning placement, with S the shortcut map
// (identity or skip projection) and F the attention/MLP branch:
//   NONE : out = S(h) + F(LN(h))
//   A    : out = S(h) + F(AdaNorm(h))        branch-only conditioning
//   B    : t = AdaNorm(h); out = S(t) + F(t) trunk conditioning
//   C    : as B, plus an extra AdaNorm after dense-attention branches

namespace strans {

enum class AttnKind { Global, Window, ShiftedWindow };
enum class AdaPlacement { None, ConfigA, ConfigB, ConfigC };
enum class NormKind { Layer, Instance, Batch };

// ---------------------------------------------------------------------------
// Parameter registry
// ---------------------------------------------------------------------------

template <class T>
struct ParamEntry {
    std::string name;
    Tensor<T> tensor;
    bool trainable = true;
};

template <class T>
struct ParamList {
    std::vector<ParamEntry<T>> items;

    void add(std::string name, Tensor<T> t, bool trainable = true) {
        ST_CHECK(t.defined(), "registering undefined tensor '" << name << "'");
        for (const auto& e : items)
            ST_CHECK(e.name != name, "duplicate parameter name '" << name << "'");
        if (trainable) t.set_requires_grad(true);
        items.push_back({std::move(name), std::move(t), trainable});
    }

    Tensor<T>* find(const std::string& name) {
        for (auto& e : items)
            if (e.name == name) return &e.tensor;
        return nullptr;
    }

    index_t total_count(bool trainable_only = true) const {
        index_t n = 0;
        for (const auto& e : items)
            if (e.trainable || !trainable_only) n += e.tensor.numel();
        return n;
    }
};

// ---------------------------------------------------------------------------
// Initializers
// ---------------------------------------------------------------------------

template <class T>
void init_trunc_normal(Tensor<T>& t, Rng& rng, double stddev, double lo,
                       double hi) {
    for (T& v : t.raw()) v = static_cast<T>(rng.trunc_normal(stddev, lo, hi));
}

template <class T>
void init_normal(Tensor<T>& t, Rng& rng, double stddev) {
    for (T& v : t.raw()) v = static_cast<T>(stddev * rng.normal());
}

template <class T>
void init_const(Tensor<T>& t, T v) {
    kernels::fill(t.raw().data(), t.numel(), v);
}

/// Square matrix set to diag * I.
template <class T>
void init_identity(Tensor<T>& t, T diag = T(1)) {
    ST_CHECK(t.ndim() == 2 && t.dim(0) == t.dim(1), "identity init needs square");
    init_const(t, T(0));
    for (index_t i = 0; i < t.dim(0); ++i) t.raw()[i * t.dim(0) + i] = diag;
}

/// Weight-init styles: generator stacks draw small truncated normals;
/// discriminator transformer stacks draw wider ones (their runtime scale
/// shrinks them); conv/head weights are unit normals rescaled at runtime by
/// the fan-in constant.
struct InitStyle {
    double stddev;
    double lo, hi;
};
inline constexpr InitStyle kGenInit{0.02, -2.0, 2.0};
inline constexpr InitStyle kDiscInit{0.2, -10.0, 10.0};

template <class T>
void init_weight(Tensor<T>& t, Rng& rng, const InitStyle& s) {
    init_trunc_normal(t, rng, s.stddev, s.lo, s.hi);
}

// ---------------------------------------------------------------------------
// Diagnostics taps
// ---------------------------------------------------------------------------

template <class T>
struct TapRecord {
    std::string label;       // A<i> for attention residuals, M<i> for MLP
    index_t resolution = 0;  // token grid height at this block
    T shortcut_norm = T(0);
    T branch_norm = T(0);
    // attention extras, present on A records when weights were captured
    bool is_attention = false;
    Tensor<T> weights;  // detached [groups*heads, N, N]
    index_t grid_h = 0, grid_w = 0, window = 0, heads = 0;
    bool shifted = false;
    bool global_attn = false;
};

template <class T>
struct TapSink {
    bool capture_weights = false;
    int next_attn = 1, next_mlp = 1;
    std::vector<TapRecord<T>> records;

    void reset() {
        records.clear();
        next_attn = next_mlp = 1;
    }
};

// ---------------------------------------------------------------------------
// Norm layers
// ---------------------------------------------------------------------------

/// Layer norm with a learned per-channel affine part.
template <class T>
struct PlainNorm {
    Tensor<T> gain, bias;  // [C]

    Tensor<T> forward(const Tensor<T>& x) const {
        return ops::affine_channels(ops::layer_norm(x), gain, bias);
    }

    void collect(ParamList<T>& out, const std::string& p) const {
        out.add(p + ".gain", gain);
        out.add(p + ".bias", bias);
    }
};

template <class T>
PlainNorm<T> make_plain_norm(index_t C) {
    PlainNorm<T> n{Tensor<T>::ones({C}), Tensor<T>::zeros({C})};
    return n;
}

namespace detail {
/// [B,C] -> [B,N,C]
template <class T>
Tensor<T> expand_per_sample(const Tensor<T>& g, index_t N) {
    const index_t B = g.dim(0), C = g.dim(1);
    return transpose2(broadcast_last(reshape(g, {B, C, 1}), N));
}
}  // namespace detail

/// Conditional normalization: a base norm whose per-channel gain and bias are
/// predicted from a condition vector. Initialized so gain == 1 and bias == 0
/// regardless of the condition (identity modulation).
template <class T>
struct AdaNorm {
    NormKind base = NormKind::Layer;
    Linear<T> gamma_net, beta_net;     // cond_dim -> C
    Tensor<T> running_mean, running_var;  // [C] buffers, batch base only
    T momentum = T(0.1);

    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& cond,
                      bool training) const {
        ST_CHECK(cond.defined(), "conditional norm evaluated without a condition");
        ST_CHECK(x.ndim() == 3, "conditional norm expects tokens [B,N,C]");
        const index_t B = x.dim(0), N = x.dim(1), C = x.dim(2);
        Tensor<T> normed;
        switch (base) {
            case NormKind::Layer:
                normed = ops::layer_norm(x);
                break;
            case NormKind::Instance:
                normed = ops::instance_norm(x);
                break;
            case NormKind::Batch: {
                if (training) {
                    ST_CHECK(B > 1, "batch-statistics norm needs batch size > 1 "
                                    "in training");
                    auto [mu, var] = ops::channel_stats(x);
                    normed = ops::batch_norm_with_stats(x, mu, var);
                    // exponential moving average of batch statistics
                    auto& rm = const_cast<Tensor<T>&>(running_mean).raw();
                    auto& rv = const_cast<Tensor<T>&>(running_var).raw();
                    for (index_t c = 0; c < C; ++c) {
                        rm[c] = (T(1) - momentum) * rm[c] + momentum * mu.values()[c];
                        rv[c] = (T(1) - momentum) * rv[c] + momentum * var.values()[c];
                    }
                } else {
                    normed = ops::batch_norm_with_stats(x, running_mean.detach(),
                                                        running_var.detach());
                }
                break;
            }
        }
        Tensor<T> gamma = detail::expand_per_sample(gamma_net.forward(cond), N);
        Tensor<T> beta = detail::expand_per_sample(beta_net.forward(cond), N);
        return add(mul(normed, gamma), beta);
    }

    void collect(ParamList<T>& out, const std::string& p) const {
        out.add(p + ".gamma.w", gamma_net.w);
        out.add(p + ".gamma.b", gamma_net.b);
        out.add(p + ".beta.w", beta_net.w);
        out.add(p + ".beta.b", beta_net.b);
        if (base == NormKind::Batch) {
            out.add(p + ".running_mean", running_mean, false);
            out.add(p + ".running_var", running_var, false);
        }
    }
};

template <class T>
AdaNorm<T> make_adanorm(NormKind base, index_t cond_dim, index_t C) {
    AdaNorm<T> n;
    n.base = base;
    n.gamma_net = {Tensor<T>::zeros({cond_dim, C}), Tensor<T>::ones({C})};
    n.beta_net = {Tensor<T>::zeros({cond_dim, C}), Tensor<T>::zeros({C})};
    if (base == NormKind::Batch) {
        n.running_mean = Tensor<T>::zeros({C});
        n.running_var = Tensor<T>::ones({C});
    }
    return n;
}

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

template <class T>
struct Embedding {
    Tensor<T> table;  // [num_classes, C]

    Tensor<T> forward(const std::vector<index_t>& y) const {
        const index_t B = static_cast<index_t>(y.size());
        const index_t num = table.dim(0), C = table.dim(1);
        auto map = std::make_shared<kernels::IndexMap>();
        map->src_numel = table.numel();
        map->idx.resize(B * C);
        for (index_t b = 0; b < B; ++b) {
            ST_CHECK(y[b] >= 0 && y[b] < num,
                     "class label " << y[b] << " out of range [0," << num << ")");
            for (index_t c = 0; c < C; ++c) map->idx[b * C + c] = y[b] * C + c;
        }
        return gather(table, std::move(map), Shape{B, C});
    }

    void collect(ParamList<T>& out, const std::string& p) const {
        out.add(p + ".table", table);
    }
};

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

template <class T>
struct Mlp {
    Linear<T> fc1, fc2;
    bool use_gelu = true;

    Tensor<T> forward(const Tensor<T>& x) const {
        Tensor<T> h = fc1.forward(x);
        h = use_gelu ? gelu(h) : leaky_relu(h, T(0.2));
        return fc2.forward(h);
    }

    void collect(ParamList<T>& out, const std::string& p) const {
        out.add(p + ".fc1.w", fc1.w);
        out.add(p + ".fc1.b", fc1.b);
        out.add(p + ".fc2.w", fc2.w);
        out.add(p + ".fc2.b", fc2.b);
    }
};

// ---------------------------------------------------------------------------
// Transformer block
// ---------------------------------------------------------------------------

struct BlockConfig {
    index_t dim = 0, heads = 1;
    index_t grid_h = 0, grid_w = 0;
    AttnKind kind = AttnKind::Global;
    index_t window = 0;
    AdaPlacement placement = AdaPlacement::None;
    index_t cond_dim = 0;
    NormKind ada_base = NormKind::Instance;
    bool use_skip_proj = false;
    bool rel_bias = true;
    bool disc = false;       // LeakyReLU in MLP and after each residual sum
    double lr_scale = 1.0;   // runtime multiplier on every linear map
};

template <class T>
struct TransformerBlock {
    BlockConfig cfg;
    MultiheadAttention<T> attn;
    Mlp<T> mlp;
    PlainNorm<T> norm1, norm2;
    std::optional<AdaNorm<T>> ada1, ada2, ada_post;
    std::optional<Linear<T>> skip1, skip2;

    bool conditional() const { return cfg.placement != AdaPlacement::None; }

    Tensor<T> forward(const Tensor<T>& h, const Tensor<T>& cond, bool training,
                      TapSink<T>* sink) const {
        ST_CHECK(h.ndim() == 3 && h.dim(1) == cfg.grid_h * cfg.grid_w,
                 "block expects [B," << cfg.grid_h * cfg.grid_w << ",C], got "
                 << shape_str(h.shape()));
        ST_CHECK(!conditional() || cond.defined(),
                 "conditional block evaluated without a condition");
        const index_t B = h.dim(0), N = h.dim(1), C = h.dim(2);
        const bool trunk_cond = cfg.placement == AdaPlacement::ConfigB ||
                                cfg.placement == AdaPlacement::ConfigC;

        // attention sub-layer
        Tensor<T> t1 = conditional() ? ada1->forward(h, cond, training)
                                     : norm1.forward(h);
        Tensor<T> shortcut_src1 = trunk_cond ? t1 : h;
        const bool cap = sink && sink->capture_weights;
        AttentionOutput<T> ao;
        switch (cfg.kind) {
            case AttnKind::Global:
                ao = global_msa(attn, t1, cfg.grid_h, cfg.grid_w, cap);
                break;
            case AttnKind::Window:
                ao = w_msa(attn, reshape(t1, {B, cfg.grid_h, cfg.grid_w, C}),
                           cfg.window, cap);
                ao.out = reshape(ao.out, {B, N, C});
                break;
            case AttnKind::ShiftedWindow:
                ao = sw_msa(attn, reshape(t1, {B, cfg.grid_h, cfg.grid_w, C}),
                            cfg.window, cap);
                ao.out = reshape(ao.out, {B, N, C});
                break;
        }
        Tensor<T> branch1 = ao.out;
        if (cfg.placement == AdaPlacement::ConfigC && cfg.kind == AttnKind::Global)
            branch1 = ada_post->forward(branch1, cond, training);
        Tensor<T> s1 = skip1 ? skip1->forward(shortcut_src1) : shortcut_src1;
        if (sink) {
            TapRecord<T> rec;
            rec.label = "A" + std::to_string(sink->next_attn++);
            rec.resolution = cfg.grid_h;
            rec.shortcut_norm = ops::l2_norm(s1);
            rec.branch_norm = ops::l2_norm(branch1);
            rec.is_attention = true;
            rec.weights = ao.weights;
            rec.grid_h = cfg.grid_h;
            rec.grid_w = cfg.grid_w;
            rec.window = cfg.window;
            rec.heads = cfg.heads;
            rec.shifted = cfg.kind == AttnKind::ShiftedWindow;
            rec.global_attn = cfg.kind == AttnKind::Global;
            sink->records.push_back(std::move(rec));
        }
        Tensor<T> h1 = add(s1, branch1);
        if (cfg.disc) h1 = leaky_relu(h1, T(0.2));

        // MLP sub-layer
        Tensor<T> t2 = conditional() ? ada2->forward(h1, cond, training)
                                     : norm2.forward(h1);
        Tensor<T> shortcut_src2 = trunk_cond ? t2 : h1;
        Tensor<T> branch2 = mlp.forward(t2);
        Tensor<T> s2 = skip2 ? skip2->forward(shortcut_src2) : shortcut_src2;
        if (sink) {
            TapRecord<T> rec;
            rec.label = "M" + std::to_string(sink->next_mlp++);
            rec.resolution = cfg.grid_h;
            rec.shortcut_norm = ops::l2_norm(s2);
            rec.branch_norm = ops::l2_norm(branch2);
            sink->records.push_back(std::move(rec));
        }
        Tensor<T> h2 = add(s2, branch2);
        if (cfg.disc) h2 = leaky_relu(h2, T(0.2));
        return h2;
    }

    void collect(ParamList<T>& out, const std::string& p) const {
        out.add(p + ".attn.qkv.w", attn.qkv.w);
        out.add(p + ".attn.qkv.b", attn.qkv.b);
        out.add(p + ".attn.proj.w", attn.proj.w);
        out.add(p + ".attn.proj.b", attn.proj.b);
        if (attn.bias_table.defined()) out.add(p + ".attn.rel_bias", attn.bias_table);
        if (conditional()) {
            ada1->collect(out, p + ".ada1");
            ada2->collect(out, p + ".ada2");
            if (ada_post) ada_post->collect(out, p + ".ada_post");
        } else {
            norm1.collect(out, p + ".norm1");
            norm2.collect(out, p + ".norm2");
        }
        mlp.collect(out, p + ".mlp");
        if (skip1) {
            out.add(p + ".skip1.w", skip1->w);
            out.add(p + ".skip1.b", skip1->b);
            out.add(p + ".skip2.w", skip2->w);
            out.add(p + ".skip2.b", skip2->b);
        }
    }
};

template <class T>
Linear<T> make_linear(index_t in, index_t out, Rng& rng, const InitStyle& style,
                      double lr_scale = 1.0) {
    Linear<T> l;
    l.w = Tensor<T>({in, out});
    init_weight(l.w, rng, style);
    l.b = Tensor<T>::zeros({out});
    l.runtime_scale = static_cast<T>(lr_scale);
    return l;
}

template <class T>
TransformerBlock<T> make_transformer_block(const BlockConfig& cfg, Rng& rng) {
    ST_CHECK(cfg.dim > 0 && cfg.heads > 0 && cfg.dim % cfg.heads == 0,
             "block dim " << cfg.dim << " must be divisible by heads " << cfg.heads);
    ST_CHECK(cfg.kind == AttnKind::Global ||
                 (cfg.window > 0 && cfg.grid_h % cfg.window == 0 &&
                  cfg.grid_w % cfg.window == 0),
             "window " << cfg.window << " must divide grid " << cfg.grid_h << "x"
                       << cfg.grid_w);
    const InitStyle style = cfg.disc ? kDiscInit : kGenInit;
    TransformerBlock<T> blk;
    blk.cfg = cfg;

    blk.attn.dim = cfg.dim;
    blk.attn.heads = cfg.heads;
    blk.attn.qkv = make_linear<T>(cfg.dim, 3 * cfg.dim, rng, style, cfg.lr_scale);
    blk.attn.proj = make_linear<T>(cfg.dim, cfg.dim, rng, style, cfg.lr_scale);
    if (cfg.rel_bias) {
        const index_t bh = cfg.kind == AttnKind::Global ? cfg.grid_h : cfg.window;
        const index_t bw = cfg.kind == AttnKind::Global ? cfg.grid_w : cfg.window;
        blk.attn.bias_table = Tensor<T>({(2 * bh - 1) * (2 * bw - 1), cfg.heads});
        init_weight(blk.attn.bias_table, rng, style);
        blk.attn.bias_h = bh;
        blk.attn.bias_w = bw;
    }

    blk.mlp.fc1 = make_linear<T>(cfg.dim, 2 * cfg.dim, rng, style, cfg.lr_scale);
    blk.mlp.fc2 = make_linear<T>(2 * cfg.dim, cfg.dim, rng, style, cfg.lr_scale);
    blk.mlp.use_gelu = !cfg.disc;

    if (cfg.placement != AdaPlacement::None) {
        ST_CHECK(cfg.cond_dim > 0, "conditional block needs cond_dim");
        blk.ada1 = make_adanorm<T>(cfg.ada_base, cfg.cond_dim, cfg.dim);
        blk.ada2 = make_adanorm<T>(cfg.ada_base, cfg.cond_dim, cfg.dim);
        if (cfg.placement == AdaPlacement::ConfigC && cfg.kind == AttnKind::Global)
            blk.ada_post = make_adanorm<T>(cfg.ada_base, cfg.cond_dim, cfg.dim);
    } else {
        blk.norm1 = make_plain_norm<T>(cfg.dim);
        blk.norm2 = make_plain_norm<T>(cfg.dim);
    }

    if (cfg.use_skip_proj) {
        // identity at runtime: the stored matrix absorbs the runtime scale
        auto make_skip = [&] {
            Linear<T> l;
            l.w = Tensor<T>({cfg.dim, cfg.dim});
            init_identity(l.w, static_cast<T>(1.0 / cfg.lr_scale));
            l.b = Tensor<T>::zeros({cfg.dim});
            l.runtime_scale = static_cast<T>(cfg.lr_scale);
            return l;
        };
        blk.skip1 = make_skip();
        blk.skip2 = make_skip();
    }
    return blk;
}

// ---------------------------------------------------------------------------
// toRGB
// ---------------------------------------------------------------------------

template <class T>
struct ToRgb {
    PlainNorm<T> norm;
    Linear<T> fc1, fc2;  // C -> 2C -> 3
    Linear<T> skip;      // C -> 3

    Tensor<T> forward(const Tensor<T>& h, index_t gh, index_t gw) const {
        ST_CHECK(h.ndim() == 3 && h.dim(1) == gh * gw, "toRGB token count mismatch");
        Tensor<T> y = add(skip.forward(h),
                          fc2.forward(gelu(fc1.forward(norm.forward(h)))));
        return reshape(y, {h.dim(0), gh, gw, 3});
    }

    void collect(ParamList<T>& out, const std::string& p) const {
        norm.collect(out, p + ".norm");
        out.add(p + ".fc1.w", fc1.w);
        out.add(p + ".fc1.b", fc1.b);
        out.add(p + ".fc2.w", fc2.w);
        out.add(p + ".fc2.b", fc2.b);
        out.add(p + ".skip.w", skip.w);
        out.add(p + ".skip.b", skip.b);
    }
};

template <class T>
ToRgb<T> make_torgb(index_t C, Rng& rng) {
    ToRgb<T> t;
    t.norm = make_plain_norm<T>(C);
    t.fc1 = make_linear<T>(C, 2 * C, rng, kGenInit);
    t.fc2 = make_linear<T>(2 * C, 3, rng, kGenInit);
    t.skip = make_linear<T>(C, 3, rng, kGenInit);
    return t;
}

// ---------------------------------------------------------------------------
// Conv pieces (discriminator front end and critic head)
// ---------------------------------------------------------------------------

/// 3x3 convolution, zero padded, optional stride, image layout [B,H,W,C].
/// Weights are stored unit-scale and multiplied by the fan-in constant at
/// runtime.
template <class T>
struct Conv3x3 {
    Tensor<T> w;  // [9*Cin, Cout]
    Tensor<T> b;  // [Cout]
    T runtime_scale = T(1);
    index_t stride = 1;

    Tensor<T> forward(const Tensor<T>& x) const {
        ST_CHECK(x.ndim() == 4, "conv expects [B,H,W,C]");
        const index_t B = x.dim(0), H = x.dim(1), W = x.dim(2), Ci = x.dim(3);
        ST_CHECK(9 * Ci == w.dim(0), "conv channel mismatch");
        const index_t Ho = H / stride, Wo = W / stride, Co = w.dim(1);
        Tensor<T> cols = gather(x, ops::im2col3_map(B, H, W, Ci, stride),
                                Shape{B * Ho * Wo, 9 * Ci});
        Tensor<T> y = matmul(cols, scale(w, runtime_scale));
        y = add(y, broadcast_leading(b, Shape{B * Ho * Wo}));
        return reshape(y, {B, Ho, Wo, Co});
    }

    void collect(ParamList<T>& out, const std::string& p) const {
        out.add(p + ".w", w);
        out.add(p + ".b", b);
    }
};

template <class T>
Conv3x3<T> make_conv3x3(index_t Ci, index_t Co, index_t stride, Rng& rng) {
    Conv3x3<T> c;
    c.w = Tensor<T>({9 * Ci, Co});
    init_normal(c.w, rng, 1.0);
    c.b = Tensor<T>::zeros({Co});
    c.runtime_scale = static_cast<T>(1.0 / std::sqrt(9.0 * static_cast<double>(Ci)));
    c.stride = stride;
    return c;
}

/// conv3x3 -> LeakyReLU -> conv3x3(stride 2), plus a strided 1x1 skip.
template <class T>
struct ResDown {
    Conv3x3<T> conv1, conv2;
    Linear<T> skip;  // 1x1 conv as a per-pixel linear map, no bias

    Tensor<T> forward(const Tensor<T>& x) const {
        const index_t B = x.dim(0), H = x.dim(1), W = x.dim(2), Ci = x.dim(3);
        Tensor<T> a = conv2.forward(leaky_relu(conv1.forward(x), T(0.2)));
        Tensor<T> sub = gather(x, ops::subsample2_map(B, H, W, Ci),
                               Shape{B * (H / 2) * (W / 2), Ci});
        Tensor<T> s = skip.forward(sub);
        return add(a, reshape(s, a.shape()));
    }

    void collect(ParamList<T>& out, const std::string& p) const {
        conv1.collect(out, p + ".conv1");
        conv2.collect(out, p + ".conv2");
        out.add(p + ".skip.w", skip.w);
    }
};

template <class T>
ResDown<T> make_resdown(index_t Ci, index_t Co, Rng& rng) {
    ResDown<T> r;
    r.conv1 = make_conv3x3<T>(Ci, Co, 1, rng);
    r.conv2 = make_conv3x3<T>(Co, Co, 2, rng);
    r.skip.w = Tensor<T>({Ci, Co});
    init_normal(r.skip.w, rng, 1.0);
    r.skip.runtime_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(Ci)));
    return r;
}

}  // namespace strans
