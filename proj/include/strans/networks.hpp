#pragma once

#include "strans/blocks.hpp"

// Whole networks assembled from stage schedules. The generator grows a 4x4
// token grid to the target resolution, switching from dense attention at low
// resolutions to windowed attention pairs from 16x16 up. The discriminator
// downsamples the image 4x with two conv residual blocks, runs windowed
// attention stages at constant width down to a 4x4 grid, and scores it with
// a small conv+linear head.

namespace strans {

enum class Upsample { None, Bilinear, PixelShuffle };
enum class StageKind { Global, SwinPair };

struct StageSpec {
    index_t resolution = 0;
    index_t channels = 0;
    index_t num_blocks = 2;
    index_t window = 0;  // SwinPair only
    StageKind kind = StageKind::Global;
    Upsample upsample_in = Upsample::None;
};

struct GeneratorSpec {
    index_t latent_dim = 512;
    index_t base = 4;
    index_t target = 32;
    index_t channels = 128;
    index_t heads = 4;
    index_t window = 4;
    index_t num_classes = 0;
    AdaPlacement placement = AdaPlacement::None;
    NormKind ada_base = NormKind::Instance;
    bool all_global = false;      // dense-attention baseline variant
    bool global_rel_bias = false; // relative bias in dense-attention blocks
    bool use_skip_proj = false;
    std::vector<StageSpec> stages;  // derived by finalize when empty

    bool conditional() const { return placement != AdaPlacement::None; }
    index_t cond_dim() const { return channels + latent_dim; }
};

struct DiscriminatorSpec {
    index_t input_res = 32;
    index_t channels = 256;
    index_t heads = 4;
    index_t window = 4;
    index_t num_classes = 0;
    double lr_scale = 0.1;
    bool use_skip_proj = true;
    std::vector<StageSpec> stages;
};

/// Largest dense-attention score matrix allowed at batch 1 before the
/// builder refuses (overridable): dense attention is quadratic in tokens and
/// a 64x64 grid at four heads already needs a quarter-gigabyte per
/// activation, past this 128 MiB cap.
inline constexpr index_t kScoreMemoryCap = index_t(1) << 27;

inline void finalize_generator_spec(GeneratorSpec& spec) {
    ST_CHECK(spec.base == 4, "base grid must be 4x4");
    ST_CHECK(spec.target >= 8 && (spec.target & (spec.target - 1)) == 0,
             "target resolution must be a power of two >= 8, got " << spec.target);
    ST_CHECK(spec.channels % spec.heads == 0, "channels must divide by heads");
    if (!spec.stages.empty()) return;
    for (index_t res = spec.base; res <= spec.target; res *= 2) {
        StageSpec s;
        s.resolution = res;
        s.kind = (spec.all_global || res < 16) ? StageKind::Global
                                               : StageKind::SwinPair;
        s.window = std::min(spec.window, res);
        s.upsample_in = res == spec.base ? Upsample::None
                        : res == 64      ? Upsample::PixelShuffle
                                         : Upsample::Bilinear;
        // channels stay constant until the pixel-shuffle stage quarters them
        s.channels = res >= 64 ? spec.channels / 4 : spec.channels;
        if (res > 64) s.upsample_in = Upsample::Bilinear;
        spec.stages.push_back(s);
    }
    for (const StageSpec& s : spec.stages) {
        ST_CHECK(s.channels > 0 && s.channels % spec.heads == 0,
                 "stage at " << s.resolution << " has channels " << s.channels
                             << " not divisible by heads " << spec.heads);
        if (s.kind == StageKind::SwinPair)
            ST_CHECK(s.num_blocks % 2 == 0,
                     "windowed stages need an even block count");
    }
}

inline void finalize_discriminator_spec(DiscriminatorSpec& spec) {
    ST_CHECK(spec.input_res % 4 == 0 && spec.input_res >= 16,
             "discriminator input must be a multiple of 4 and >= 16");
    ST_CHECK(spec.channels % spec.heads == 0, "channels must divide by heads");
    if (!spec.stages.empty()) return;
    for (index_t res = spec.input_res / 4; res >= 4; res /= 2) {
        StageSpec s;
        s.resolution = res;
        s.channels = spec.channels;  // constant width, no patch merging
        s.kind = StageKind::SwinPair;
        s.window = std::min(spec.window, res);
        s.upsample_in =
            res == spec.input_res / 4 ? Upsample::None : Upsample::Bilinear;
        spec.stages.push_back(s);
    }
    ST_CHECK(!spec.stages.empty() && spec.stages.back().resolution == 4,
             "discriminator stages must end on a 4x4 grid");
}

namespace detail {

inline void check_score_memory(const StageSpec& s, index_t heads,
                               index_t elem_size, bool force) {
    if (s.kind != StageKind::Global) return;
    const index_t n = s.resolution * s.resolution;
    const index_t bytes = heads * n * n * elem_size;
    ST_CHECK(force || bytes <= kScoreMemoryCap,
             "dense attention at " << s.resolution << "x" << s.resolution
             << " needs " << bytes << " bytes per score matrix (cap "
             << kScoreMemoryCap << "); pass the memory override to proceed");
}

template <class T>
std::vector<TransformerBlock<T>> build_stage_blocks(
    const StageSpec& s, index_t heads, AdaPlacement placement, index_t cond_dim,
    NormKind ada_base, bool use_skip_proj, bool global_rel_bias, bool disc,
    double lr_scale, Rng& rng, std::vector<index_t>& stage_of,
    index_t stage_index) {
    std::vector<TransformerBlock<T>> blocks;
    for (index_t i = 0; i < s.num_blocks; ++i) {
        BlockConfig cfg;
        cfg.dim = s.channels;
        cfg.heads = heads;
        cfg.grid_h = cfg.grid_w = s.resolution;
        cfg.kind = s.kind == StageKind::Global ? AttnKind::Global
                   : i % 2 == 0               ? AttnKind::Window
                                              : AttnKind::ShiftedWindow;
        cfg.window = s.window;
        cfg.placement = placement;
        cfg.cond_dim = cond_dim;
        cfg.ada_base = ada_base;
        cfg.use_skip_proj = use_skip_proj;
        cfg.rel_bias = s.kind == StageKind::Global ? global_rel_bias : true;
        cfg.disc = disc;
        cfg.lr_scale = lr_scale;
        blocks.push_back(make_transformer_block<T>(cfg, rng));
        stage_of.push_back(stage_index);
    }
    return blocks;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

template <class T>
struct Generator {
    GeneratorSpec spec;
    Linear<T> z_proj;   // latent -> 16*C0
    Tensor<T> pos_enc;  // [16, C0]
    std::optional<Embedding<T>> class_embed;
    std::vector<TransformerBlock<T>> blocks;
    std::vector<index_t> block_stage;
    ToRgb<T> torgb;
    ParamList<T> params;

    /// z: [B, latent]; y: one label per sample iff the generator is
    /// conditional. Returns [B, target, target, 3].
    Tensor<T> forward(const Tensor<T>& z, const std::vector<index_t>& y,
                      bool training = false, TapSink<T>* sink = nullptr) const {
        ST_CHECK(z.ndim() == 2 && z.dim(1) == spec.latent_dim,
                 "latent must be [B," << spec.latent_dim << "], got "
                 << shape_str(z.shape()));
        const index_t B = z.dim(0);
        if (spec.conditional())
            ST_CHECK(static_cast<index_t>(y.size()) == B,
                     "conditional generator needs one label per sample");
        else
            ST_CHECK(y.empty(), "unconditional generator got labels");

        Tensor<T> cond;
        if (spec.conditional())
            cond = ops::concat_last(class_embed->forward(y), z);

        const index_t C0 = spec.stages.front().channels;
        Tensor<T> h = z_proj.forward(z);  // [B, 16*C0]
        h = add(h, broadcast_leading(reshape(pos_enc, {16 * C0}), Shape{B}));
        h = reshape(h, {B, 16, C0});

        size_t bi = 0;
        for (size_t si = 0; si < spec.stages.size(); ++si) {
            const StageSpec& st = spec.stages[si];
            if (st.upsample_in != Upsample::None) {
                const StageSpec& prev = spec.stages[si - 1];
                const index_t pr = prev.resolution;
                Tensor<T> img = reshape(h, {B, pr, pr, prev.channels});
                if (st.upsample_in == Upsample::Bilinear) {
                    img = ops::resize_bilinear(img, st.resolution, st.resolution);
                } else {
                    img = ops::pixel_shuffle2(img);
                }
                ST_CHECK(img.dim(3) == st.channels,
                         "channel schedule mismatch entering stage "
                         << st.resolution);
                h = reshape(img, {B, st.resolution * st.resolution, st.channels});
            }
            for (index_t k = 0; k < st.num_blocks; ++k, ++bi)
                h = blocks[bi].forward(h, cond, training, sink);
        }
        const index_t R = spec.target;
        return torgb.forward(h, R, R);
    }
};

template <class T>
Generator<T> build_generator(GeneratorSpec spec, std::uint64_t seed,
                             bool force_memory = false) {
    finalize_generator_spec(spec);
    for (const StageSpec& s : spec.stages)
        detail::check_score_memory(s, spec.heads, sizeof(T), force_memory);

    Rng rng(Rng::mix(seed, 0x67656e)) /* per-network stream */;
    Generator<T> g;
    g.spec = spec;
    const index_t C0 = spec.stages.front().channels;
    g.z_proj = make_linear<T>(spec.latent_dim, 16 * C0, rng, kGenInit);
    g.pos_enc = Tensor<T>({16, C0});
    init_weight(g.pos_enc, rng, kGenInit);
    if (spec.conditional()) {
        ST_CHECK(spec.num_classes > 1, "conditional generator needs >= 2 classes");
        Embedding<T> e{Tensor<T>({spec.num_classes, spec.channels})};
        init_weight(e.table, rng, kGenInit);
        g.class_embed = std::move(e);
    }
    for (size_t si = 0; si < spec.stages.size(); ++si) {
        auto stage_blocks = detail::build_stage_blocks<T>(
            spec.stages[si], spec.heads, spec.placement,
            spec.conditional() ? spec.cond_dim() : 0, spec.ada_base,
            spec.use_skip_proj, spec.global_rel_bias, false, 1.0, rng,
            g.block_stage, static_cast<index_t>(si));
        for (auto& b : stage_blocks) g.blocks.push_back(std::move(b));
    }
    g.torgb = make_torgb<T>(spec.stages.back().channels, rng);

    g.params.add("z_proj.w", g.z_proj.w);
    g.params.add("z_proj.b", g.z_proj.b);
    g.params.add("pos_enc", g.pos_enc);
    if (g.class_embed) g.class_embed->collect(g.params, "class_embed");
    size_t bi = 0;
    for (size_t si = 0; si < spec.stages.size(); ++si) {
        const StageSpec& st = spec.stages[si];
        for (index_t k = 0; k < st.num_blocks; ++k, ++bi)
            g.blocks[bi].collect(
                g.params, "stage_" + std::to_string(st.resolution) + ".b" +
                              std::to_string(k));
    }
    g.torgb.collect(g.params, "torgb");
    return g;
}

/// Windowed-attention generator: dense blocks below 16x16, window/shifted
/// pairs from 16x16 up.
template <class T>
Generator<T> build_strans_g(GeneratorSpec spec, std::uint64_t seed,
                            bool force_memory = false) {
    spec.all_global = false;
    return build_generator<T>(std::move(spec), seed, force_memory);
}

/// Dense-attention baseline: every stage uses global attention.
template <class T>
Generator<T> build_trans_g(GeneratorSpec spec, std::uint64_t seed,
                           bool force_memory = false) {
    spec.all_global = true;
    spec.stages.clear();
    return build_generator<T>(std::move(spec), seed, force_memory);
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

template <class T>
struct Discriminator {
    DiscriminatorSpec spec;
    ResDown<T> down1, down2;
    std::vector<TransformerBlock<T>> blocks;
    std::vector<index_t> block_stage;
    Conv3x3<T> head_conv;
    Linear<T> head_fc1, head_fc2;
    std::optional<Embedding<T>> proj_embed;
    ParamList<T> params;

    bool conditional() const { return spec.num_classes > 0; }

    /// img: [B, R, R, 3]; y: labels iff conditional. Returns critic scores
    /// [B, 1].
    Tensor<T> forward(const Tensor<T>& img, const std::vector<index_t>& y,
                      bool training = false, TapSink<T>* sink = nullptr) const {
        ST_CHECK(img.ndim() == 4 && img.dim(3) == 3 &&
                     img.dim(1) == spec.input_res && img.dim(2) == spec.input_res,
                 "discriminator expects [B," << spec.input_res << ","
                 << spec.input_res << ",3], got " << shape_str(img.shape()));
        const index_t B = img.dim(0);
        if (conditional())
            ST_CHECK(static_cast<index_t>(y.size()) == B,
                     "conditional discriminator needs one label per sample");

        Tensor<T> x = down2.forward(down1.forward(img));
        const index_t C = spec.channels;
        Tensor<T> h = reshape(
            x, {B, spec.stages.front().resolution * spec.stages.front().resolution,
                C});
        Tensor<T> cond;  // transformer stages are unconditional
        size_t bi = 0;
        for (size_t si = 0; si < spec.stages.size(); ++si) {
            const StageSpec& st = spec.stages[si];
            if (st.upsample_in == Upsample::Bilinear) {
                const index_t pr = spec.stages[si - 1].resolution;
                Tensor<T> im = reshape(h, {B, pr, pr, C});
                im = ops::resize_bilinear(im, st.resolution, st.resolution);
                h = reshape(im, {B, st.resolution * st.resolution, C});
            }
            for (index_t k = 0; k < st.num_blocks; ++k, ++bi)
                h = blocks[bi].forward(h, cond, training, sink);
        }

        Tensor<T> feat = head_conv.forward(reshape(h, {B, 4, 4, C}));
        Tensor<T> phi = leaky_relu(head_fc1.forward(reshape(feat, {B, 16 * C})),
                                   T(0.2));
        Tensor<T> out = head_fc2.forward(phi);  // [B,1]
        if (conditional()) {
            // class-projection term on the penultimate features
            Tensor<T> e = proj_embed->forward(y);  // [B,C]
            out = add(out, sum_last(mul(phi, e)));
        }
        return out;
    }
};

template <class T>
Discriminator<T> build_strans_d(DiscriminatorSpec spec, std::uint64_t seed) {
    finalize_discriminator_spec(spec);
    Rng rng(Rng::mix(seed, 0x64697363)) /* per-network stream */;
    Discriminator<T> d;
    d.spec = spec;
    const index_t C = spec.channels;
    d.down1 = make_resdown<T>(3, C, rng);
    d.down2 = make_resdown<T>(C, C, rng);
    for (size_t si = 0; si < spec.stages.size(); ++si) {
        auto stage_blocks = detail::build_stage_blocks<T>(
            spec.stages[si], spec.heads, AdaPlacement::None, 0, NormKind::Layer,
            spec.use_skip_proj, false, true, spec.lr_scale, rng, d.block_stage,
            static_cast<index_t>(si));
        for (auto& b : stage_blocks) d.blocks.push_back(std::move(b));
    }
    d.head_conv = make_conv3x3<T>(C, C, 1, rng);
    d.head_fc1 = Linear<T>{Tensor<T>({16 * C, C}), Tensor<T>::zeros({C}),
                           static_cast<T>(1.0 / std::sqrt(16.0 * C))};
    init_normal(d.head_fc1.w, rng, 1.0);
    d.head_fc2 = Linear<T>{Tensor<T>({C, 1}), Tensor<T>::zeros({1}),
                           static_cast<T>(1.0 / std::sqrt(static_cast<double>(C)))};
    init_normal(d.head_fc2.w, rng, 1.0);
    if (spec.num_classes > 0) {
        Embedding<T> e{Tensor<T>({spec.num_classes, C})};
        init_normal(e.table, rng, 1.0 / std::sqrt(static_cast<double>(C)));
        d.proj_embed = std::move(e);
    }

    d.down1.collect(d.params, "down1");
    d.down2.collect(d.params, "down2");
    size_t bi = 0;
    for (size_t si = 0; si < spec.stages.size(); ++si) {
        const StageSpec& st = spec.stages[si];
        for (index_t k = 0; k < st.num_blocks; ++k, ++bi)
            d.blocks[bi].collect(
                d.params, "stage_" + std::to_string(st.resolution) + ".b" +
                              std::to_string(k));
    }
    d.head_conv.collect(d.params, "head.conv");
    d.params.add("head.fc1.w", d.head_fc1.w);
    d.params.add("head.fc1.b", d.head_fc1.b);
    d.params.add("head.fc2.w", d.head_fc2.w);
    d.params.add("head.fc2.b", d.head_fc2.b);
    if (d.proj_embed) d.proj_embed->collect(d.params, "head.proj_embed");
    return d;
}

// ---------------------------------------------------------------------------
// Parameter census
// ---------------------------------------------------------------------------

struct CensusRow {
    std::string group;
    index_t count = 0;
};

/// Parameter counts grouped by block: stage parameters group as
/// "stage_<res>.b<k>", everything else by its first name component, in
/// registration order.
template <class T>
std::vector<CensusRow> census(const ParamList<T>& params) {
    std::vector<CensusRow> rows;
    for (const auto& e : params.items) {
        if (!e.trainable) continue;
        size_t cut = e.name.find('.');
        if (e.name.rfind("stage_", 0) == 0 && cut != std::string::npos)
            cut = e.name.find('.', cut + 1);
        std::string group = e.name.substr(0, cut);
        if (rows.empty() || rows.back().group != group)
            rows.push_back({group, 0});
        rows.back().count += e.tensor.numel();
    }
    return rows;
}

}  // namespace strans
