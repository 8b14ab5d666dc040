#include <doctest.h>

#include "strans/blocks.hpp"

using namespace strans;

namespace {

BlockConfig small_block(AttnKind kind, AdaPlacement placement) {
    BlockConfig cfg;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.grid_h = cfg.grid_w = 4;
    cfg.kind = kind;
    cfg.window = kind == AttnKind::Global ? 0 : 2;
    cfg.placement = placement;
    cfg.cond_dim = placement == AdaPlacement::None ? 0 : 5;
    return cfg;
}

template <class T>
void randomize(ParamList<T>& params, Rng& rng, double s) {
    for (auto& e : params.items)
        if (e.trainable)
            for (T& v : e.tensor.raw()) v = static_cast<T>(s * rng.normal());
}

}  // namespace

TEST_SUITE("blocks") {

TEST_CASE("runtime weight scaling: (w/k, scale k*s) equals (w, scale s)") {
    Rng rng(71);
    const index_t in = 6, out = 4;
    Linear<double> a;
    a.w = Tensor<double>::randn({in, out}, rng);
    a.b = Tensor<double>::randn({out}, rng);
    a.runtime_scale = 0.5;

    const double k = 2.0;  // power of two so the division is exact
    Linear<double> b;
    b.w = Tensor<double>(a.w.shape());
    for (index_t i = 0; i < a.w.numel(); ++i)
        b.w.raw()[i] = a.w.values()[i] / k;
    // the runtime multiplier covers every stored parameter of the map, so the
    // bias absorbs the factor too
    b.b = Tensor<double>(a.b.shape());
    for (index_t i = 0; i < a.b.numel(); ++i)
        b.b.raw()[i] = a.b.values()[i] / k;
    b.runtime_scale = a.runtime_scale * k;

    Tensor<double> x = Tensor<double>::randn({3, in}, rng);
    Tensor<double> ya = a.forward(x);
    Tensor<double> yb = b.forward(x);
    for (index_t i = 0; i < ya.numel(); ++i)
        CHECK(ya.values()[i] == doctest::Approx(yb.values()[i]).epsilon(1e-14));
}

TEST_CASE("identity-initialized skip projections reproduce the plain shortcut") {
    for (AttnKind kind : {AttnKind::Window, AttnKind::Global}) {
        BlockConfig plain = small_block(kind, AdaPlacement::None);
        BlockConfig proj = plain;
        proj.use_skip_proj = true;
        // the skip matrices draw nothing from the stream, so the same seed
        // yields identical attention and MLP weights in both blocks
        Rng r1(72), r2(72);
        auto b1 = make_transformer_block<double>(plain, r1);
        auto b2 = make_transformer_block<double>(proj, r2);
        CHECK(b1.attn.qkv.w.values() == b2.attn.qkv.w.values());
        CHECK(b1.mlp.fc2.w.values() == b2.mlp.fc2.w.values());

        Rng rx(73);
        Tensor<double> h = Tensor<double>::randn({2, 16, 8}, rx);
        Tensor<double> y1 = b1.forward(h, Tensor<double>(), false, nullptr);
        Tensor<double> y2 = b2.forward(h, Tensor<double>(), false, nullptr);
        for (index_t i = 0; i < y1.numel(); ++i)
            CHECK(y1.values()[i] ==
                  doctest::Approx(y2.values()[i]).epsilon(1e-13));
    }
}

TEST_CASE("skip projections under a runtime scale still start as identity") {
    BlockConfig cfg = small_block(AttnKind::Window, AdaPlacement::None);
    cfg.use_skip_proj = true;
    cfg.lr_scale = 0.1;
    Rng rng(74);
    auto blk = make_transformer_block<double>(cfg, rng);
    REQUIRE(blk.skip1.has_value());
    // stored matrix is (1/scale) * I, so the runtime product is exactly I
    Tensor<double> x = Tensor<double>::randn({3, 8}, rng);
    Tensor<double> y = blk.skip1->forward(x);
    for (index_t i = 0; i < x.numel(); ++i)
        CHECK(y.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-14));
}

TEST_CASE("fresh conditional norms are exact identities over their base norm") {
    Rng rng(75);
    const index_t B = 3, N = 6, C = 4, cond_dim = 5;
    Tensor<double> x = Tensor<double>::randn({B, N, C}, rng);
    Tensor<double> cond = Tensor<double>::randn({B, cond_dim}, rng);

    auto layer = make_adanorm<double>(NormKind::Layer, cond_dim, C);
    auto inst = make_adanorm<double>(NormKind::Instance, cond_dim, C);
    auto batch = make_adanorm<double>(NormKind::Batch, cond_dim, C);

    Tensor<double> yl = layer.forward(x, cond, true);
    Tensor<double> yi = inst.forward(x, cond, true);
    Tensor<double> yb = batch.forward(x, cond, true);
    Tensor<double> rl = ops::layer_norm(x);
    Tensor<double> ri = ops::instance_norm(x);
    auto [mu, var] = ops::channel_stats(x);
    Tensor<double> rb = ops::batch_norm_with_stats(x, mu, var);
    for (index_t i = 0; i < x.numel(); ++i) {
        CHECK(yl.values()[i] == doctest::Approx(rl.values()[i]).epsilon(1e-12));
        CHECK(yi.values()[i] == doctest::Approx(ri.values()[i]).epsilon(1e-12));
        CHECK(yb.values()[i] == doctest::Approx(rb.values()[i]).epsilon(1e-12));
    }
    // and the modulation really is conditional once the nets are nonzero
    for (double& v : layer.gamma_net.w.raw()) v = 0.3;
    Tensor<double> cond2 = Tensor<double>::randn({B, cond_dim}, rng);
    Tensor<double> m1 = layer.forward(x, cond, true);
    Tensor<double> m2 = layer.forward(x, cond2, true);
    double diff = 0;
    for (index_t i = 0; i < x.numel(); ++i)
        diff = std::max(diff, std::abs(m1.values()[i] - m2.values()[i]));
    CHECK(diff > 1e-6);
}

TEST_CASE("post-attention conditioning only changes dense-attention blocks") {
    // On windowed blocks the two trunk-conditioning placements coincide; on
    // dense blocks the post-attention norm makes them differ.
    auto build_pair = [](AttnKind kind) {
        BlockConfig b = small_block(kind, AdaPlacement::ConfigB);
        BlockConfig c = small_block(kind, AdaPlacement::ConfigC);
        Rng r1(76), r2(76);
        auto blk_b = make_transformer_block<double>(b, r1);
        auto blk_c = make_transformer_block<double>(c, r2);
        // align every shared parameter by name; only the extra post-attention
        // norm (if any) keeps its identity initialization
        ParamList<double> pb, pc;
        blk_b.collect(pb, "blk");
        blk_c.collect(pc, "blk");
        for (auto& e : pc.items)
            if (Tensor<double>* src = pb.find(e.name))
                e.tensor.raw() = src->values();
        return std::pair{blk_b, blk_c};
    };

    Rng rx(78);
    Tensor<double> h = Tensor<double>::randn({2, 16, 8}, rx);
    Tensor<double> cond = Tensor<double>::randn({2, 5}, rx);
    {
        auto [b, c] = build_pair(AttnKind::Window);
        CHECK_FALSE(c.ada_post.has_value());
        Tensor<double> yb = b.forward(h, cond, false, nullptr);
        Tensor<double> yc = c.forward(h, cond, false, nullptr);
        CHECK(yb.values() == yc.values());  // identical parameter streams
    }
    {
        auto [b, c] = build_pair(AttnKind::Global);
        REQUIRE(c.ada_post.has_value());
        // same trunk params but c applies a (randomized) post-attention norm
        Tensor<double> yb = b.forward(h, cond, false, nullptr);
        Tensor<double> yc = c.forward(h, cond, false, nullptr);
        double diff = 0;
        for (index_t i = 0; i < yb.numel(); ++i)
            diff = std::max(diff, std::abs(yb.values()[i] - yc.values()[i]));
        CHECK(diff > 1e-6);
    }
}

TEST_CASE("attention-only conditioning skips the trunk norm reprojection") {
    // placement that conditions only the attention sub-layer keeps the raw
    // trunk as the shortcut; trunk placements use the normalized tensor
    BlockConfig a = small_block(AttnKind::Window, AdaPlacement::ConfigA);
    BlockConfig b = small_block(AttnKind::Window, AdaPlacement::ConfigB);
    Rng r1(79), r2(79);
    auto blk_a = make_transformer_block<double>(a, r1);
    auto blk_b = make_transformer_block<double>(b, r2);
    Rng rx(80);
    // large-magnitude input makes shortcut choice visible: config A keeps it
    Tensor<double> h = Tensor<double>::randn({2, 16, 8}, rx, 10.0);
    Tensor<double> cond = Tensor<double>::randn({2, 5}, rx);
    Tensor<double> ya = blk_a.forward(h, cond, false, nullptr);
    Tensor<double> yb = blk_b.forward(h, cond, false, nullptr);
    double na = ops::l2_norm(ya), nb = ops::l2_norm(yb);
    CHECK(na > 5 * nb);  // A's shortcut carries the unnormalized magnitude
}

TEST_CASE("gelu and softmax reproduce frozen reference values") {
    Tensor<double> x({6}, {-2.0, -1.0, -0.5, 0.5, 1.0, 2.0});
    Tensor<double> y = gelu(x);
    const double expect[6] = {-0.045500263896358417, -0.15865525393145707,
                              -0.15426876936299344, 0.34573123063700656,
                              0.84134474606854293, 1.9544997361036416};
    for (int i = 0; i < 6; ++i)
        CHECK(y.values()[i] == doctest::Approx(expect[i]).epsilon(1e-14));

    Tensor<double> s = softmax_last(Tensor<double>({1, 3}, {0.3, -1.2, 2.5}));
    const double sm[3] = {0.09757864772562469, 0.021772739294085852,
                          0.8806486129802894};
    for (int i = 0; i < 3; ++i)
        CHECK(s.values()[i] == doctest::Approx(sm[i]).epsilon(1e-14));

    // softplus(0) = ln 2 anchors the adversarial losses at a zeroed critic
    Tensor<double> sp = softplus(Tensor<double>({1}, {0.0}));
    CHECK(sp.values()[0] ==
          doctest::Approx(0.69314718055994529).epsilon(1e-15));
}

TEST_CASE("embeddings gather rows and reject out-of-range labels") {
    Embedding<double> emb;
    emb.table = Tensor<double>({3, 4}, {0, 1, 2, 3, 10, 11, 12, 13, 20, 21, 22, 23});
    Tensor<double> y = emb.forward({2, 0, 1, 2});
    REQUIRE(y.shape() == Shape{4, 4});
    CHECK(y.values() == std::vector<double>{20, 21, 22, 23, 0, 1, 2, 3, 10, 11,
                                            12, 13, 20, 21, 22, 23});
    CHECK_THROWS_AS(emb.forward({3}), Error);
    CHECK_THROWS_AS(emb.forward({-1}), Error);
}

TEST_CASE("taps record interleaved attention and MLP labels in order") {
    BlockConfig cfg = small_block(AttnKind::Window, AdaPlacement::None);
    BlockConfig cfg2 = small_block(AttnKind::ShiftedWindow, AdaPlacement::None);
    Rng rng(81);
    auto b1 = make_transformer_block<double>(cfg, rng);
    auto b2 = make_transformer_block<double>(cfg2, rng);
    Tensor<double> h = Tensor<double>::randn({2, 16, 8}, rng);
    TapSink<double> sink;
    sink.capture_weights = true;
    Tensor<double> y =
        b2.forward(b1.forward(h, {}, false, &sink), {}, false, &sink);
    CHECK(y.numel() == 2 * 16 * 8);
    REQUIRE(sink.records.size() == 4);
    CHECK(sink.records[0].label == "A1");
    CHECK(sink.records[1].label == "M1");
    CHECK(sink.records[2].label == "A2");
    CHECK(sink.records[3].label == "M2");
    CHECK(sink.records[0].is_attention);
    CHECK_FALSE(sink.records[1].is_attention);
    CHECK(sink.records[0].weights.defined());
    CHECK(sink.records[0].grid_h == 4);
    CHECK(sink.records[0].window == 2);
    CHECK_FALSE(sink.records[0].shifted);
    CHECK(sink.records[2].shifted);
    CHECK(sink.records[0].shortcut_norm > 0);
    CHECK(sink.records[0].branch_norm > 0);
    sink.reset();
    CHECK(sink.records.empty());
    b1.forward(h, {}, false, &sink);
    CHECK(sink.records[0].label == "A1");  // numbering restarts after reset
}

TEST_CASE("parameter collection names follow the module tree") {
    BlockConfig cfg = small_block(AttnKind::Window, AdaPlacement::ConfigC);
    cfg.use_skip_proj = true;
    Rng rng(82);
    auto blk = make_transformer_block<double>(cfg, rng);
    ParamList<double> params;
    blk.collect(params, "blk");
    auto has = [&](const std::string& n) { return params.find(n) != nullptr; };
    CHECK(has("blk.attn.qkv.w"));
    CHECK(has("blk.attn.qkv.b"));
    CHECK(has("blk.attn.proj.w"));
    CHECK(has("blk.attn.rel_bias"));
    CHECK(has("blk.ada1.gamma.w"));
    CHECK(has("blk.ada2.beta.b"));
    CHECK(has("blk.mlp.fc1.w"));
    CHECK(has("blk.skip1.w"));
    CHECK(has("blk.skip2.b"));
    CHECK_FALSE(has("blk.norm1.gain"));  // conditional blocks swap norms out
    // duplicate registration is rejected
    ParamList<double> dup;
    Tensor<double> t({2});
    dup.add("x", t);
    CHECK_THROWS_AS(dup.add("x", t), Error);
}

TEST_CASE("discriminator blocks activate after each residual sum") {
    BlockConfig cfg = small_block(AttnKind::Window, AdaPlacement::None);
    cfg.disc = true;
    Rng rng(83);
    auto blk = make_transformer_block<double>(cfg, rng);
    CHECK_FALSE(blk.mlp.use_gelu);
    Tensor<double> h = Tensor<double>::randn({2, 16, 8}, rng);
    Tensor<double> y = blk.forward(h, {}, false, nullptr);
    // recompose the documented layout by hand from the block's own pieces:
    // norm -> attention -> residual -> leaky, norm -> mlp -> residual -> leaky
    Tensor<double> t1 = blk.norm1.forward(h);
    auto ao = w_msa(blk.attn, reshape(t1, {2, 4, 4, 8}), 2);
    Tensor<double> h1 = leaky_relu(add(h, reshape(ao.out, {2, 16, 8})), 0.2);
    Tensor<double> t2 = blk.norm2.forward(h1);
    Tensor<double> ref = leaky_relu(add(h1, blk.mlp.forward(t2)), 0.2);
    CHECK(y.values() == ref.values());
}

TEST_CASE("downsampling residual halves the grid and keeps both paths") {
    Rng rng(84);
    const index_t B = 2, H = 8, W = 8, Ci = 3, Co = 5;
    ResDown<double> rd = make_resdown<double>(Ci, Co, rng);
    Tensor<double> x = Tensor<double>::randn({B, H, W, Ci}, rng);
    Tensor<double> y = rd.forward(x);
    REQUIRE(y.shape() == Shape{B, 4, 4, Co});
    // zero the conv path: what remains is the strided 1x1 skip
    init_const(rd.conv1.w, 0.0);
    init_const(rd.conv1.b, 0.0);
    init_const(rd.conv2.w, 0.0);
    init_const(rd.conv2.b, 0.0);
    Tensor<double> skip_only = rd.forward(x);
    for (index_t b = 0; b < B; ++b)
        for (index_t i = 0; i < 4; ++i)
            for (index_t j = 0; j < 4; ++j)
                for (index_t o = 0; o < Co; ++o) {
                    double acc = 0;
                    for (index_t c = 0; c < Ci; ++c)
                        acc += x.values()[((b * H + 2 * i) * W + 2 * j) * Ci + c] *
                               rd.skip.w.values()[c * Co + o] *
                               static_cast<double>(rd.skip.runtime_scale);
                    CHECK(skip_only.values()[((b * 4 + i) * 4 + j) * Co + o] ==
                          doctest::Approx(acc).epsilon(1e-12));
                }
}

TEST_CASE("rgb head mixes a learned path with a linear skip at fixed shape") {
    Rng rng(85);
    const index_t C = 6;
    ToRgb<double> t = make_torgb<double>(C, rng);
    Tensor<double> h = Tensor<double>::randn({2, 16, C}, rng);
    Tensor<double> y = t.forward(h, 4, 4);
    REQUIRE(y.shape() == Shape{2, 4, 4, 3});
    CHECK_THROWS_AS(t.forward(h, 4, 8), Error);
}

}  // TEST_SUITE
