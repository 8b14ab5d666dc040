#include "strans/gradcheck.hpp"

#include <memory>

// Case construction for the finite-difference suite. Module cases (conv,
// norm, attention, full blocks) rebuild the module per seed through a shared
// slot, register every trainable tensor as a probed input, and randomize the
// parameters away from their structured init points so no gradient path is
// trivially zero.

namespace strans {

namespace {

using TD = Tensor<double>;
using TV = std::vector<TD>;

TD rand_t(Rng& rng, Shape s, double stddev = 1.0) {
    return TD::randn(std::move(s), rng, stddev);
}

FdCase unary_case(const std::string& name,
                  std::function<TD(const TD&)> op, bool pos = false,
                  Shape shape = {2, 3, 4}) {
    FdCase c;
    c.name = name;
    c.make_inputs = [pos, shape](Rng& rng) {
        TV in;
        in.push_back(pos ? detail::positive(rng, shape) : rand_t(rng, shape));
        in.push_back(rand_t(rng, shape));
        return in;
    };
    c.fn = [op](const TV& in) { return detail::readout(op(in[0]), in[1]); };
    return c;
}

FdCase binary_case(const std::string& name,
                   std::function<TD(const TD&, const TD&)> op,
                   Shape shape = {2, 3, 4}) {
    FdCase c;
    c.name = name;
    c.make_inputs = [shape](Rng& rng) {
        return TV{rand_t(rng, shape), rand_t(rng, shape), rand_t(rng, shape)};
    };
    c.fn = [op](const TV& in) { return detail::readout(op(in[0], in[1]), in[2]); };
    return c;
}

void randomize_params(ParamList<double>& pl, Rng& rng, double stddev) {
    for (auto& e : pl.items)
        if (e.trainable)
            for (double& v : e.tensor.raw()) v = stddev * rng.normal();
}

TV params_as_inputs(const ParamList<double>& pl) {
    TV out;
    for (const auto& e : pl.items)
        if (e.trainable) out.push_back(e.tensor);
    return out;
}

MultiheadAttention<double> attn_from(const TV& in, index_t dim, index_t heads,
                                     index_t bh, index_t bw) {
    MultiheadAttention<double> a;
    a.dim = dim;
    a.heads = heads;
    a.qkv = {in[1], in[2], 1.0};
    a.proj = {in[3], in[4], 1.0};
    a.bias_table = in[5];
    a.bias_h = bh;
    a.bias_w = bw;
    return a;
}

TV attn_inputs(Rng& rng, Shape x_shape, index_t dim, index_t bh, index_t bw,
               Shape out_shape) {
    TV in;
    in.push_back(rand_t(rng, std::move(x_shape)));
    in.push_back(rand_t(rng, {dim, 3 * dim}, 0.5));   // qkv.w
    in.push_back(rand_t(rng, {3 * dim}, 0.5));        // qkv.b
    in.push_back(rand_t(rng, {dim, dim}, 0.5));       // proj.w
    in.push_back(rand_t(rng, {dim}, 0.5));            // proj.b
    in.push_back(rand_t(rng, {(2 * bh - 1) * (2 * bw - 1), 2}, 0.5));  // bias
    in.push_back(rand_t(rng, std::move(out_shape)));  // readout
    return in;
}

const char* base_label(NormKind base) {
    switch (base) {
        case NormKind::Layer: return "layer";
        case NormKind::Instance: return "instance";
        default: return "batch";
    }
}

FdCase block_case(const std::string& name, BlockConfig cfg, index_t B) {
    FdCase c;
    c.name = name;
    auto slot = std::make_shared<TransformerBlock<double>>();
    auto params = std::make_shared<ParamList<double>>();
    const index_t N = cfg.grid_h * cfg.grid_w;
    c.make_inputs = [slot, params, cfg, B, N](Rng& rng) {
        Rng build(rng.raw());
        *slot = make_transformer_block<double>(cfg, build);
        *params = ParamList<double>{};
        slot->collect(*params, "blk");
        randomize_params(*params, rng, 0.3);
        TV in;
        in.push_back(rand_t(rng, {B, N, cfg.dim}));
        if (cfg.placement != AdaPlacement::None)
            in.push_back(rand_t(rng, {B, cfg.cond_dim}));
        for (auto& t : params_as_inputs(*params)) in.push_back(t);
        in.push_back(rand_t(rng, {B, N, cfg.dim}));  // readout
        return in;
    };
    const bool cond = cfg.placement != AdaPlacement::None;
    c.fn = [slot, cond](const TV& in) {
        const TD& h = in[0];
        TD cvec = cond ? in[1] : TD();
        return detail::readout(slot->forward(h, cvec, /*training=*/false, nullptr),
                               in.back());
    };
    return c;
}

}  // namespace

std::vector<FdCase> gradcheck_cases() {
    std::vector<FdCase> cases;

    // ---- elementwise ----
    cases.push_back(binary_case("add", [](const TD& a, const TD& b) { return add(a, b); }));
    cases.push_back(binary_case("sub", [](const TD& a, const TD& b) { return sub(a, b); }));
    cases.push_back(binary_case("mul", [](const TD& a, const TD& b) { return mul(a, b); }));
    cases.push_back(unary_case("neg", [](const TD& x) { return neg(x); }));
    cases.push_back(unary_case("scale", [](const TD& x) { return scale(x, 1.7); }));
    cases.push_back(unary_case("add_scalar", [](const TD& x) { return add_scalar(x, -0.3); }));
    cases.push_back(unary_case("exp", [](const TD& x) { return exp(x); }));
    cases.push_back(unary_case("log", [](const TD& x) { return log(x); }, true));
    cases.push_back(unary_case("sqrt", [](const TD& x) { return sqrt(x); }, true));
    cases.push_back(unary_case("reciprocal", [](const TD& x) { return reciprocal(x); }, true));
    cases.push_back(unary_case("square", [](const TD& x) { return square(x); }));
    cases.push_back(unary_case("erf", [](const TD& x) { return erf(x); }));
    cases.push_back(unary_case("tanh", [](const TD& x) { return tanh(x); }));
    cases.push_back(unary_case("sigmoid", [](const TD& x) { return sigmoid(x); }));
    cases.push_back(unary_case("softplus", [](const TD& x) { return softplus(x); }));
    cases.push_back(unary_case("leaky_relu", [](const TD& x) { return leaky_relu(x, 0.2); }));
    cases.push_back(unary_case("gelu", [](const TD& x) { return gelu(x); }));
    cases.push_back(unary_case("softmax_last",
                               [](const TD& x) { return softmax_last(x); }, false,
                               {2, 3, 5}));

    // ---- matmul / layout ----
    {
        FdCase c;
        c.name = "matmul_2d";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {3, 4}), rand_t(rng, {4, 5}), rand_t(rng, {3, 5})};
        };
        c.fn = [](const TV& in) { return detail::readout(matmul(in[0], in[1]), in[2]); };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "matmul_batched";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {2, 3, 4}), rand_t(rng, {2, 4, 5}),
                      rand_t(rng, {2, 3, 5})};
        };
        c.fn = [](const TV& in) { return detail::readout(matmul(in[0], in[1]), in[2]); };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "matmul_shared_rhs";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {2, 3, 4}), rand_t(rng, {4, 5}),
                      rand_t(rng, {2, 3, 5})};
        };
        c.fn = [](const TV& in) { return detail::readout(matmul(in[0], in[1]), in[2]); };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "transpose2";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {2, 3, 4}), rand_t(rng, {2, 4, 3})};
        };
        c.fn = [](const TV& in) { return detail::readout(transpose2(in[0]), in[1]); };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "reshape";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {2, 3, 4}), rand_t(rng, {6, 4})};
        };
        c.fn = [](const TV& in) {
            return detail::readout(reshape(in[0], {6, 4}), in[1]);
        };
        cases.push_back(c);
    }

    // ---- reductions and broadcasts ----
    {
        FdCase c;
        c.name = "sum_all";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {2, 3, 4}), rand_t(rng, {})};
        };
        c.fn = [](const TV& in) { return mul(sum_all(in[0]), in[1]); };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "sum_last";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {2, 3, 4}), rand_t(rng, {2, 3, 1})};
        };
        c.fn = [](const TV& in) { return detail::readout(sum_last(in[0]), in[1]); };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "sum_leading";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {2, 3, 4}), rand_t(rng, {4})};
        };
        c.fn = [](const TV& in) { return detail::readout(sum_leading(in[0]), in[1]); };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "broadcast_scalar";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {}), rand_t(rng, {2, 3})};
        };
        c.fn = [](const TV& in) {
            return detail::readout(broadcast_scalar(in[0], {2, 3}), in[1]);
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "broadcast_last";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {2, 3, 1}), rand_t(rng, {2, 3, 5})};
        };
        c.fn = [](const TV& in) {
            return detail::readout(broadcast_last(in[0], 5), in[1]);
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "broadcast_leading";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {4}), rand_t(rng, {2, 3, 4})};
        };
        c.fn = [](const TV& in) {
            return detail::readout(broadcast_leading(in[0], {2, 3}), in[1]);
        };
        cases.push_back(c);
    }

    // ---- structural image ops ----
    {
        FdCase c;
        c.name = "window_partition";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {1, 4, 4, 3}), rand_t(rng, {4, 4, 3})};
        };
        c.fn = [](const TV& in) {
            return detail::readout(ops::window_partition(in[0], 2), in[1]);
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "window_merge";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {4, 4, 3}), rand_t(rng, {1, 4, 4, 3})};
        };
        c.fn = [](const TV& in) {
            return detail::readout(ops::window_merge(in[0], 1, 4, 4, 2), in[1]);
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "roll2d";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {1, 4, 4, 2}), rand_t(rng, {1, 4, 4, 2})};
        };
        c.fn = [](const TV& in) {
            return detail::readout(ops::roll2d(in[0], 1, -1), in[1]);
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "pixel_shuffle2";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {1, 2, 2, 8}), rand_t(rng, {1, 4, 4, 2})};
        };
        c.fn = [](const TV& in) {
            return detail::readout(ops::pixel_shuffle2(in[0]), in[1]);
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "resize_bilinear_up";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {1, 3, 3, 2}), rand_t(rng, {1, 5, 5, 2})};
        };
        c.fn = [](const TV& in) {
            return detail::readout(ops::resize_bilinear(in[0], 5, 5), in[1]);
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "resize_bilinear_down";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {1, 6, 6, 2}), rand_t(rng, {1, 3, 3, 2})};
        };
        c.fn = [](const TV& in) {
            return detail::readout(ops::resize_bilinear(in[0], 3, 3), in[1]);
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "slice_last";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {2, 3, 6}), rand_t(rng, {2, 3, 3})};
        };
        c.fn = [](const TV& in) {
            return detail::readout(ops::slice_last(in[0], 1, 3), in[1]);
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "concat_last";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {2, 3}), rand_t(rng, {2, 4}), rand_t(rng, {2, 7})};
        };
        c.fn = [](const TV& in) {
            return detail::readout(ops::concat_last(in[0], in[1]), in[2]);
        };
        cases.push_back(c);
    }

    // ---- normalization ----
    cases.push_back(unary_case("layer_norm",
                               [](const TD& x) { return ops::layer_norm(x); },
                               false, {2, 5, 6}));
    cases.push_back(unary_case("instance_norm",
                               [](const TD& x) { return ops::instance_norm(x); },
                               false, {2, 6, 4}));
    {
        FdCase c;
        c.name = "batch_norm_stats";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {3, 4, 5}), rand_t(rng, {3, 4, 5})};
        };
        c.fn = [](const TV& in) {
            auto [mu, var] = ops::channel_stats(in[0]);
            return detail::readout(ops::batch_norm_with_stats(in[0], mu, var),
                                   in[1]);
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "affine_channels";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {2, 3, 4}), rand_t(rng, {4}), rand_t(rng, {4}),
                      rand_t(rng, {2, 3, 4})};
        };
        c.fn = [](const TV& in) {
            return detail::readout(ops::affine_channels(in[0], in[1], in[2]),
                                   in[3]);
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "mean_tokens";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {2, 6, 4}), rand_t(rng, {2, 4})};
        };
        c.fn = [](const TV& in) {
            return detail::readout(ops::mean_tokens(in[0]), in[1]);
        };
        cases.push_back(c);
    }

    // ---- attention ----
    {
        FdCase c;
        c.name = "global_msa";
        c.make_inputs = [](Rng& rng) {
            return attn_inputs(rng, {2, 16, 6}, 6, 4, 4, {2, 16, 6});
        };
        c.fn = [](const TV& in) {
            auto a = attn_from(in, 6, 2, 4, 4);
            return detail::readout(global_msa(a, in[0], 4, 4).out, in.back());
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "w_msa";
        c.make_inputs = [](Rng& rng) {
            return attn_inputs(rng, {1, 4, 4, 6}, 6, 2, 2, {1, 4, 4, 6});
        };
        c.fn = [](const TV& in) {
            auto a = attn_from(in, 6, 2, 2, 2);
            return detail::readout(w_msa(a, in[0], 2).out, in.back());
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "sw_msa";
        c.make_inputs = [](Rng& rng) {
            return attn_inputs(rng, {1, 8, 8, 4}, 4, 4, 4, {1, 8, 8, 4});
        };
        c.fn = [](const TV& in) {
            auto a = attn_from(in, 4, 2, 4, 4);
            return detail::readout(sw_msa(a, in[0], 4).out, in.back());
        };
        cases.push_back(c);
    }

    // ---- conv pieces ----
    {
        FdCase c;
        c.name = "conv3x3";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {1, 4, 4, 2}), rand_t(rng, {18, 3}, 0.5),
                      rand_t(rng, {3}, 0.5), rand_t(rng, {1, 4, 4, 3})};
        };
        c.fn = [](const TV& in) {
            Conv3x3<double> conv{in[1], in[2], 0.47, 1};
            return detail::readout(conv.forward(in[0]), in[3]);
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "conv3x3_stride2";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {1, 4, 4, 2}), rand_t(rng, {18, 3}, 0.5),
                      rand_t(rng, {3}, 0.5), rand_t(rng, {1, 2, 2, 3})};
        };
        c.fn = [](const TV& in) {
            Conv3x3<double> conv{in[1], in[2], 0.47, 2};
            return detail::readout(conv.forward(in[0]), in[3]);
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "resdown";
        auto slot = std::make_shared<ResDown<double>>();
        auto params = std::make_shared<ParamList<double>>();
        c.make_inputs = [slot, params](Rng& rng) {
            Rng build(rng.raw());
            *slot = make_resdown<double>(2, 3, build);
            *params = ParamList<double>{};
            slot->collect(*params, "rd");
            randomize_params(*params, rng, 0.4);
            TV in;
            in.push_back(rand_t(rng, {1, 4, 4, 2}));
            for (auto& t : params_as_inputs(*params)) in.push_back(t);
            in.push_back(rand_t(rng, {1, 2, 2, 3}));
            return in;
        };
        c.fn = [slot](const TV& in) {
            return detail::readout(slot->forward(in[0]), in.back());
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "torgb";
        auto slot = std::make_shared<ToRgb<double>>();
        auto params = std::make_shared<ParamList<double>>();
        c.make_inputs = [slot, params](Rng& rng) {
            Rng build(rng.raw());
            *slot = make_torgb<double>(4, build);
            *params = ParamList<double>{};
            slot->collect(*params, "rgb");
            randomize_params(*params, rng, 0.4);
            TV in;
            in.push_back(rand_t(rng, {2, 16, 4}));
            for (auto& t : params_as_inputs(*params)) in.push_back(t);
            in.push_back(rand_t(rng, {2, 4, 4, 3}));
            return in;
        };
        c.fn = [slot](const TV& in) {
            return detail::readout(slot->forward(in[0], 4, 4), in.back());
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "embedding";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {3, 4}), rand_t(rng, {3, 4})};
        };
        c.fn = [](const TV& in) {
            Embedding<double> e{in[0]};
            return detail::readout(e.forward({0, 2, 1}), in[1]);
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "linear_eqlr";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {3, 4}), rand_t(rng, {4, 5}, 0.5),
                      rand_t(rng, {5}, 0.5), rand_t(rng, {3, 5})};
        };
        c.fn = [](const TV& in) {
            Linear<double> l{in[1], in[2], 0.1};
            return detail::readout(l.forward(in[0]), in[3]);
        };
        cases.push_back(c);
    }
    {
        FdCase c;
        c.name = "mlp_gelu";
        c.make_inputs = [](Rng& rng) {
            return TV{rand_t(rng, {2, 5, 4}), rand_t(rng, {4, 8}, 0.5),
                      rand_t(rng, {8}, 0.5), rand_t(rng, {8, 4}, 0.5),
                      rand_t(rng, {4}, 0.5), rand_t(rng, {2, 5, 4})};
        };
        c.fn = [](const TV& in) {
            Mlp<double> m{{in[1], in[2], 1.0}, {in[3], in[4], 1.0}, true};
            return detail::readout(m.forward(in[0]), in[5]);
        };
        cases.push_back(c);
    }

    // ---- conditional normalization (all three bases) ----
    for (NormKind base : {NormKind::Layer, NormKind::Instance, NormKind::Batch}) {
        FdCase c;
        c.name = std::string("adanorm_") + base_label(base);
        auto slot = std::make_shared<AdaNorm<double>>();
        auto params = std::make_shared<ParamList<double>>();
        c.make_inputs = [slot, params, base](Rng& rng) {
            *slot = make_adanorm<double>(base, 3, 4);
            *params = ParamList<double>{};
            slot->collect(*params, "ada");
            randomize_params(*params, rng, 0.4);
            TV in;
            in.push_back(rand_t(rng, {3, 5, 4}));
            in.push_back(rand_t(rng, {3, 3}));
            for (auto& t : params_as_inputs(*params)) in.push_back(t);
            in.push_back(rand_t(rng, {3, 5, 4}));
            return in;
        };
        c.fn = [slot](const TV& in) {
            return detail::readout(slot->forward(in[0], in[1], /*training=*/true),
                                   in.back());
        };
        cases.push_back(c);
    }

    // ---- full transformer blocks ----
    {
        BlockConfig cfg;
        cfg.dim = 8;
        cfg.heads = 2;
        cfg.grid_h = cfg.grid_w = 8;
        cfg.kind = AttnKind::ShiftedWindow;
        cfg.window = 4;
        cfg.placement = AdaPlacement::ConfigC;
        cfg.cond_dim = 6;
        cfg.ada_base = NormKind::Instance;
        cfg.use_skip_proj = true;
        cfg.rel_bias = true;
        cases.push_back(block_case("block_config_c_swin", cfg, 2));
    }
    {
        BlockConfig cfg;
        cfg.dim = 6;
        cfg.heads = 2;
        cfg.grid_h = cfg.grid_w = 4;
        cfg.kind = AttnKind::Global;
        cfg.placement = AdaPlacement::ConfigC;  // exercises the post-attention norm
        cfg.cond_dim = 5;
        cfg.ada_base = NormKind::Instance;
        cfg.use_skip_proj = false;
        cfg.rel_bias = false;
        cases.push_back(block_case("block_config_c_global", cfg, 2));
    }
    {
        BlockConfig cfg;
        cfg.dim = 6;
        cfg.heads = 2;
        cfg.grid_h = cfg.grid_w = 4;
        cfg.kind = AttnKind::Window;
        cfg.window = 2;
        cfg.placement = AdaPlacement::None;
        cfg.use_skip_proj = true;
        cfg.rel_bias = true;
        cfg.disc = true;
        cfg.lr_scale = 0.1;
        cases.push_back(block_case("block_disc_window", cfg, 2));
    }
    return cases;
}

}  // namespace strans
