// Acceptance gate: eleven end-to-end checks covering the gradient engine,
// attention semantics, cost accounting, diagnostics, architecture
// invariances, reproducibility, and toy-GAN training behaviour. Each check
// prints exactly one "criterion N: PASS/FAIL (...)" line; the process exits
// nonzero if any check fails. Progress notes go to stderr because the
// training-based checks run for minutes.
#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "strans/attention.hpp"
#include "strans/blocks.hpp"
#include "strans/checkpoint.hpp"
#include "strans/diagnostics.hpp"
#include "strans/gradcheck.hpp"
#include "strans/networks.hpp"
#include "strans/train.hpp"
#include "oracles.hpp"

using namespace strans;

namespace {

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

struct Outcome {
    int id = 0;
    bool pass = false;
    std::string detail;
};

std::vector<Outcome> g_outcomes;

void report(int id, bool pass, const std::string& detail) {
    std::printf("criterion %d: %s (%s)\n", id, pass ? "PASS" : "FAIL",
                detail.c_str());
    std::fflush(stdout);
    g_outcomes.push_back({id, pass, detail});
}

template <class F>
void run_criterion(int id, const char* title, F&& fn) {
    std::fprintf(stderr, "[acceptance] criterion %d: %s\n", id, title);
    try {
        fn();
    } catch (const std::exception& e) {
        report(id, false, std::string("unexpected error: ") + e.what());
    }
}

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string fmtg(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.4g", v);
    return b;
}

const std::string& scratch_root() {
    static const std::string root = [] {
        std::string r = "/tmp/strans_acceptance_" +
                        std::to_string(static_cast<long long>(::getpid()));
        std::filesystem::create_directories(r);
        return r;
    }();
    return root;
}

std::string scratch_dir(const std::string& tag) {
    std::string d = scratch_root() + "/" + tag;
    std::filesystem::create_directories(d);
    return d;
}

// ---------------------------------------------------------------------------
// Shared builders (parameters assigned directly so the oracle reads the same
// numbers through its own layout)
// ---------------------------------------------------------------------------

MultiheadAttention<double> random_attn(Rng& rng, index_t dim, index_t heads,
                                       index_t bh, index_t bw) {
    MultiheadAttention<double> a;
    a.dim = dim;
    a.heads = heads;
    a.qkv.w = Tensor<double>::randn({dim, 3 * dim}, rng, 0.5);
    a.qkv.b = Tensor<double>::randn({3 * dim}, rng, 0.2);
    a.proj.w = Tensor<double>::randn({dim, dim}, rng, 0.5);
    a.proj.b = Tensor<double>::randn({dim}, rng, 0.2);
    if (bh > 0) {
        a.bias_table =
            Tensor<double>::randn({(2 * bh - 1) * (2 * bw - 1), heads}, rng, 0.7);
        a.bias_h = bh;
        a.bias_w = bw;
    }
    return a;
}

MultiheadAttention<double> zeroed_attn(index_t dim, index_t heads) {
    MultiheadAttention<double> a;
    a.dim = dim;
    a.heads = heads;
    a.qkv.w = Tensor<double>(Shape{dim, 3 * dim});
    a.qkv.b = Tensor<double>(Shape{3 * dim});
    a.proj.w = Tensor<double>(Shape{dim, dim});
    a.proj.b = Tensor<double>(Shape{dim});
    return a;
}

oracle::AttnParams oracle_params(const MultiheadAttention<double>& a) {
    oracle::AttnParams p;
    p.dim = a.dim;
    p.heads = a.heads;
    p.qkv_w = a.qkv.w.values();
    p.qkv_b = a.qkv.b.values();
    p.proj_w = a.proj.w.values();
    p.proj_b = a.proj.b.values();
    if (a.bias_table.defined()) {
        p.bias_table = a.bias_table.values();
        p.bias_h = a.bias_h;
        p.bias_w = a.bias_w;
    }
    return p;
}

TapRecord<double> attn_record(const std::string& label, Tensor<double> w,
                              index_t gh, index_t gw, index_t window,
                              index_t heads, bool shifted, bool global) {
    TapRecord<double> r;
    r.label = label;
    r.resolution = gh;
    r.is_attention = true;
    r.weights = std::move(w);
    r.grid_h = gh;
    r.grid_w = gw;
    r.window = window;
    r.heads = heads;
    r.shifted = shifted;
    r.global_attn = global;
    return r;
}

// Per-channel mean / standard deviation over every pixel of an image batch,
// computed from scratch (population variance, raw sample values).
struct ChanStats {
    std::array<double, 3> mean{}, sd{};
};

template <class T>
ChanStats raw_channel_stats(const Tensor<T>& imgs) {
    ChanStats out;
    std::array<double, 3> sum{}, sumsq{};
    const auto& v = imgs.values();
    const index_t n = imgs.numel() / 3;
    for (index_t i = 0; i < imgs.numel(); ++i) {
        const double x = static_cast<double>(v[i]);
        sum[i % 3] += x;
        sumsq[i % 3] += x * x;
    }
    for (int c = 0; c < 3; ++c) {
        out.mean[c] = sum[c] / static_cast<double>(n);
        out.sd[c] = std::sqrt(
            std::max(0.0, sumsq[c] / static_cast<double>(n) -
                              out.mean[c] * out.mean[c]));
    }
    return out;
}

double stats_gap(const ChanStats& a, const ChanStats& b) {
    double g = 0;
    for (int c = 0; c < 3; ++c) {
        g = std::max(g, std::abs(a.mean[c] - b.mean[c]));
        g = std::max(g, std::abs(a.sd[c] - b.sd[c]));
    }
    return g;
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

// ---------------------------------------------------------------------------
// 1. Finite-difference gradient suite
// ---------------------------------------------------------------------------

void criterion1() {
    const double t0 = now_s();
    auto results = run_gradcheck_suite(1234);
    const double dt = now_s() - t0;

    bool all = !results.empty();
    double worst = 0;
    std::string worst_name = "-";
    for (const auto& r : results) {
        all = all && r.pass;
        if (r.max_rel_err > worst) {
            worst = r.max_rel_err;
            worst_name = r.name;
        }
    }
    const bool pass = all && worst < 1e-4 && dt < 120.0;
    std::ostringstream d;
    d << results.size() << " cases over 10 seeds each, worst rel err "
      << fmtg(worst) << " at " << worst_name << ", " << fmtg(dt) << " s";
    report(1, pass, d.str());
}

// ---------------------------------------------------------------------------
// 2. Attention semantics against independent enumeration
// ---------------------------------------------------------------------------

void criterion2() {
    const double t0 = now_s();

    // A full-grid window is the same operator as dense attention.
    double full_vs_dense = 0;
    for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
        Rng rng(seed);
        auto attn = random_attn(rng, 6, 2, 4, 4);
        Tensor<double> img = Tensor<double>::randn({1, 4, 4, 6}, rng);
        auto wa = w_msa(attn, img, 4);
        auto ga = global_msa(attn, reshape(img, {1, 16, 6}), 4, 4);
        for (index_t i = 0; i < img.numel(); ++i)
            full_vs_dense = std::max(
                full_vs_dense,
                std::abs(wa.out.values()[i] - ga.out.values()[i]));
    }

    // Shifted windows against a from-the-definition enumeration.
    double shifted_rel = 0;
    for (int s = 0; s < 20; ++s) {
        Rng rng(100 + static_cast<std::uint64_t>(s));
        auto attn = random_attn(rng, 8, 2, 4, 4);
        Tensor<double> img = Tensor<double>::randn({1, 8, 8, 8}, rng);
        auto got = sw_msa(attn, img, 4);
        auto want = oracle::window_attention(img.values(), 8, 8,
                                             oracle_params(attn), 4, true);
        for (index_t i = 0; i < img.numel(); ++i) {
            const double rel = std::abs(got.out.values()[i] - want[i]) /
                               std::max(1.0, std::abs(want[i]));
            shifted_rel = std::max(shifted_rel, rel);
        }
    }

    const double dt = now_s() - t0;
    const bool pass = full_vs_dense <= 1e-12 && shifted_rel <= 1e-10 &&
                      dt < 60.0;
    std::ostringstream d;
    d << "full-window vs dense max |diff| " << fmtg(full_vs_dense)
      << "; shifted vs enumeration max rel err " << fmtg(shifted_rel) << " over "
      << "20 seeds; " << fmtg(dt) << " s";
    report(2, pass, d.str());
}

// ---------------------------------------------------------------------------
// 3. Attention cost accounting: scaling law and measured operation counts
// ---------------------------------------------------------------------------

void criterion3() {
    bool pass = true;
    // Doubling the grid side quadruples windowed score work but multiplies
    // dense score work by sixteen.
    for (auto [h, w] : std::vector<std::pair<index_t, index_t>>{{8, 8},
                                                                {12, 20}}) {
        pass = pass && attention_op_count(true, 2 * h, 2 * w, 4, 3, 8) ==
                           4 * attention_op_count(true, h, w, 4, 3, 8);
        pass = pass && attention_op_count(false, 2 * h, 2 * w, 0, 3, 8) ==
                           16 * attention_op_count(false, h, w, 0, 3, 8);
    }

    // The instrumented kernels must agree with the closed-form count exactly.
    std::ostringstream meas;
    for (index_t H : {index_t(16), index_t(32)}) {
        Rng rng(static_cast<std::uint64_t>(7 + H));
        NoGradGuard ng;
        auto attn = random_attn(rng, 8, 2, 4, 4);
        Tensor<double> img = Tensor<double>::randn({2, H, H, 8}, rng);
        reset_attention_score_macs();
        (void)w_msa(attn, img, 4);
        const std::int64_t got_w = attention_score_macs();
        const std::int64_t want_w = 2 * attention_op_count(true, H, H, 4, 2, 4);

        auto dense = random_attn(rng, 8, 2, 0, 0);
        Tensor<double> tok = Tensor<double>::randn({2, H * H, 8}, rng);
        reset_attention_score_macs();
        (void)global_msa(dense, tok, H, H);
        const std::int64_t got_g = attention_score_macs();
        const std::int64_t want_g = 2 * attention_op_count(false, H, H, 0, 2, 4);

        pass = pass && got_w == want_w && got_g == want_g;
        meas << " " << H << "px windowed " << got_w << "/" << want_w
             << " dense " << got_g << "/" << want_g << ";";
    }
    report(3, pass, "4x/16x scaling identities exact; measured/predicted:" +
                        meas.str());
}

// ---------------------------------------------------------------------------
// 4. Window isolation and cross-window flow through the shifted pass
// ---------------------------------------------------------------------------

void criterion4() {
    Rng rng(71);
    auto attn1 = random_attn(rng, 4, 2, 4, 4);
    auto attn2 = random_attn(rng, 4, 2, 4, 4);
    auto one_hot = [] {
        Tensor<double> m(Shape{1, 8, 8, 4});
        m.raw()[((3 * 8) + 3) * 4 + 0] = 1.0;  // read output pixel (3,3) ch 0
        return m;
    };

    // One windowed pass: pixels outside the query's window get exactly zero
    // gradient.
    Tensor<double> x1 = Tensor<double>::randn({1, 8, 8, 4}, rng);
    x1.set_requires_grad(true);
    backward(sum_all(mul(w_msa(attn1, x1, 4).out, one_hot())));
    const auto& g1 = x1.grad();
    double cross_abs = 0, within_abs = 0;
    for (index_t r = 0; r < 8; ++r)
        for (index_t c = 0; c < 8; ++c)
            for (index_t ch = 0; ch < 4; ++ch) {
                const double g = std::abs(g1[((r * 8) + c) * 4 + ch]);
                if (r / 4 == 0 && c / 4 == 0)
                    within_abs = std::max(within_abs, g);
                else
                    cross_abs = std::max(cross_abs, g);
            }

    // Adding the shifted pass lets the same readout see the opposite window.
    Tensor<double> x2 = Tensor<double>::randn({1, 8, 8, 4}, rng);
    x2.set_requires_grad(true);
    Tensor<double> h = w_msa(attn1, x2, 4).out;
    backward(sum_all(mul(sw_msa(attn2, h, 4).out, one_hot())));
    const auto& g2 = x2.grad();
    double cross_two = 0;
    for (index_t ch = 0; ch < 4; ++ch)
        cross_two = std::max(cross_two, std::abs(g2[((5 * 8) + 5) * 4 + ch]));

    const bool pass = cross_abs == 0.0 && within_abs > 0.0 && cross_two > 1e-8;
    std::ostringstream d;
    d << "single pass: max out-of-window |grad| " << fmtg(cross_abs)
      << " (exact zero), in-window " << fmtg(within_abs)
      << "; with shifted pass the cross-window probe reaches "
      << fmtg(cross_two);
    report(4, pass, d.str());
}

// ---------------------------------------------------------------------------
// 5. Attention-distance diagnostics: locality bound and uniform-attention mean
// ---------------------------------------------------------------------------

void criterion5() {
    const double bound = 3.0 * std::sqrt(2.0);

    // Live windowed layers of a generator stay inside the window diagonal.
    GeneratorSpec spec;
    spec.latent_dim = 16;
    spec.target = 32;
    spec.channels = 16;
    spec.heads = 4;
    spec.window = 4;
    Generator<double> gen = build_strans_g<double>(spec, 5);
    TapSink<double> sink;
    sink.capture_weights = true;
    {
        NoGradGuard ng;
        Rng rng(9);
        (void)gen.forward(Tensor<double>::randn({2, 16}, rng), {}, false, &sink);
    }
    index_t windowed = 0, shifted = 0;
    double worst = 0;
    bool ok = true;
    for (const auto& rec : sink.records) {
        if (!rec.is_attention || rec.global_attn) continue;
        ++windowed;
        if (rec.shifted) ++shifted;
        auto rep = attention_distance(rec);
        ok = ok && rep.window == 4 &&
             std::abs(rep.max_distance - bound) <= 1e-12;
        worst = std::max(worst, rep.pooled.max_sample);
        for (const auto& hh : rep.per_head)
            worst = std::max(worst, hh.max_sample);
    }
    ok = ok && windowed == 4 && shifted == 2 && worst <= bound * (1 + 1e-12);

    // Uniform attention over a 4x4 grid lands on the enumerated mean
    // pairwise distance.
    auto attn = zeroed_attn(4, 2);
    Rng rng(15);
    Tensor<double> tok =
        reshape(Tensor<double>::randn({1, 4, 4, 4}, rng), {1, 16, 4});
    auto ao = global_msa(attn, tok, 4, 4, /*capture=*/true);
    auto rep = attention_distance(
        attn_record("uniform", ao.weights, 4, 4, 0, 2, false, true));
    const double want = oracle::uniform_grid_mean_distance(4, 4);
    const double mean_err = std::abs(rep.pooled.mean() - want);
    ok = ok && mean_err <= 1e-10 && rep.pooled.total == 32;

    std::ostringstream d;
    d << windowed << " windowed layers (" << shifted
      << " shifted), worst per-query distance " << fmtg(worst) << " <= "
      << fmtg(bound) << "; uniform-attention mean off by " << fmtg(mean_err);
    report(5, ok, d.str());
}

// ---------------------------------------------------------------------------
// 6. Headline 64px generator: closed-form parameter census and forward pass
// ---------------------------------------------------------------------------

index_t lin_count(index_t in, index_t out) { return in * out + out; }

index_t block_count(index_t C, index_t heads, index_t M, bool rel_bias) {
    index_t n = lin_count(C, 3 * C) + lin_count(C, C)    // qkv + output proj
                + lin_count(C, 2 * C) + lin_count(2 * C, C)  // 2x-wide MLP
                + 4 * C;                                 // two affine norms
    if (rel_bias) n += (2 * M - 1) * (2 * M - 1) * heads;
    return n;
}

index_t torgb_count(index_t C) {
    return 2 * C + lin_count(C, 2 * C) + lin_count(2 * C, 3) + lin_count(C, 3);
}

void criterion6() {
    const double t0 = now_s();
    const index_t L = 512, C = 512, Cq = C / 4, H = 4, M = 4;
    index_t closed = lin_count(L, 16 * C) + 16 * C;  // latent proj + pos table
    closed += 4 * block_count(C, H, M, false);  // 4px and 8px stages, dense
    closed += 4 * block_count(C, H, M, true);   // 16px and 32px, windowed
    closed += 2 * block_count(Cq, H, M, true);  // 64px at quarter width
    closed += torgb_count(Cq);

    GeneratorSpec spec;
    spec.latent_dim = 512;
    spec.target = 64;
    spec.channels = 512;
    spec.heads = 4;
    spec.window = 4;
    Generator<float> gen = build_strans_g<float>(spec, 7);

    index_t census_total = 0;
    for (const auto& row : census(gen.params)) census_total += row.count;

    bool finite = true;
    Shape got_shape;
    {
        NoGradGuard ng;
        Rng rng(40);
        Tensor<float> img =
            gen.forward(Tensor<float>::randn({1, 512}, rng), {});
        got_shape = img.shape();
        for (float v : img.values()) finite = finite && std::isfinite(v);
    }
    const double dt = now_s() - t0;

    const bool pass = closed == 21333534 && census_total == closed &&
                      gen.params.total_count() == closed && finite &&
                      got_shape == Shape{1, 64, 64, 3};
    std::ostringstream d;
    d << "closed-form " << closed << " == census " << census_total
      << " == param list " << gen.params.total_count()
      << "; forward gives finite [1,64,64,3]; " << fmtg(dt) << " s";
    report(6, pass, d.str());
}

// ---------------------------------------------------------------------------
// 7. Reparameterization invariances
// ---------------------------------------------------------------------------

void criterion7() {
    Rng rng(21);
    bool pass = true;
    std::ostringstream d;

    // (a) Halving the stored parameters while doubling the runtime multiplier
    // leaves the map unchanged.
    {
        Linear<double> base;
        base.w = Tensor<double>::randn({8, 8}, rng);
        base.b = Tensor<double>::randn({8}, rng, 0.2);
        base.runtime_scale = 1.0;
        Linear<double> half = base;
        half.w = Tensor<double>(Shape{8, 8}, base.w.values());
        for (auto& v : half.w.raw()) v *= 0.5;
        half.b = Tensor<double>(Shape{8}, base.b.values());
        for (auto& v : half.b.raw()) v *= 0.5;
        half.runtime_scale = 2.0;
        Tensor<double> x = Tensor<double>::randn({4, 8}, rng);
        double diff = 0;
        const auto ya = base.forward(x), yb = half.forward(x);
        for (index_t i = 0; i < ya.numel(); ++i)
            diff = std::max(diff, std::abs(ya.values()[i] - yb.values()[i]));
        pass = pass && diff <= 1e-14;
        d << "scale invariance max |diff| " << fmtg(diff);
    }

    // (b) Identity-initialized residual projections reproduce the plain
    // shortcut bitwise.
    {
        BlockConfig bc;
        bc.dim = 8;
        bc.heads = 2;
        bc.grid_h = bc.grid_w = 4;
        bc.kind = AttnKind::Window;
        bc.window = 2;
        BlockConfig bc_skip = bc;
        bc_skip.use_skip_proj = true;
        Rng r1(31), r2(31);
        auto plain = make_transformer_block<double>(bc, r1);
        auto skip = make_transformer_block<double>(bc_skip, r2);
        Rng rx(32);
        Tensor<double> h = Tensor<double>::randn({2, 16, 8}, rx);
        const bool same = plain.forward(h, {}, false, nullptr).values() ==
                          skip.forward(h, {}, false, nullptr).values();
        pass = pass && same;
        d << "; projected vs plain shortcut " << (same ? "bitwise equal"
                                                       : "DIFFER");
    }

    // (c) Conditional norms start as identity modulation over every base.
    {
        double worst = 0;
        for (NormKind base :
             {NormKind::Layer, NormKind::Instance, NormKind::Batch}) {
            auto ada = make_adanorm<double>(base, 6, 8);
            Rng rx(33);
            Tensor<double> x = Tensor<double>::randn({4, 16, 8}, rx);
            Tensor<double> cond = Tensor<double>::randn({4, 6}, rx);
            Tensor<double> got = ada.forward(x, cond, true);
            Tensor<double> ref;
            if (base == NormKind::Layer) {
                ref = ops::layer_norm(x);
            } else if (base == NormKind::Instance) {
                ref = ops::instance_norm(x);
            } else {
                auto [mu, var] = ops::channel_stats(x);
                ref = ops::batch_norm_with_stats(x, mu, var);
            }
            for (index_t i = 0; i < x.numel(); ++i)
                worst = std::max(
                    worst, std::abs(got.values()[i] - ref.values()[i]));
        }
        pass = pass && worst <= 1e-12;
        d << "; conditional-norm identity max |diff| " << fmtg(worst);
    }

    // (d) On windowed blocks the two trunk-conditioning placements coincide.
    {
        bool same = true;
        for (AttnKind kind : {AttnKind::Window, AttnKind::ShiftedWindow}) {
            BlockConfig bc;
            bc.dim = 8;
            bc.heads = 2;
            bc.grid_h = bc.grid_w = 4;
            bc.kind = kind;
            bc.window = 2;
            bc.cond_dim = 6;
            bc.ada_base = NormKind::Instance;
            bc.placement = AdaPlacement::ConfigB;
            BlockConfig cc = bc;
            cc.placement = AdaPlacement::ConfigC;
            Rng r1(34), r2(34);
            auto blk_b = make_transformer_block<double>(bc, r1);
            auto blk_c = make_transformer_block<double>(cc, r2);
            Rng rx(35);
            Tensor<double> h = Tensor<double>::randn({2, 16, 8}, rx);
            Tensor<double> cond = Tensor<double>::randn({2, 6}, rx);
            same = same && blk_b.forward(h, cond, false, nullptr).values() ==
                               blk_c.forward(h, cond, false, nullptr).values();
        }
        pass = pass && same;
        d << "; windowed trunk placements "
          << (same ? "bitwise equal" : "DIFFER");
    }

    report(7, pass, d.str());
}

// ---------------------------------------------------------------------------
// 8. Norm-ratio trace and artifact round-trips
// ---------------------------------------------------------------------------

void criterion8() {
    bool pass = true;
    std::ostringstream d;

    // Synthetic branches: scaling the branch by a divides the ratio by a.
    {
        Rng rng(55);
        Tensor<double> x = Tensor<double>::randn({2, 16, 8}, rng);
        TapSink<double> sink;
        for (double alpha : {0.5, 1.0, 2.0}) {
            TapRecord<double> r;
            r.label = "a" + fmtg(alpha);
            r.resolution = 16;
            r.shortcut_norm = ops::l2_norm(x);
            r.branch_norm = ops::l2_norm(scale(x, alpha));
            sink.records.push_back(std::move(r));
        }
        auto trace = norm_ratio_trace(sink);
        double worst = 0;
        const double want[] = {2.0, 1.0, 0.5};
        for (size_t i = 0; i < trace.records.size(); ++i) {
            worst = std::max(worst,
                             std::abs(trace.records[i].ratio - want[i]));
            pass = pass && !trace.records[i].flagged;
        }
        pass = pass && trace.records.size() == 3 && worst <= 1e-12;
        d << "synthetic ratio max |err| " << fmtg(worst);
    }

    // Round-trips over artifacts from a live tapped forward.
    {
        GeneratorSpec spec;
        spec.latent_dim = 8;
        spec.target = 16;
        spec.channels = 8;
        spec.heads = 2;
        spec.window = 4;
        Generator<double> gen = build_strans_g<double>(spec, 6);
        TapSink<double> sink;
        sink.capture_weights = true;
        {
            NoGradGuard ng;
            Rng rng(14);
            (void)gen.forward(Tensor<double>::randn({2, 8}, rng), {}, false,
                              &sink);
        }
        auto trace = norm_ratio_trace(sink);
        const std::string csv = trace_to_csv(trace);
        const bool trace_rt = trace_to_csv(trace_from_csv(csv)) == csv &&
                              trace.records.size() == 12;
        pass = pass && trace_rt;
        d << "; trace CSV round-trip "
          << (trace_rt ? "lossless" : "LOSSY");

        const TapRecord<double>* wrec = nullptr;
        for (const auto& rec : sink.records)
            if (rec.is_attention && !rec.global_attn && !wrec) wrec = &rec;
        pass = pass && wrec != nullptr;
        if (wrec) {
            auto rep = attention_distance(*wrec);
            auto rows = distance_from_csv(distance_to_csv({rep}));
            bool dist_rt =
                rows.size() == static_cast<size_t>((1 + rep.heads) * 32);
            for (index_t b = 0; b < 32 && dist_rt; ++b) {
                const auto& row = rows[static_cast<size_t>(b)];
                dist_rt = row.head == -1 && row.bin_index == b &&
                          row.count == rep.pooled.counts[b] &&
                          row.bin_lo == rep.pooled.edges[b] &&
                          row.bin_hi == rep.pooled.edges[b + 1];
            }
            pass = pass && dist_rt;
            d << "; histogram CSV " << (dist_rt ? "lossless" : "LOSSY");

            auto lines = [](const std::string& s) {
                std::vector<std::string> out;
                std::istringstream in(s);
                for (std::string l; std::getline(in, l);) out.push_back(l);
                return out;
            }(distance_summary_to_csv({rep}));
            bool sum_ok = lines.size() == static_cast<size_t>(2 + rep.heads);
            if (sum_ok) {
                auto f = split_commas(lines[1]);
                sum_ok = f.size() == 5 && f[0] == rep.label && f[1] == "-1" &&
                         std::stoll(f[2]) == rep.pooled.total &&
                         std::stod(f[3]) == rep.pooled.mean() &&
                         std::stod(f[4]) == rep.pooled.max_sample;
            }
            pass = pass && sum_ok;
            d << "; summary CSV " << (sum_ok ? "exact" : "WRONG");

            const std::string js = argmax_to_json(argmax_attention_map(*wrec));
            const bool js_rt = argmax_to_json(argmax_from_json(js)) == js;
            pass = pass && js_rt;
            d << "; strongest-key JSON round-trip "
              << (js_rt ? "lossless" : "LOSSY");
        }
    }
    report(8, pass, d.str());
}

// ---------------------------------------------------------------------------
// 11. Bitwise reproducibility and checkpoint resume
// ---------------------------------------------------------------------------

void criterion11() {
    TrainConfig base;
    base.resolution = 16;
    base.latent = 8;
    base.channels = 8;
    base.d_channels = 8;
    base.heads = 2;
    base.window = 4;
    base.precision = "f64";
    base.batch = 2;
    base.steps = 6;
    base.checkpoint_every = 3;
    base.seed = 101;

    auto run_into = [&](const std::string& dir) {
        TrainConfig cfg = base;
        cfg.out_dir = dir;
        auto tr = Trainer<double>::make(cfg);
        (void)run_training(tr);
        return dir;
    };
    const std::string a = run_into(scratch_dir("c11_a"));
    const std::string b = run_into(scratch_dir("c11_b"));

    bool same = true;
    for (const char* tag : {"000000", "000003", "000006"})
        for (const char* kind : {"ckpt_", "samples_"}) {
            const std::string ext = kind[0] == 'c' ? ".stck" : ".png";
            same = same &&
                   read_binary_file(a + "/" + kind + tag + ext) ==
                       read_binary_file(b + "/" + kind + tag + ext);
        }

    // Resume from the midpoint and land on the same bytes.
    const std::string c = scratch_dir("c11_resume");
    auto ck = load_checkpoint<double>(a + "/ckpt_000003.stck");
    TrainConfig run = base;
    run.out_dir = c;
    auto tr = Trainer<double>::from_checkpoint(ck, &run);
    (void)run_training(tr);
    const bool resumed =
        read_binary_file(c + "/ckpt_000006.stck") ==
            read_binary_file(a + "/ckpt_000006.stck") &&
        read_binary_file(c + "/samples_000006.png") ==
            read_binary_file(a + "/samples_000006.png");

    std::ostringstream d;
    d << "two fresh runs: 3 checkpoint+sample pairs "
      << (same ? "byte-identical" : "DIFFER") << "; resumed run "
      << (resumed ? "reproduces the final bytes" : "DIVERGES");
    report(11, same && resumed, d.str());
}

// ---------------------------------------------------------------------------
// 9 & 10. Toy-GAN training runs
// ---------------------------------------------------------------------------

constexpr double kStatTol = 0.15;
constexpr std::int64_t kAblationCap = 500;   // steps before giving up
constexpr std::int64_t kAblationEvery = 25;  // stats cadence when early-stopping
constexpr std::int64_t kConditionalSteps = 500;

TrainConfig toy_config(std::uint64_t seed, const std::string& out,
                       std::int64_t steps) {
    TrainConfig c;
    c.resolution = 32;
    c.latent = 32;
    c.channels = 16;
    c.d_channels = 16;
    c.heads = 4;
    c.window = 4;
    c.precision = "f32";
    c.batch = 8;
    c.steps = steps;
    c.checkpoint_every = steps > 0 ? steps : 1;
    c.seed = seed;
    c.out_dir = out;
    return c;  // remaining knobs keep their training defaults
}

struct ToyRun {
    bool diverged = false;
    std::int64_t hit = -1;  // first observed step within tolerance
    double elapsed = 0;
    double final_gap = 1e9;
};

ToyRun run_toy(const TrainConfig& cfg, std::int64_t eval_every,
               bool stop_at_hit, const char* tag) {
    ToyRun o;
    auto tr = Trainer<float>::make(cfg);
    std::vector<index_t> idx(256);
    std::iota(idx.begin(), idx.end(), 0);
    const ChanStats data = raw_channel_stats(tr.data.batch(idx, nullptr));

    const double t0 = now_s();
    auto cb = [&](const Trainer<float>& t, const StepResult&) {
        if (t.step % eval_every != 0) return false;
        const double gap = stats_gap(raw_channel_stats(tr.sample_images(32)),
                                     data);
        const bool ok = gap <= kStatTol;
        if (ok && o.hit < 0) o.hit = t.step;
        if (t.step % 200 == 0)
            std::fprintf(stderr, "[acceptance]   %s step %lld, stat gap %s\n",
                         tag, static_cast<long long>(t.step),
                         fmtg(gap).c_str());
        return stop_at_hit && ok;
    };
    try {
        (void)run_training<float>(tr, cb);
    } catch (const Error&) {
        o.diverged = true;
    }
    o.elapsed = now_s() - t0;
    if (!o.diverged)
        o.final_gap = stats_gap(raw_channel_stats(tr.sample_images(32)), data);
    return o;
}

void criterion9() {
    // Headline run: full length, fixed seed, stats must land within 0.15 of
    // the dataset's per-channel mean and spread.
    TrainConfig cfg = toy_config(7, scratch_dir("c9_headline"), 2000);
    ToyRun head = run_toy(cfg, 50, false, "headline seed 7");
    const bool head_ok = !head.diverged && head.final_gap <= kStatTol &&
                         head.elapsed < 1800.0;

    std::ostringstream d;
    d << "headline: " << (head.diverged ? "DIVERGED" : "no divergence")
      << ", final stat gap " << fmtg(head.final_gap) << " (tol " << kStatTol
      << "), first within at step "
      << (head.hit < 0 ? std::string("never") : std::to_string(head.hit))
      << ", " << fmtg(head.elapsed) << " s";

    if (head_ok) {
        // Soft comparison: do projected critic shortcuts reach the stats
        // threshold at least as fast as plain ones?
        int faster = 0;
        std::ostringstream ab;
        for (std::uint64_t seed : {7ull, 8ull, 9ull}) {
            std::int64_t steps_for[2] = {0, 0};
            for (int skip = 1; skip >= 0; --skip) {
                char tag[64];
                std::snprintf(tag, sizeof tag, "ablation seed %llu %s",
                              static_cast<unsigned long long>(seed),
                              skip ? "projected" : "plain");
                TrainConfig ac = toy_config(
                    seed,
                    scratch_dir("c9_ab_" + std::to_string(seed) +
                                (skip ? "_proj" : "_plain")),
                    kAblationCap);
                ac.d_skip_proj = skip != 0;
                ToyRun r = run_toy(ac, kAblationEvery, true, tag);
                steps_for[skip] = (r.diverged || r.hit < 0) ? kAblationCap + 1
                                                            : r.hit;
            }
            if (steps_for[1] <= steps_for[0]) ++faster;
            ab << " seed " << seed << ": " << steps_for[1] << " vs "
               << steps_for[0] << ";";
        }
        d << "; soft shortcut-projection comparison (projected vs plain steps"
          << " to threshold):" << ab.str() << " faster-or-equal in " << faster
          << "/3 seeds" << (faster >= 2 ? "" : " [soft miss]");
    } else {
        d << "; ablation comparison skipped";
    }
    report(9, head_ok, d.str());
}

void criterion10() {
    auto agreement = [&](std::uint64_t seed, AdaPlacement place,
                         const char* tag) {
        TrainConfig cfg = toy_config(
            seed, scratch_dir(std::string("c10_") + tag), kConditionalSteps);
        cfg.classes = 2;
        cfg.placement = place;
        cfg.ada_base = NormKind::Instance;
        auto tr = Trainer<float>::make(cfg);
        const index_t px = 32 * 32;
        auto measure = [&]() {
            Tensor<float> imgs = tr.sample_images(64);
            int ok = 0;
            for (index_t i = 0; i < 64; ++i)
                if (oracle::classify_red_blue(
                        imgs.values().data() + i * px * 3, px) == i % 2)
                    ++ok;
            return ok / 64.0;
        };
        auto cb = [&](const Trainer<float>& t, const StepResult&) {
            if (t.step % 200 == 0)
                std::fprintf(stderr, "[acceptance]   %s step %lld, agreement %s\n",
                             tag, static_cast<long long>(t.step),
                             fmtg(measure()).c_str());
            return false;
        };
        try {
            (void)run_training<float>(tr, cb);
        } catch (const Error&) {
            return 0.0;
        }
        return measure();
    };

    double full[3], entry[3];
    for (int s = 0; s < 3; ++s) {
        const auto seed = static_cast<std::uint64_t>(1 + s);
        char tag[32];
        std::snprintf(tag, sizeof tag, "c_seed%d", 1 + s);
        full[s] = agreement(seed, AdaPlacement::ConfigC, tag);
        std::snprintf(tag, sizeof tag, "a_seed%d", 1 + s);
        entry[s] = agreement(seed, AdaPlacement::ConfigA, tag);
    }

    int strong = 0, ordered = 0;
    for (int s = 0; s < 3; ++s) {
        if (full[s] > 0.80) ++strong;
        if (entry[s] < full[s]) ++ordered;
    }
    const bool pass = strong >= 2;
    std::ostringstream d;
    d << "all-norm conditioning agreement " << fmtg(full[0]) << "/"
      << fmtg(full[1]) << "/" << fmtg(full[2]) << " (>0.80 in " << strong
      << "/3 seeds); entry-only conditioning " << fmtg(entry[0]) << "/"
      << fmtg(entry[1]) << "/" << fmtg(entry[2]) << " (strictly lower in "
      << ordered << "/3" << (ordered >= 2 ? ", soft ok)" : ", soft miss)");
    report(10, pass, d.str());
}

}  // namespace

int main() {
    tune_allocator();
    const double t0 = now_s();

    run_criterion(1, "finite-difference gradients", criterion1);
    run_criterion(2, "attention vs enumeration", criterion2);
    run_criterion(3, "attention cost accounting", criterion3);
    run_criterion(4, "cross-window gradient flow", criterion4);
    run_criterion(5, "attention-distance diagnostics", criterion5);
    run_criterion(6, "headline generator census", criterion6);
    run_criterion(7, "reparameterization invariances", criterion7);
    run_criterion(8, "norm-ratio trace and round-trips", criterion8);
    run_criterion(11, "reproducibility and resume", criterion11);
    run_criterion(9, "toy training headline", criterion9);
    run_criterion(10, "class-conditional training", criterion10);

    int passed = 0;
    for (const auto& o : g_outcomes) passed += o.pass ? 1 : 0;
    std::printf("acceptance: %d/%zu criteria passed in %.0f s\n", passed,
                g_outcomes.size(), now_s() - t0);
    return passed == static_cast<int>(g_outcomes.size()) ? 0 : 1;
}
