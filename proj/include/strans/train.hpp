#pragma once

#include <array>
#include <filesystem>
#include <functional>

#include "strans/checkpoint.hpp"
#include "strans/dataset.hpp"
#include "strans/diagnostics.hpp"
#include "strans/image_io.hpp"
#include "strans/inifile.hpp"

// Adversarial training at desk scale: non-saturating logistic losses with a
// lazy R1 gradient penalty on real images, separate Adam optimizers per
// network, and strictly ordered RNG consumption so that a run is a pure
// function of (config, seed) and resuming from a checkpoint continues the
// exact same trajectory.

namespace strans {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

struct TrainConfig {
    // model
    index_t resolution = 32;
    index_t latent = 512;
    index_t channels = 128;
    index_t d_channels = 256;
    index_t heads = 4;
    index_t window = 4;
    bool attention_global = false;  // dense-attention generator baseline
    AdaPlacement placement = AdaPlacement::None;
    NormKind ada_base = NormKind::Instance;
    index_t classes = 0;  // 0 = unconditional
    bool g_skip_proj = false;
    bool d_skip_proj = true;
    bool global_rel_bias = false;
    std::string precision = "f64";  // f32 | f64

    // train
    double lr_g = 0.0001;
    double lr_d = 0.002;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double eps = 1e-8;
    double eqlr_scale = 0.1;
    double r1_gamma = 1.0;
    index_t r1_every = 16;
    index_t batch = 16;
    index_t steps = 2000;
    std::uint64_t seed = 1;
    index_t checkpoint_every = 500;
    std::string out_dir = "out";
    bool force_memory = false;

    // data
    DatasetKind data_kind = DatasetKind::Shapes;
    std::string data_path;
};

namespace detail {

inline std::string placement_name(AdaPlacement p) {
    switch (p) {
        case AdaPlacement::None: return "none";
        case AdaPlacement::ConfigA: return "a";
        case AdaPlacement::ConfigB: return "b";
        case AdaPlacement::ConfigC: return "c";
    }
    return "none";
}

inline AdaPlacement placement_from(const std::string& s) {
    if (s == "none") return AdaPlacement::None;
    if (s == "a") return AdaPlacement::ConfigA;
    if (s == "b") return AdaPlacement::ConfigB;
    if (s == "c") return AdaPlacement::ConfigC;
    ST_CHECK(false, "placement must be none|a|b|c, got '" << s << "'");
    return AdaPlacement::None;
}

inline std::string norm_name(NormKind n) {
    switch (n) {
        case NormKind::Layer: return "layer";
        case NormKind::Instance: return "instance";
        case NormKind::Batch: return "batch";
    }
    return "layer";
}

inline NormKind norm_from(const std::string& s) {
    if (s == "layer") return NormKind::Layer;
    if (s == "instance") return NormKind::Instance;
    if (s == "batch") return NormKind::Batch;
    ST_CHECK(false, "ada_base must be layer|instance|batch, got '" << s << "'");
    return NormKind::Layer;
}

inline std::string dataset_name(DatasetKind k) {
    switch (k) {
        case DatasetKind::Shapes: return "shapes";
        case DatasetKind::GaussTexture: return "gauss_texture";
        case DatasetKind::ImageDir: return "image_dir";
    }
    return "shapes";
}

inline DatasetKind dataset_from(const std::string& s) {
    if (s == "shapes") return DatasetKind::Shapes;
    if (s == "gauss_texture") return DatasetKind::GaussTexture;
    if (s == "image_dir") return DatasetKind::ImageDir;
    ST_CHECK(false, "data kind must be shapes|gauss_texture|image_dir, got '"
                        << s << "'");
    return DatasetKind::Shapes;
}

inline void reject_unknown_keys(const IniFile& ini) {
    static const std::map<std::string, std::vector<std::string>> known = {
        {"model",
         {"resolution", "latent", "channels", "d_channels", "heads", "window",
          "attention", "placement", "ada_base", "classes", "g_skip_proj",
          "d_skip_proj", "global_rel_bias", "precision"}},
        {"train",
         {"lr_g", "lr_d", "beta1", "beta2", "eps", "eqlr_scale", "r1_gamma",
          "r1_every", "batch", "steps", "seed", "checkpoint_every", "out"}},
        {"data", {"kind", "path"}},
    };
    for (const auto& [section, keys] : ini.sections()) {
        auto it = known.find(section);
        ST_CHECK(it != known.end(), "config: unknown section [" << section << "]");
        for (const auto& [key, value] : keys) {
            bool ok = false;
            for (const auto& k : it->second) ok = ok || k == key;
            ST_CHECK(ok, "config: unknown key '" << key << "' in [" << section
                                                 << "]");
        }
    }
}

}  // namespace detail

inline void validate_train_config(const TrainConfig& c) {
    ST_CHECK(c.lr_g > 0 && c.lr_d > 0, "learning rates must be positive");
    ST_CHECK(c.beta1 >= 0 && c.beta1 < 1 && c.beta2 >= 0 && c.beta2 < 1,
             "adam betas must lie in [0,1)");
    ST_CHECK(c.batch >= 1, "batch size must be >= 1");
    ST_CHECK(c.steps >= 0, "steps must be >= 0");
    ST_CHECK(c.r1_every >= 1, "r1_every must be >= 1");
    ST_CHECK(c.r1_gamma >= 0, "r1_gamma must be >= 0");
    ST_CHECK(c.eqlr_scale > 0, "eqlr_scale must be positive");
    ST_CHECK(c.checkpoint_every >= 1, "checkpoint_every must be >= 1");
    ST_CHECK(c.precision == "f32" || c.precision == "f64",
             "precision must be f32 or f64, got '" << c.precision << "'");
    ST_CHECK((c.classes == 0) == (c.placement == AdaPlacement::None),
             "conditional training needs both classes >= 2 and a placement; "
             "unconditional needs neither");
    ST_CHECK(c.classes == 0 || c.classes >= 2,
             "conditional training needs at least 2 classes");
    ST_CHECK(c.data_kind != DatasetKind::ImageDir || !c.data_path.empty(),
             "image_dir dataset needs [data] path");
}

inline TrainConfig train_config_from_ini(const IniFile& ini) {
    detail::reject_unknown_keys(ini);
    TrainConfig c;
    c.resolution = ini.get_int("model", "resolution", c.resolution);
    c.latent = ini.get_int("model", "latent", c.latent);
    c.channels = ini.get_int("model", "channels", c.channels);
    c.d_channels = ini.get_int("model", "d_channels", c.d_channels);
    c.heads = ini.get_int("model", "heads", c.heads);
    c.window = ini.get_int("model", "window", c.window);
    const std::string attn = ini.get_str("model", "attention", "swin");
    ST_CHECK(attn == "swin" || attn == "global",
             "attention must be swin|global, got '" << attn << "'");
    c.attention_global = attn == "global";
    c.placement = detail::placement_from(ini.get_str("model", "placement", "none"));
    c.ada_base = detail::norm_from(ini.get_str("model", "ada_base", "instance"));
    c.classes = ini.get_int("model", "classes", c.classes);
    c.g_skip_proj = ini.get_bool("model", "g_skip_proj", c.g_skip_proj);
    c.d_skip_proj = ini.get_bool("model", "d_skip_proj", c.d_skip_proj);
    c.global_rel_bias = ini.get_bool("model", "global_rel_bias", c.global_rel_bias);
    c.precision = ini.get_str("model", "precision", c.precision);

    c.lr_g = ini.get_double("train", "lr_g", c.lr_g);
    c.lr_d = ini.get_double("train", "lr_d", c.lr_d);
    c.beta1 = ini.get_double("train", "beta1", c.beta1);
    c.beta2 = ini.get_double("train", "beta2", c.beta2);
    c.eps = ini.get_double("train", "eps", c.eps);
    c.eqlr_scale = ini.get_double("train", "eqlr_scale", c.eqlr_scale);
    c.r1_gamma = ini.get_double("train", "r1_gamma", c.r1_gamma);
    c.r1_every = ini.get_int("train", "r1_every", c.r1_every);
    c.batch = ini.get_int("train", "batch", c.batch);
    c.steps = ini.get_int("train", "steps", c.steps);
    c.seed = static_cast<std::uint64_t>(ini.get_int("train", "seed", c.seed));
    c.checkpoint_every = ini.get_int("train", "checkpoint_every", c.checkpoint_every);
    c.out_dir = ini.get_str("train", "out", c.out_dir);

    c.data_kind = detail::dataset_from(ini.get_str("data", "kind", "shapes"));
    c.data_path = ini.get_str("data", "path", "");
    return c;
}

/// Canonical run-identity text: everything that defines the trajectory, in a
/// fixed order, excluding run control (steps, checkpoint cadence, out dir).
/// Its hash is stored in checkpoints; resuming under a different identity is
/// an error.
inline std::string config_identity_text(const TrainConfig& c) {
    std::ostringstream o;
    o << "[model]\n"
      << "resolution = " << c.resolution << "\n"
      << "latent = " << c.latent << "\n"
      << "channels = " << c.channels << "\n"
      << "d_channels = " << c.d_channels << "\n"
      << "heads = " << c.heads << "\n"
      << "window = " << c.window << "\n"
      << "attention = " << (c.attention_global ? "global" : "swin") << "\n"
      << "placement = " << detail::placement_name(c.placement) << "\n"
      << "ada_base = " << detail::norm_name(c.ada_base) << "\n"
      << "classes = " << c.classes << "\n"
      << "g_skip_proj = " << (c.g_skip_proj ? "true" : "false") << "\n"
      << "d_skip_proj = " << (c.d_skip_proj ? "true" : "false") << "\n"
      << "global_rel_bias = " << (c.global_rel_bias ? "true" : "false") << "\n"
      << "precision = " << c.precision << "\n"
      << "[train]\n"
      << "lr_g = " << detail::g17(c.lr_g) << "\n"
      << "lr_d = " << detail::g17(c.lr_d) << "\n"
      << "beta1 = " << detail::g17(c.beta1) << "\n"
      << "beta2 = " << detail::g17(c.beta2) << "\n"
      << "eps = " << detail::g17(c.eps) << "\n"
      << "eqlr_scale = " << detail::g17(c.eqlr_scale) << "\n"
      << "r1_gamma = " << detail::g17(c.r1_gamma) << "\n"
      << "r1_every = " << c.r1_every << "\n"
      << "batch = " << c.batch << "\n"
      << "seed = " << c.seed << "\n"
      << "[data]\n"
      << "kind = " << detail::dataset_name(c.data_kind) << "\n"
      << "path = " << c.data_path << "\n";
    return o.str();
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

inline GeneratorSpec generator_spec_from(const TrainConfig& c) {
    GeneratorSpec g;
    g.latent_dim = c.latent;
    g.target = c.resolution;
    g.channels = c.channels;
    g.heads = c.heads;
    g.window = c.window;
    g.num_classes = c.classes;
    g.placement = c.placement;
    g.ada_base = c.ada_base;
    g.all_global = c.attention_global;
    g.global_rel_bias = c.global_rel_bias;
    g.use_skip_proj = c.g_skip_proj;
    return g;
}

inline DiscriminatorSpec discriminator_spec_from(const TrainConfig& c) {
    DiscriminatorSpec d;
    d.input_res = c.resolution;
    d.channels = c.d_channels;
    d.heads = c.heads;
    d.window = c.window;
    d.num_classes = c.classes;
    d.lr_scale = c.eqlr_scale;
    d.use_skip_proj = c.d_skip_proj;
    return d;
}

struct StepResult {
    double loss_d = 0, loss_g = 0, r1 = 0;
    bool r1_applied = false;
};

template <class T>
void set_trainable_requires(ParamList<T>& params, bool v) {
    for (auto& e : params.items)
        if (e.trainable) e.tensor.set_requires_grad(v);
}

/// Nominal index space for the procedural datasets: any index is valid, this
/// just bounds the uniform draw.
inline constexpr index_t kProceduralCard = index_t(1) << 16;

template <class T>
struct Trainer {
    TrainConfig cfg;
    Generator<T> gen;
    Discriminator<T> disc;
    Adam<T> adam_g, adam_d;
    Dataset<T> data;
    Rng rng{0};
    std::int64_t step = 0;

    static Trainer make(const TrainConfig& cfg) {
        validate_train_config(cfg);
        ST_CHECK(dtype_code<T>() == (cfg.precision == "f32" ? 0u : 1u),
                 "trainer instantiated at the wrong precision for this config");
        Trainer tr;
        tr.cfg = cfg;
        tr.gen = build_generator<T>(generator_spec_from(cfg), cfg.seed,
                                    cfg.force_memory);
        tr.disc = build_strans_d<T>(discriminator_spec_from(cfg), cfg.seed);
        tr.adam_g = Adam<T>{static_cast<T>(cfg.lr_g), static_cast<T>(cfg.beta1),
                            static_cast<T>(cfg.beta2), static_cast<T>(cfg.eps),
                            {}};
        tr.adam_d = Adam<T>{static_cast<T>(cfg.lr_d), static_cast<T>(cfg.beta1),
                            static_cast<T>(cfg.beta2), static_cast<T>(cfg.eps),
                            {}};
        tr.adam_g.attach(tr.gen.params);
        tr.adam_d.attach(tr.disc.params);
        DatasetSpec ds;
        ds.kind = cfg.data_kind;
        ds.resolution = cfg.resolution;
        ds.classes = std::max<index_t>(cfg.classes, 1);
        ds.path = cfg.data_path;
        tr.data = open_dataset<T>(ds, cfg.seed);
        tr.rng = Rng(Rng::mix(cfg.seed, 0x747261696eull)) /* training stream */;
        return tr;
    }

    index_t dataset_card() const {
        return cfg.data_kind == DatasetKind::ImageDir
                   ? static_cast<index_t>(data.files.size())
                   : kProceduralCard;
    }

    bool conditional() const { return cfg.classes > 0; }

    Tensor<T> draw_latents(index_t B) {
        Tensor<T> z({B, cfg.latent});
        for (T& v : z.raw()) v = static_cast<T>(rng.normal());
        return z;
    }

    std::vector<index_t> draw_labels(index_t B) {
        std::vector<index_t> y(B);
        for (auto& v : y)
            v = static_cast<index_t>(rng.below(static_cast<std::uint64_t>(cfg.classes)));
        return y;
    }

    Tensor<T> mean_over_batch(const Tensor<T>& per_sample, index_t B) {
        return scale(sum_all(per_sample), T(1) / static_cast<T>(B));
    }

    /// One full adversarial step: discriminator update, then generator
    /// update. RNG consumption order is fixed (real indices, D-step latents
    /// and labels, G-step latents and labels), which makes checkpoints
    /// resumable mid-trajectory.
    StepResult gan_step() {
        // Per-op finite scans double the step cost; the run loop checks the
        // returned losses instead and aborts with a dump on divergence.
        FiniteCheckGuard fc(false);
        const index_t B = cfg.batch;
        const bool cond = conditional();
        StepResult res;

        // ---- discriminator update ----
        std::vector<index_t> idx(B);
        const std::uint64_t card = static_cast<std::uint64_t>(dataset_card());
        for (auto& i : idx) i = static_cast<index_t>(rng.below(card));
        std::vector<index_t> y_real;
        Tensor<T> real = data.batch(idx, cond ? &y_real : nullptr);
        Tensor<T> z_d = draw_latents(B);
        std::vector<index_t> y_fake = cond ? draw_labels(B) : std::vector<index_t>{};
        Tensor<T> fake;
        {
            NoGradGuard ng;  // generator is a fixed sampler during the D step
            fake = gen.forward(z_d, y_fake, /*training=*/true);
        }

        const bool do_r1 = cfg.r1_gamma > 0 && step % cfg.r1_every == 0;
        Tensor<T> loss_d;
        if (do_r1) {
            real.set_requires_grad(true);
            Tensor<T> d_real = disc.forward(real, y_real, true);
            Tensor<T> d_fake = disc.forward(fake, y_fake, true);
            // the same real forward serves the logistic term and the penalty
            auto grads = gradient(sum_all(d_real), {real}, /*create_graph=*/true);
            Tensor<T> r1 = scale(sum_all(square(grads[0])),
                                 static_cast<T>(cfg.r1_gamma / 2.0 / B));
            loss_d = add(add(mean_over_batch(softplus(d_fake), B),
                             mean_over_batch(softplus(neg(d_real)), B)),
                         r1);
            res.r1 = static_cast<double>(r1.item());
            res.r1_applied = true;
        } else {
            Tensor<T> d_real = disc.forward(real, y_real, true);
            Tensor<T> d_fake = disc.forward(fake, y_fake, true);
            loss_d = add(mean_over_batch(softplus(d_fake), B),
                         mean_over_batch(softplus(neg(d_real)), B));
        }
        backward(loss_d);
        adam_d.step(disc.params);
        res.loss_d = static_cast<double>(loss_d.item());

        // ---- generator update ----
        Tensor<T> z_g = draw_latents(B);
        std::vector<index_t> y_g = cond ? draw_labels(B) : std::vector<index_t>{};
        set_trainable_requires(disc.params, false);  // critic frozen, not detached
        Tensor<T> fake_g = gen.forward(z_g, y_g, true);
        Tensor<T> d_fake_g = disc.forward(fake_g, y_g, true);
        Tensor<T> loss_g = mean_over_batch(softplus(neg(d_fake_g)), B);
        backward(loss_g);
        set_trainable_requires(disc.params, true);
        adam_g.step(gen.params);
        res.loss_g = static_cast<double>(loss_g.item());

        ++step;
        return res;
    }

    /// Fixed evaluation latents/labels: a fresh stream per call, so sample
    /// grids from the same seed are comparable across checkpoints.
    Tensor<T> sample_images(index_t count) {
        Rng eval(Rng::mix(cfg.seed, 0x6576616cull));
        Tensor<T> z({count, cfg.latent});
        for (T& v : z.raw()) v = static_cast<T>(eval.normal());
        std::vector<index_t> y;
        if (conditional()) {
            y.resize(count);
            for (index_t i = 0; i < count; ++i) y[i] = i % cfg.classes;
        }
        NoGradGuard ng;
        return gen.forward(z, y, /*training=*/false);
    }

    Checkpoint<T> snapshot() const {
        return snapshot_checkpoint(gen, disc, adam_g, adam_d,
                                   static_cast<std::uint64_t>(step),
                                   config_identity_text(cfg), rng.state());
    }

    void save(const std::string& path) const { save_checkpoint(path, snapshot()); }

    /// Rebuilds a trainer from a checkpoint's embedded config. Run control
    /// (steps, out dir, cadence) comes from `run` when given.
    static Trainer from_checkpoint(const Checkpoint<T>& ck,
                                   const TrainConfig* run = nullptr) {
        TrainConfig cfg =
            train_config_from_ini(IniFile::parse_string(ck.config_text, "<checkpoint>"));
        if (run) {
            cfg.steps = run->steps;
            cfg.checkpoint_every = run->checkpoint_every;
            cfg.out_dir = run->out_dir;
            cfg.force_memory = run->force_memory;
        }
        ST_CHECK(fnv1a64(config_identity_text(cfg)) == ck.config_hash,
                 "checkpoint config does not round-trip; refusing to resume");
        Trainer tr = make(cfg);
        restore_checkpoint(ck, tr.gen, tr.disc, tr.adam_g, tr.adam_d);
        tr.rng.set_state(ck.rng_state);
        tr.step = static_cast<std::int64_t>(ck.step);
        return tr;
    }
};

// ---------------------------------------------------------------------------
// Image emission
// ---------------------------------------------------------------------------

/// tanh -> [0,255]: u8 = round((tanh(v) + 1) * 127.5), i.e. the image lives
/// in tanh space and -inf..inf maps onto 0..255 monotonically.
template <class T>
std::vector<std::uint8_t> images_to_u8(const Tensor<T>& imgs) {
    std::vector<std::uint8_t> out(imgs.numel());
    for (index_t i = 0; i < imgs.numel(); ++i) {
        const double t = (std::tanh(static_cast<double>(imgs.values()[i])) + 1.0) *
                         127.5;
        out[i] = static_cast<std::uint8_t>(
            std::clamp<long>(std::lround(t), 0, 255));
    }
    return out;
}

template <class T>
void write_sample_grid(Trainer<T>& tr, const std::string& path, index_t count,
                       index_t cols) {
    Tensor<T> imgs = tr.sample_images(count);
    write_png_grid(path, images_to_u8(imgs).data(), count, tr.cfg.resolution,
                   cols);
}

// ---------------------------------------------------------------------------
// Run loop
// ---------------------------------------------------------------------------

struct RunResult {
    std::int64_t final_step = 0;
    std::vector<std::string> checkpoint_paths;
    double last_loss_d = 0, last_loss_g = 0;
};

namespace detail {

inline std::string step_tag(std::int64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06lld", static_cast<long long>(step));
    return buf;
}

template <class T>
void write_divergence_dump(const Trainer<T>& tr, const StepResult& res,
                           const std::string& path) {
    std::ostringstream o;
    o << "divergence at step " << tr.step << "\n"
      << "loss_d = " << res.loss_d << "\nloss_g = " << res.loss_g
      << "\nr1 = " << res.r1 << "\n\nparameter L2 norms:\n";
    auto dump = [&](const ParamList<T>& params, const char* tag) {
        for (const auto& e : params.items) {
            double s = 0;
            for (T v : e.tensor.values())
                s += static_cast<double>(v) * static_cast<double>(v);
            o << tag << "." << e.name << " = " << std::sqrt(s) << "\n";
        }
    };
    dump(tr.gen.params, "g");
    dump(tr.disc.params, "d");
    write_text_file(path, o.str());
}

}  // namespace detail

inline constexpr double kDivergenceLimit = 1e4;

/// Trains to cfg.steps, writing ckpt_<step>.stck and samples_<step>.png into
/// out_dir at step 0, every checkpoint_every steps, and at the end. A
/// non-finite or exploding loss writes a diagnostic dump and aborts. The
/// optional callback sees every step result and may stop the run early.
template <class T>
RunResult run_training(
    Trainer<T>& tr,
    const std::function<bool(const Trainer<T>&, const StepResult&)>& on_step =
        nullptr) {
    const TrainConfig& cfg = tr.cfg;
    std::filesystem::create_directories(cfg.out_dir);
    RunResult out;

    auto emit = [&](std::int64_t step) {
        const std::string tag = detail::step_tag(step);
        const std::string ck = cfg.out_dir + "/ckpt_" + tag + ".stck";
        tr.save(ck);
        write_sample_grid(tr, cfg.out_dir + "/samples_" + tag + ".png",
                          std::min<index_t>(16, std::max<index_t>(cfg.batch, 4)),
                          4);
        out.checkpoint_paths.push_back(ck);
    };

    if (tr.step == 0) emit(0);
    while (tr.step < cfg.steps) {
        StepResult res = tr.gan_step();
        out.last_loss_d = res.loss_d;
        out.last_loss_g = res.loss_g;
        const bool bad = !std::isfinite(res.loss_d) || !std::isfinite(res.loss_g) ||
                         std::abs(res.loss_d) > kDivergenceLimit ||
                         std::abs(res.loss_g) > kDivergenceLimit;
        if (bad) {
            detail::write_divergence_dump(tr, res,
                                          cfg.out_dir + "/divergence_dump.txt");
            ST_CHECK(false, "training diverged at step "
                                << tr.step << " (loss_d=" << res.loss_d
                                << ", loss_g=" << res.loss_g
                                << "); dump written to " << cfg.out_dir);
        }
        const bool stop = on_step && on_step(tr, res);
        if (tr.step % cfg.checkpoint_every == 0 && tr.step < cfg.steps && !stop)
            emit(tr.step);
        if (stop) break;
    }
    if (tr.step > 0) emit(tr.step);
    out.final_step = tr.step;
    return out;
}

// ---------------------------------------------------------------------------
// Diagnose: one tapped forward over evaluation latents
// ---------------------------------------------------------------------------

struct DiagnoseArtifacts {
    NormRatioTrace trace;
    std::vector<DistanceReport> distances;
    ArgmaxMap last_argmax;  // strongest-key map of the last attention layer
    bool have_argmax = false;
};

template <class T>
DiagnoseArtifacts diagnose_generator(Trainer<T>& tr, index_t batch = 4) {
    Rng eval(Rng::mix(tr.cfg.seed, 0x6576616cull));
    Tensor<T> z({batch, tr.cfg.latent});
    for (T& v : z.raw()) v = static_cast<T>(eval.normal());
    std::vector<index_t> y;
    if (tr.conditional()) {
        y.resize(batch);
        for (index_t i = 0; i < batch; ++i) y[i] = i % tr.cfg.classes;
    }
    TapSink<T> sink;
    sink.capture_weights = true;
    {
        NoGradGuard ng;
        tr.gen.forward(z, y, /*training=*/false, &sink);
    }
    DiagnoseArtifacts art;
    art.trace = norm_ratio_trace(sink);
    for (const auto& rec : sink.records)
        if (rec.is_attention && rec.weights.defined())
            art.distances.push_back(attention_distance(rec));
    for (auto it = sink.records.rbegin(); it != sink.records.rend(); ++it)
        if (it->is_attention && it->weights.defined()) {
            art.last_argmax = argmax_attention_map(*it);
            art.have_argmax = true;
            break;
        }
    return art;
}

template <class T>
void emit_diagnose_artifacts(Trainer<T>& tr, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    DiagnoseArtifacts art = diagnose_generator(tr);
    emit_report(art.trace, out_dir + "/norm_ratio.csv");
    emit_report(art.distances, out_dir + "/attention_distance.csv");
    detail::write_text_file(out_dir + "/attention_distance_summary.csv",
                            distance_summary_to_csv(art.distances));
    if (art.have_argmax)
        emit_report(art.last_argmax, out_dir + "/argmax_last.json");
}

}  // namespace strans
