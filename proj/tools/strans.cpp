#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "strans/gradcheck.hpp"
#include "strans/train.hpp"

namespace {

using strans::IniFile;
using strans::TrainConfig;
using strans::Trainer;

// Flags shared by train/generate/diagnose. A value of count()==0 on the
// corresponding CLI11 option means "not given"; the sentinel members make
// that explicit without a parallel bool per flag.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<long long> steps;
    std::optional<std::string> out;
    std::optional<std::string> placement;
    std::optional<std::string> attention;
    std::optional<long long> window;
    bool force_memory = false;
};

std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv("STRANS_SEED");
    if (!s || !*s) return std::nullopt;
    char* end = nullptr;
    unsigned long long v = std::strtoull(s, &end, 10);
    ST_CHECK(end != s && *end == '\0',
             "STRANS_SEED must be a non-negative integer, got '" << s << "'");
    return static_cast<std::uint64_t>(v);
}

void apply(const Overrides& ov, TrainConfig& cfg) {
    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.steps) cfg.steps = static_cast<strans::index_t>(*ov.steps);
    if (ov.out) cfg.out_dir = *ov.out;
    if (ov.placement) cfg.placement = strans::detail::placement_from(*ov.placement);
    if (ov.attention) {
        ST_CHECK(*ov.attention == "global" || *ov.attention == "swin",
                 "--attention must be global or swin, got '" << *ov.attention
                                                             << "'");
        cfg.attention_global = *ov.attention == "global";
    }
    if (ov.window) cfg.window = static_cast<strans::index_t>(*ov.window);
    cfg.force_memory = cfg.force_memory || ov.force_memory;
}

TrainConfig config_from_checkpoint_text(const std::string& text) {
    return strans::train_config_from_ini(
        IniFile::parse_string(text, "<checkpoint>"));
}

// ---- train ----------------------------------------------------------------

template <class T>
int train_with(const TrainConfig& cfg, const std::string& resume) {
    Trainer<T> tr = [&] {
        if (resume.empty()) return Trainer<T>::make(cfg);
        auto ck = strans::load_checkpoint<T>(resume);
        return Trainer<T>::from_checkpoint(ck, &cfg);
    }();
    strans::RunResult res = strans::run_training(tr);
    std::cout << "step " << res.final_step << "  loss_d " << res.last_loss_d
              << "  loss_g " << res.last_loss_g << "\n";
    for (const std::string& p : res.checkpoint_paths) std::cout << p << "\n";
    return 0;
}

int cmd_train(const std::string& config, const std::string& resume,
              const Overrides& ov) {
    TrainConfig cfg;
    if (!resume.empty() && config.empty()) {
        // Model config travels inside the checkpoint; only run control can
        // change on resume.
        std::string dtype = strans::checkpoint_dtype_file(resume) == 0 ? "f32" : "f64";
        if (dtype == "f32")
            cfg = config_from_checkpoint_text(
                strans::load_checkpoint<float>(resume).config_text);
        else
            cfg = config_from_checkpoint_text(
                strans::load_checkpoint<double>(resume).config_text);
    } else {
        ST_CHECK(!config.empty(), "train needs --config (or --resume)");
        cfg = strans::train_config_from_ini(IniFile::parse_file(config));
    }
    apply(ov, cfg);
    if (!resume.empty()) {
        int code = strans::checkpoint_dtype_file(resume);
        ST_CHECK((code == 0) == (cfg.precision == "f32"),
                 "checkpoint precision does not match config precision");
    }
    return cfg.precision == "f32" ? train_with<float>(cfg, resume)
                                  : train_with<double>(cfg, resume);
}

// ---- generate / diagnose --------------------------------------------------

template <class T>
Trainer<T> trainer_from(const std::string& ckpt_path, const Overrides& ov) {
    auto ck = strans::load_checkpoint<T>(ckpt_path);
    TrainConfig run = config_from_checkpoint_text(ck.config_text);
    run.force_memory = run.force_memory || ov.force_memory;
    Trainer<T> tr = Trainer<T>::from_checkpoint(ck, &run);
    if (ov.seed) tr.cfg.seed = *ov.seed;
    return tr;
}

template <class T>
int generate_with(const std::string& ckpt, const Overrides& ov, long long count,
                  long long cols, const std::string& out) {
    Trainer<T> tr = trainer_from<T>(ckpt, ov);
    strans::write_sample_grid(tr, out, static_cast<strans::index_t>(count),
                              static_cast<strans::index_t>(cols));
    std::cout << out << "\n";
    return 0;
}

template <class T>
int diagnose_with(const std::string& ckpt, const Overrides& ov,
                  const std::string& out_dir) {
    Trainer<T> tr = trainer_from<T>(ckpt, ov);
    strans::emit_diagnose_artifacts(tr, out_dir);
    for (const char* f : {"norm_ratio.csv", "attention_distance.csv",
                          "attention_distance_summary.csv", "argmax_last.json"})
        std::cout << out_dir << "/" << f << "\n";
    return 0;
}

// ---- gradcheck ------------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed) {
    bool all_pass = true;
    for (const auto& r : strans::run_gradcheck_suite(seed)) {
        std::printf("%-24s max_rel_err %.3e  %s\n", r.name.c_str(),
                    r.max_rel_err, r.pass ? "pass" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    std::cout << (all_pass ? "gradcheck: all cases pass\n"
                           : "gradcheck: FAILURES above\n");
    return all_pass ? 0 : 1;
}

// ---- census ---------------------------------------------------------------

void print_census(const std::vector<strans::CensusRow>& rows, const char* title) {
    std::printf("%s\n", title);
    strans::index_t total = 0;
    for (const auto& r : rows) {
        std::printf("  %-24s %12lld\n", r.group.c_str(),
                    static_cast<long long>(r.count));
        total += r.count;
    }
    std::printf("  %-24s %12lld\n", "total", static_cast<long long>(total));
}

int cmd_census(const std::string& config, const Overrides& ov) {
    TrainConfig cfg;
    if (!config.empty()) {
        cfg = strans::train_config_from_ini(IniFile::parse_file(config));
    } else {
        // Headline generator layout: 64x64 target, width 512, 4 heads.
        cfg.resolution = 64;
        cfg.channels = 512;
        cfg.latent = 512;
        cfg.d_channels = 512;
    }
    apply(ov, cfg);
    // f32 keeps the big reference layout affordable; counts don't depend on
    // precision.
    auto g = strans::build_generator<float>(strans::generator_spec_from(cfg),
                                            cfg.seed, /*force_memory=*/true);
    auto d = strans::build_strans_d<float>(strans::discriminator_spec_from(cfg),
                                           cfg.seed);
    print_census(strans::census(g.params), "generator");
    print_census(strans::census(d.params), "discriminator");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    strans::tune_allocator();
    CLI::App app{"windowed-attention GAN trainer and toolkit"};
    app.require_subcommand(1);

    Overrides ov;
    std::string config, resume, ckpt;
    std::string out_file = "samples.png", out_dir = ".";
    long long count = 16, cols = 4;
    std::uint64_t gc_seed = 1234;

    auto add_shared = [&](CLI::App* sub, bool with_steps) {
        sub->add_option_function<std::uint64_t>(
            "--seed", [&](std::uint64_t v) { ov.seed = v; },
            "override the run seed");
        if (with_steps)
            sub->add_option_function<long long>(
                "--steps", [&](long long v) { ov.steps = v; },
                "override total training steps");
        sub->add_flag("--force-memory", ov.force_memory,
                      "allow dense attention past the score-memory guard");
    };

    CLI::App* train = app.add_subcommand("train", "train a model from a config");
    train->add_option("--config", config, "config file (ini)");
    train->add_option("--resume", resume, "checkpoint to resume from");
    train->add_option_function<std::string>(
        "--out", [&](std::string v) { ov.out = std::move(v); }, "output directory");
    train->add_option_function<std::string>(
        "--placement", [&](std::string v) { ov.placement = std::move(v); },
        "conditioning placement: none|a|b|c");
    train->add_option_function<std::string>(
        "--attention", [&](std::string v) { ov.attention = std::move(v); },
        "generator attention: global|swin");
    train->add_option_function<long long>(
        "--window", [&](long long v) { ov.window = v; }, "attention window size");
    add_shared(train, /*with_steps=*/true);

    CLI::App* gen = app.add_subcommand("generate", "render a sample grid");
    gen->add_option("--ckpt", ckpt, "checkpoint file")->required();
    gen->add_option("--count", count, "number of samples");
    gen->add_option("--cols", cols, "grid columns");
    gen->add_option("--out", out_file, "output png path");
    add_shared(gen, false);

    CLI::App* diag = app.add_subcommand("diagnose", "emit diagnostic reports");
    diag->add_option("--ckpt", ckpt, "checkpoint file")->required();
    diag->add_option("--out", out_dir, "output directory");
    add_shared(diag, false);

    CLI::App* gc = app.add_subcommand("gradcheck",
                                      "finite-difference gradient suite");
    gc->add_option("--seed", gc_seed, "suite base seed");

    CLI::App* cen = app.add_subcommand("census", "parameter counts per block");
    cen->add_option("--config", config, "config file (ini)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 2;
    }

    try {
        if (auto es = env_seed()) ov.seed = *es;
        if (train->parsed()) return cmd_train(config, resume, ov);
        if (gen->parsed()) {
            int code = strans::checkpoint_dtype_file(ckpt);
            return code == 0 ? generate_with<float>(ckpt, ov, count, cols, out_file)
                             : generate_with<double>(ckpt, ov, count, cols, out_file);
        }
        if (diag->parsed()) {
            int code = strans::checkpoint_dtype_file(ckpt);
            return code == 0 ? diagnose_with<float>(ckpt, ov, out_dir)
                             : diagnose_with<double>(ckpt, ov, out_dir);
        }
        if (gc->parsed()) {
            if (auto es = env_seed()) gc_seed = *es;
            return cmd_gradcheck(gc_seed);
        }
        if (cen->parsed()) return cmd_census(config, ov);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
