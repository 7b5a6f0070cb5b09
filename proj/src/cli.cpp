#include "fundus/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "fundus/checkgrad.hpp"
#include "fundus/checkpoint.hpp"
#include "fundus/config.hpp"
#include "fundus/data.hpp"
#include "fundus/errors.hpp"
#include "fundus/kernels.hpp"
#include "fundus/png_io.hpp"
#include "fundus/train.hpp"

namespace fs = std::filesystem;

namespace fundus::cli {

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write '" + path.string() + "'");
    os << text;
}

void apply_clahe(const config::RunConfig& cfg, std::vector<data::Sample>& samples) {
    if (!cfg.clahe_enabled) return;
    for (auto& s : samples) s.image = data::clahe(s.image, cfg.clahe_clip, cfg.clahe_tiles);
}

std::unique_ptr<models::Network<float>> load_model(const config::RunConfig& cfg,
                                                   const std::string& ckpt_path, bool force) {
    auto ckpt = checkpoint::load(ckpt_path);
    if (ckpt.config_hash != cfg.config_hash() && !force)
        throw DataError("checkpoint '" + ckpt_path +
                        "' was trained with a different architecture config (use --force to "
                        "load anyway)");
    auto net = models::build_network<float>(cfg.model, 0);
    checkpoint::apply(ckpt, net->params());
    return net;
}

void write_mask_png(const fs::path& path, const MaskImage& m) {
    std::vector<std::uint8_t> px(m.v.size());
    for (std::size_t e = 0; e < m.v.size(); ++e) px[e] = m.v[e] ? 255 : 0;
    png_io::write_gray8(path.string(), m.width, m.height, px);
}

// Table 2 reference parameter counts, for the run summary only.
double reference_params(models::Kind kind) {
    switch (kind) {
        case models::Kind::wroim: return 7.8e6;
        case models::Kind::psbn: return 10.9e6;
        case models::Kind::twomodel: return 15.6e6;
    }
    return 0;
}

std::string param_summary(const config::RunConfig& cfg) {
    models::ModelConfig paper = cfg.model;
    paper.frame = 512;
    paper.crop_base = 256;
    paper.depth = 4;
    paper.base_channels = 32;
    paper.weak_base_channels = 16;
    const auto count = models::count_params(cfg.model, cfg.model.kind);
    const auto paper_count = models::count_params(paper, cfg.model.kind);
    const double ref = reference_params(cfg.model.kind);
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "param_count=%lld\npaper_preset_param_count=%lld (reference %.1fe6, ratio %.2f)\n",
                  static_cast<long long>(count), static_cast<long long>(paper_count), ref / 1e6,
                  static_cast<double>(paper_count) / ref);
    return buf;
}

int cmd_synth(int count, std::uint64_t seed, int size, const std::string& out) {
    if (count <= 0) throw ConfigError("count must be positive");
    if (size < 32) throw ConfigError("size must be >= 32");
    auto samples = data::gen_synthetic(count, seed, size);
    data::save_dataset(out, samples);
    std::cout << "wrote " << samples.size() << " synthetic samples to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    config::RunConfig cfg = config::parse_file(config_path);
    kernels::set_parallel(cfg.parallel);

    auto samples = data::load_dataset(data_dir, cfg.model.frame);
    if (samples.empty()) throw DataError("dataset '" + data_dir + "' is empty");
    apply_clahe(cfg, samples);

    auto net = models::build_network<float>(cfg.model, cfg.train.seed);
    data::AugmentConfig aug = cfg.aug;
    aug.seed = cfg.train.seed;

    auto result = train::run(*net, samples, cfg.train, aug, cfg.metrics, cfg.config_hash());

    fs::create_directories(out_dir);
    checkpoint::save(result.best, (fs::path(out_dir) / "best.ckpt").string());
    write_text(fs::path(out_dir) / "history.csv", result.history.to_csv());

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::int64_t degenerate = 0;
    for (const auto& r : result.history.rows) degenerate += r.degenerate_crops;
    const auto& best = result.best;
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "model=%s\nepochs_run=%zu\nbest_epoch=%u\nbest_val_loss=%.6g\n"
                  "degenerate_crop_rate=%.4f\nwall_seconds=%.1f\n",
                  models::kind_name(cfg.model.kind), result.history.rows.size(), best.epoch,
                  static_cast<double>(best.val_loss),
                  static_cast<double>(degenerate) /
                      (static_cast<double>(result.history.rows.size()) *
                       static_cast<double>(result.train_ids.size())),
                  wall);
    std::string summary = std::string(buf) + param_summary(cfg);
    write_text(fs::path(out_dir) / "summary.txt", summary);
    std::cout << summary;
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path,
             const std::string& data_dir, const std::string& out_dir, bool force) {
    config::RunConfig cfg = config::parse_file(config_path);
    kernels::set_parallel(cfg.parallel);
    auto net = load_model(cfg, ckpt_path, force);

    auto samples = data::load_dataset(data_dir, cfg.model.frame);
    if (samples.empty()) throw DataError("dataset '" + data_dir + "' is empty");
    apply_clahe(cfg, samples);

    auto report = train::evaluate(*net, samples, cfg.metrics);
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "report.csv", report.to_csv());

    char buf[384];
    std::snprintf(buf, sizeof buf,
                  "disc: dice=%.4f iou=%.4f (binarized dice %.4f)\n"
                  "cup:  dice=%.4f iou=%.4f (binarized dice %.4f)\n"
                  "mean cdr=%.4f\nimages/sec=%.2f\n",
                  report.mean.dice_disc, report.mean.iou_disc, report.dice_disc_binary,
                  report.mean.dice_cup, report.mean.iou_cup, report.dice_cup_binary,
                  report.mean.cdr, report.images_per_sec);
    std::cout << buf;
    return 0;
}

int cmd_infer(const std::string& config_path, const std::string& ckpt_path,
              const std::string& image_path, const std::string& out_dir, bool force) {
    config::RunConfig cfg = config::parse_file(config_path);
    kernels::set_parallel(cfg.parallel);
    auto net = load_model(cfg, ckpt_path, force);

    Tensor<float> image = data::load_image_png(image_path, cfg.model.frame);
    if (cfg.clahe_enabled) image = data::clahe(image, cfg.clahe_clip, cfg.clahe_tiles);
    auto out = net->forward(nullptr, image);

    const int n = cfg.model.frame;
    MaskImage disc_m, cup_m;
    if (cfg.model.kind == models::Kind::wroim) {
        auto padded3 = ops::pad_to_frame(out.pred3, out.window, n, n);
        std::tie(disc_m, cup_m) = metrics::masks_from_channels(padded3);
    } else {
        disc_m = roi::binarize(out.disc_prob.ptr(), n, n, cfg.metrics.iou_threshold);
        cup_m = roi::binarize(out.cup_prob.ptr(), n, n, cfg.metrics.iou_threshold);
        for (std::size_t e = 0; e < cup_m.v.size(); ++e) cup_m.v[e] &= disc_m.v[e];
    }
    const double cdr = disc_m.empty_mask() ? 0.0 : metrics::vertical_cdr(disc_m, cup_m);

    fs::create_directories(out_dir);
    write_mask_png(fs::path(out_dir) / "disc.png", disc_m);
    write_mask_png(fs::path(out_dir) / "cup.png", cup_m);
    char buf[192];
    std::snprintf(buf, sizeof buf, "window=%d,%d,%d,%d\ndegenerate=%s\ncdr=%.6g\n", out.window.row0,
                  out.window.col0, out.window.height, out.window.width,
                  out.degenerate ? "true" : "false", cdr);
    write_text(fs::path(out_dir) / "window.txt", buf);
    std::cout << buf;
    return 0;
}

int cmd_checkgrad(std::uint64_t seed) {
    auto results = checkgrad::run_all(seed, std::cout);
    bool ok = true;
    for (const auto& r : results) ok = ok && r.pass;
    std::cout << (ok ? "checkgrad: all ops within tolerance\n" : "checkgrad: FAILURES above\n");
    return ok ? 0 : 3;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"Optic disc/cup segmentation with dynamic region proposals"};
    app.require_subcommand(1);
    app.footer(config::reference_text());

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    int s_count = 8;
    std::uint64_t s_seed = 7;
    int s_size = 128;
    std::string s_out;
    synth->add_option("--count", s_count, "number of samples");
    synth->add_option("--seed", s_seed, "generator seed");
    synth->add_option("--size", s_size, "frame size N");
    synth->add_option("--out", s_out, "output dataset directory")->required();

    auto* tr = app.add_subcommand("train", "train a model");
    std::string t_config, t_data, t_out;
    tr->add_option("--config", t_config, "key=value config file")->required();
    tr->add_option("--data", t_data, "dataset root")->required();
    tr->add_option("--out", t_out, "output directory")->required();

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string e_config, e_ckpt, e_data, e_out;
    bool e_force = false;
    ev->add_option("--config", e_config)->required();
    ev->add_option("--ckpt", e_ckpt)->required();
    ev->add_option("--data", e_data)->required();
    ev->add_option("--out", e_out)->required();
    ev->add_flag("--force", e_force, "load despite a config-hash mismatch");

    auto* inf = app.add_subcommand("infer", "segment a single image");
    std::string i_config, i_ckpt, i_image, i_out;
    bool i_force = false;
    inf->add_option("--config", i_config)->required();
    inf->add_option("--ckpt", i_ckpt)->required();
    inf->add_option("--image", i_image)->required();
    inf->add_option("--out", i_out)->required();
    inf->add_flag("--force", i_force, "load despite a config-hash mismatch");

    auto* cg = app.add_subcommand("checkgrad", "finite-difference verification suite");
    std::uint64_t g_seed = 42;
    cg->add_option("--seed", g_seed, "suite seed");

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return cmd_synth(s_count, s_seed, s_size, s_out);
        if (tr->parsed()) return cmd_train(t_config, t_data, t_out);
        if (ev->parsed()) return cmd_eval(e_config, e_ckpt, e_data, e_out, e_force);
        if (inf->parsed()) return cmd_infer(i_config, i_ckpt, i_image, i_out, i_force);
        if (cg->parsed()) return cmd_checkgrad(g_seed);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors -> 1, --help -> 0
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const VerifyError& e) {
        std::cerr << "verification error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace fundus::cli
