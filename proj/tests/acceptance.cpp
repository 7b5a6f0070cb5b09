// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Criteria 4/5 train at desk scale and dominate the runtime; pass criterion
// numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fundus/checkgrad.hpp"
#include "fundus/checkpoint.hpp"
#include "fundus/cli.hpp"
#include "fundus/metrics.hpp"
#include "fundus/roi.hpp"
#include "fundus/train.hpp"

using namespace fundus;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("criterion %d: %s  %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

// ---- criterion 1: gradient correctness --------------------------------------

void criterion1() {
    std::ostringstream log;
    const double t0 = now_s();
    auto results = checkgrad::run_all(42, log);
    const double dt = now_s() - t0;
    bool pass = !results.empty() && dt < 120.0;
    double worst = 0;
    for (const auto& r : results) {
        pass = pass && r.pass;
        worst = std::max(worst, r.max_rel_err);
    }
    std::fputs(log.str().c_str(), stdout);
    char buf[128];
    std::snprintf(buf, sizeof buf, "(%zu cases, worst rel err %.2e, %.1f s)", results.size(), worst, dt);
    report(1, pass, buf);
}

// ---- criterion 2: oracle equivalence -----------------------------------------

MaskImage random_mask(Rng& rng, int h, int w, double density) {
    MaskImage m(h, w);
    for (auto& v : m.v) v = rng.uniform() < density ? 1 : 0;
    return m;
}

void criterion2() {
    Rng rng(202);
    bool pass = true;

    // centroid vs brute force, exact, 100 random 32x32 masks
    for (int rep = 0; rep < 100 && pass; ++rep) {
        auto m = random_mask(rng, 32, 32, rng.uniform(0.05, 0.8));
        std::int64_t total = 0, rs = 0, cs = 0;
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 32; ++j)
                if (m.at(i, j)) {
                    ++total;
                    rs += i;
                    cs += j;
                }
        auto c = roi::centroid(m);
        if (total == 0)
            pass = c.degenerate;
        else
            pass = c.row == static_cast<double>(rs) / total && c.col == static_cast<double>(cs) / total;
    }

    // dice/iou vs pixel counting, 200 pairs, 1e-9; identity iou = d/(2-d)
    double worst = 0;
    for (int rep = 0; rep < 200; ++rep) {
        const int h = 4 + static_cast<int>(rng.uniform_int(24));
        const int w = 4 + static_cast<int>(rng.uniform_int(24));
        auto x = random_mask(rng, h, w, rng.uniform(0, 1));
        auto y = random_mask(rng, h, w, rng.uniform(0, 1));
        std::int64_t inter = 0, uni = 0, nx = 0, ny = 0;
        for (std::size_t e = 0; e < x.v.size(); ++e) {
            inter += x.v[e] & y.v[e];
            uni += x.v[e] | y.v[e];
            nx += x.v[e];
            ny += y.v[e];
        }
        const double d_ref = (nx + ny) ? 2.0 * inter / static_cast<double>(nx + ny) : 1.0;
        const double j_ref = uni ? static_cast<double>(inter) / uni : 1.0;
        const double d = metrics::binary_dice(x, y);
        const double j = metrics::iou(x, y);
        worst = std::max({worst, std::abs(d - d_ref), std::abs(j - j_ref),
                          std::abs(j - d / (2.0 - d))});
    }
    pass = pass && worst < 1e-9;
    char buf[96];
    std::snprintf(buf, sizeof buf, "(worst oracle deviation %.2e)", worst);
    report(2, pass, buf);
}

// ---- criterion 3: coordinate mapping -----------------------------------------

void criterion3() {
    bool pass = true;
    std::string detail;

    const int N = 512, crop_base = 256;
    const int scales[] = {256, 128, 64, 32};
    const int expect[] = {128, 64, 32, 16};
    for (int i = 0; i < 4; ++i) {
        const auto mc = roi::map_center(Centroid{0, 0, false}, N, scales[i], crop_base);
        if (mc.crop != expect[i]) {
            pass = false;
            detail = "crop extent mismatch at n=" + std::to_string(scales[i]);
        }
    }

    Rng rng(303);
    double worst = 0;
    for (int rep = 0; rep < 200; ++rep) {
        const int r = static_cast<int>(rng.uniform_int(N));
        const int c = static_cast<int>(rng.uniform_int(N));
        MaskImage m(N, N);
        m.at(r, c) = 1;
        const Centroid cen = roi::centroid(m);
        for (int n : scales) {
            const auto mc = roi::map_center(cen, N, n, crop_base);
            worst = std::max({worst, std::abs(mc.row - cen.row * n / N),
                              std::abs(mc.col - cen.col * n / N)});
            const CropWindow w = roi::crop_window(mc.row, mc.col, mc.crop, n, n);
            pass = pass && w.row0 >= 0 && w.col0 >= 0 && w.row0 + w.height <= n &&
                   w.col0 + w.width <= n;
        }
    }
    // corner centroids stay in frame
    for (int r : {0, N - 1})
        for (int c : {0, N - 1}) {
            MaskImage m(N, N);
            m.at(r, c) = 1;
            const Centroid cen = roi::centroid(m);
            for (int n : scales) {
                const auto mc = roi::map_center(cen, N, n, crop_base);
                const CropWindow w = roi::crop_window(mc.row, mc.col, mc.crop, n, n);
                pass = pass && w.row0 >= 0 && w.col0 >= 0 && w.row0 + w.height <= n &&
                       w.col0 + w.width <= n;
            }
        }
    pass = pass && worst <= 0.5;
    char buf[128];
    std::snprintf(buf, sizeof buf, "(max center deviation %.3f cells%s)", worst,
                  detail.empty() ? "" : (", " + detail).c_str());
    report(3, pass, buf);
}

// ---- criteria 4 + 5: desk-scale learning and determinism ---------------------

struct DeskRun {
    train::TrainResult wroim, twomodel;
    double wroim_disc = 0, wroim_cup = 0, two_disc = 0, two_cup = 0;
    int epochs_used = 0;
};

models::ModelConfig desk_cfg(models::Kind kind) {
    models::ModelConfig cfg;
    cfg.kind = kind;
    cfg.frame = 128;
    cfg.crop_base = 64;
    cfg.depth = 3;
    cfg.base_channels = 16;
    cfg.convs_per_block = 2;
    cfg.weak_base_channels = 8;
    return cfg;
}

// Trains WRoIM until it reaches the dice targets (cap 200 epochs), then the
// 2-Model baseline for the identical budget, and scores both on the same
// training subset. Augmentation is off: this is an overfit probe.
DeskRun desk_run(const std::vector<data::Sample>& samples) {
    config::TrainConfig tc;
    tc.lr = 1e-3;
    tc.momentum = 0.95;
    tc.batch_size = 1;
    tc.epochs = 200;
    tc.seed = 7;
    tc.augment = false;
    data::AugmentConfig ac;
    metrics::MetricsConfig mc;

    DeskRun run;
    auto wroim = models::build_network<float>(desk_cfg(models::Kind::wroim), tc.seed);

    std::vector<data::Sample> train_subset;  // filled on the first callback
    auto subset_of = [&](const std::vector<std::string>& ids) {
        std::vector<data::Sample> out;
        for (const auto& id : ids)
            for (const auto& s : samples)
                if (s.id == id) out.push_back(s);
        return out;
    };

    run.wroim = train::run(*wroim, samples, tc, ac, mc, 0, [&](const train::History& h) {
        if (train_subset.empty()) {
            // ids of the split are fixed; reconstruct once
            auto probe = data::split(samples, tc.train_frac, tc.seed)
                             .first;  // same seed, same shuffle as inside run()
            train_subset = std::move(probe);
        }
        auto rep = train::evaluate(*wroim, train_subset, mc);
        run.wroim_disc = rep.mean.dice_disc;
        run.wroim_cup = rep.mean.dice_cup;
        run.epochs_used = static_cast<int>(h.rows.size());
        return run.wroim_disc >= 0.95 && run.wroim_cup >= 0.85;
    });

    config::TrainConfig tc2 = tc;
    tc2.epochs = run.epochs_used;  // identical budget
    auto two = models::build_network<float>(desk_cfg(models::Kind::twomodel), tc2.seed);
    run.twomodel = train::run(*two, samples, tc2, ac, mc, 0);
    auto rep2 = train::evaluate(*two, subset_of(run.twomodel.train_ids), mc);
    run.two_disc = rep2.mean.dice_disc;
    run.two_cup = rep2.mean.dice_cup;
    return run;
}

DeskRun criterion4() {
    const double t0 = now_s();
    auto samples = data::gen_synthetic(8, 7, 128);
    DeskRun run = desk_run(samples);
    const double dt = now_s() - t0;

    const bool targets = run.wroim_disc >= 0.95 && run.wroim_cup >= 0.85 && run.epochs_used <= 200;
    const double gap = run.wroim_cup - run.two_cup;
    const bool pass = targets && gap >= 0.05;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "(wroim d/c %.3f/%.3f in %d epochs; 2-model d/c %.3f/%.3f; cup gap %.3f; %.0f s)",
                  run.wroim_disc, run.wroim_cup, run.epochs_used, run.two_disc, run.two_cup, gap, dt);
    report(4, pass, buf);
    return run;
}

void criterion5(const DeskRun& first) {
    auto samples = data::gen_synthetic(8, 7, 128);
    DeskRun second = desk_run(samples);
    const bool pass = first.wroim.history.to_csv() == second.wroim.history.to_csv() &&
                      first.twomodel.history.to_csv() == second.twomodel.history.to_csv();
    report(5, pass, "(bit-identical history.csv across reruns of criterion 4)");
}

// ---- criterion 6: checkpoint round trip --------------------------------------

void criterion6(const DeskRun* desk) {
    auto cfg = desk_cfg(models::Kind::wroim);
    auto net = models::build_network<float>(cfg, 7);
    if (desk) checkpoint::apply(desk->wroim.best, net->params());

    const auto dir = fs::temp_directory_path() / "fundus_acceptance_ckpt";
    fs::create_directories(dir);
    const std::string path = (dir / "best.ckpt").string();
    checkpoint::save(checkpoint::snapshot(net->params(), 1, 1, 0.0f), path);
    auto net2 = models::build_network<float>(cfg, 8);
    checkpoint::apply(checkpoint::load(path), net2->params());

    Rng rng(606);
    bool pass = true;
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<float> v(static_cast<std::size_t>(3) * 128 * 128);
        for (auto& x : v) x = static_cast<float>(rng.uniform(0, 1));
        auto image = Tensor<float>::from({3, 128, 128}, std::move(v));
        auto a = net->forward(nullptr, image);
        auto b = net2->forward(nullptr, image);
        pass = pass && a.disc_prob.values() == b.disc_prob.values() &&
               a.cup_prob.values() == b.cup_prob.values();
    }
    report(6, pass, "(save -> load -> forward bit-exact on 10 random inputs)");
}

// ---- criterion 7: N=512 pipeline mechanics -----------------------------------

int run_cli(std::initializer_list<std::string> args) {
    std::vector<const char*> argv{"fundusseg"};
    std::vector<std::string> storage(args);
    for (const auto& a : storage) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

void criterion7() {
    // Reproducing Table 2 magnitudes needs the licensed datasets and long
    // training (documented stretch goal). Gate only the mechanics: the full
    // train + eval pipeline at N=512 runs and emits the Table 2 metric
    // columns on user-supplied data in the standard layout.
    const double t0 = now_s();
    const auto base = fs::temp_directory_path() / "fundus_acceptance_512";
    fs::remove_all(base);
    fs::create_directories(base);
    const auto ds = base / "ds";

    auto samples = data::gen_synthetic(5, 11, 512);
    data::save_dataset(ds.string(), samples);

    std::ofstream cfg(base / "paper.cfg");
    cfg << "preset = paper\nmodel = wroim\nepochs = 1\nseed = 7\naugment = false\n";
    cfg.close();

    const int rc_train = run_cli({"train", "--config", (base / "paper.cfg").string(), "--data",
                                  ds.string(), "--out", (base / "run").string()});
    const int rc_eval = run_cli({"eval", "--config", (base / "paper.cfg").string(), "--ckpt",
                                 (base / "run" / "best.ckpt").string(), "--data", ds.string(),
                                 "--out", (base / "eval").string()});
    bool pass = rc_train == 0 && rc_eval == 0;
    std::string detail = "train rc=" + std::to_string(rc_train) + " eval rc=" + std::to_string(rc_eval);
    if (pass) {
        std::ifstream rep(base / "eval" / "report.csv");
        std::stringstream ss;
        ss << rep.rdbuf();
        try {
            auto parsed = metrics::EvalReport::from_csv(ss.str());
            pass = parsed.rows.size() == samples.size();
            detail += ", report rows=" + std::to_string(parsed.rows.size());
        } catch (const std::exception& e) {
            pass = false;
            detail += std::string(", report parse: ") + e.what();
        }
    }
    char buf[256];
    std::snprintf(buf, sizeof buf, "(N=512 train+eval mechanics on synthetic stand-in; %s; %.0f s)",
                  detail.c_str(), now_s() - t0);
    report(7, pass, buf);
}

// ---- criterion 8: parameter accounting ---------------------------------------

void criterion8() {
    models::ModelConfig paper = desk_cfg(models::Kind::wroim);
    paper.frame = 512;
    paper.crop_base = 256;
    paper.depth = 4;
    paper.base_channels = 32;
    paper.weak_base_channels = 16;

    struct Ref {
        models::Kind kind;
        const char* name;
        double reference;
    };
    const Ref refs[] = {{models::Kind::wroim, "wroim", 7.8e6},
                        {models::Kind::psbn, "psbn", 10.9e6},
                        {models::Kind::twomodel, "twomodel", 15.6e6}};
    bool pass = true;
    std::string detail;
    for (const auto& r : refs) {
        const double count = static_cast<double>(models::count_params(paper, r.kind));
        const double ratio = count / r.reference;
        pass = pass && ratio > 1.0 / 3 && ratio < 3.0;
        char buf[96];
        std::snprintf(buf, sizeof buf, "%s %.2fM vs %.1fM ref (x%.2f) ", r.name, count / 1e6,
                      r.reference / 1e6, ratio);
        detail += buf;
    }
    report(8, pass, "(" + detail + ")");
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    auto enabled = [&](int c) { return wanted.empty() || wanted.count(c); };

    if (enabled(1)) criterion1();
    if (enabled(2)) criterion2();
    if (enabled(3)) criterion3();

    DeskRun desk;
    bool have_desk = false;
    if (enabled(4)) {
        desk = criterion4();
        have_desk = true;
    }
    if (enabled(5)) {
        if (!have_desk) {
            auto samples = data::gen_synthetic(8, 7, 128);
            desk = desk_run(samples);
            have_desk = true;
        }
        criterion5(desk);
    }
    if (enabled(6)) criterion6(have_desk ? &desk : nullptr);
    if (enabled(7)) criterion7();
    if (enabled(8)) criterion8();

    if (g_failures) {
        std::printf("%d criterion(s) FAILED\n", g_failures);
        return 3;
    }
    std::printf("all criteria passed\n");
    return 0;
}
