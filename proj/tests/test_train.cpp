#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fundus/checkpoint.hpp"
#include "fundus/errors.hpp"
#include "fundus/train.hpp"

using namespace fundus;
namespace fs = std::filesystem;

namespace {

models::ModelConfig tiny_cfg(models::Kind kind) {
    models::ModelConfig cfg;
    cfg.kind = kind;
    cfg.frame = 32;
    cfg.crop_base = 16;
    cfg.depth = 2;
    cfg.base_channels = 4;
    cfg.convs_per_block = 1;
    cfg.weak_base_channels = 2;
    return cfg;
}

config::TrainConfig tiny_train(int epochs) {
    config::TrainConfig tc;
    tc.epochs = epochs;
    tc.seed = 7;
    tc.augment = false;
    return tc;
}

}  // namespace

TEST_CASE("sgd_step examples") {
    SUBCASE("plain step") {
        ParamStore<float> s;
        auto& p = s.add("w", {1});
        p.value = {1.0f};
        p.grad = {1.0f};
        train::sgd_step(s, 0.1, 0.0);
        CHECK(p.value[0] == doctest::Approx(0.9f));
    }
    SUBCASE("two momentum steps: 1 -> 0.9 -> 0.705") {
        ParamStore<float> s;
        auto& p = s.add("w", {1});
        p.value = {1.0f};
        p.grad = {1.0f};
        train::sgd_step(s, 0.1, 0.95);
        CHECK(p.value[0] == doctest::Approx(0.9f));
        p.grad = {1.0f};
        train::sgd_step(s, 0.1, 0.95);
        CHECK(p.value[0] == doctest::Approx(0.705f));
    }
    SUBCASE("zero gradient with zero velocity leaves parameters unchanged") {
        ParamStore<float> s;
        auto& a = s.add("a", {2});
        a.value = {1.0f, 2.0f};
        a.grad = {0.0f, 0.0f};
        auto& b = s.add("b", {1});
        b.value = {3.0f};
        b.grad = {0.5f};
        train::sgd_step(s, 0.1, 0.9);
        CHECK(a.value == std::vector<float>{1.0f, 2.0f});
        CHECK(b.value[0] != 3.0f);  // only the nonzero gradient moves
    }
    SUBCASE("missing gradient names the parameter") {
        ParamStore<float> s;
        auto& p = s.add("enc.b0.c0.w", {2});
        p.value = {1.0f, 1.0f};
        CHECK_THROWS_WITH_AS(train::sgd_step(s, 0.1, 0.9), doctest::Contains("enc.b0.c0.w"),
                             std::runtime_error);
    }
}

TEST_CASE("checkpoint round trip preserves forward outputs bit-exactly") {
    auto cfg = tiny_cfg(models::Kind::wroim);
    auto net = models::build_network<float>(cfg, 11);
    auto dir = fs::temp_directory_path() / "fundus_ckpt_test";
    fs::create_directories(dir);
    const std::string path = (dir / "t.ckpt").string();

    auto ck = checkpoint::snapshot(net->params(), 0xabcd, 9, 0.125f);
    checkpoint::save(ck, path);
    auto back = checkpoint::load(path);
    CHECK(back.epoch == 9);
    CHECK(back.val_loss == 0.125f);
    CHECK(back.config_hash == 0xabcd);

    auto net2 = models::build_network<float>(cfg, 999);  // different init
    checkpoint::apply(back, net2->params());

    Rng rng(3);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<float> v(3 * 32 * 32);
        for (auto& x : v) x = static_cast<float>(rng.uniform(0, 1));
        auto image = Tensor<float>::from({3, 32, 32}, v);
        auto a = net->forward(nullptr, image);
        auto b = net2->forward(nullptr, image);
        CHECK(a.disc_prob.values() == b.disc_prob.values());
        CHECK(a.cup_prob.values() == b.cup_prob.values());
    }

    SUBCASE("file size tracks 4 bytes per parameter plus header and names") {
        const auto size = fs::file_size(path);
        const auto payload = 4 * static_cast<std::uintmax_t>(net->param_count());
        CHECK(size > payload);
        CHECK(size < payload + 8192);
    }
    SUBCASE("corrupted magic is rejected") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(2);
        f.put('x');
        f.close();
        CHECK_THROWS_WITH_AS(checkpoint::load(path), doctest::Contains("bad magic"), DataError);
    }
    SUBCASE("truncation is reported") {
        auto bytes = fs::file_size(path);
        fs::resize_file(path, bytes - 37);
        CHECK_THROWS_WITH_AS(checkpoint::load(path), doctest::Contains("truncated"), DataError);
    }
    SUBCASE("architecture mismatch is reported") {
        auto other = models::build_network<float>(tiny_cfg(models::Kind::twomodel), 1);
        CHECK_THROWS_WITH_AS(checkpoint::apply(back, other->params()),
                             doctest::Contains("incompatible checkpoint"), DataError);
    }
}

TEST_CASE("resume checkpoints carry velocity") {
    auto cfg = tiny_cfg(models::Kind::twomodel);
    auto net = models::build_network<float>(cfg, 5);
    for (std::size_t i = 0; i < net->params().size(); ++i) {
        auto& p = net->params().at(i);
        p.velocity.assign(p.value.size(), 0.25f);
    }
    auto dir = fs::temp_directory_path() / "fundus_ckpt_resume";
    fs::create_directories(dir);
    const std::string path = (dir / "r.ckpt").string();
    checkpoint::save(checkpoint::snapshot(net->params(), 1, 2, 0.5f, /*with_velocity=*/true), path);

    auto back = checkpoint::load(path);
    CHECK(back.kind == 1);
    auto net2 = models::build_network<float>(cfg, 6);
    checkpoint::apply(back, net2->params(), /*with_velocity=*/true);
    CHECK(net2->params().at(0).velocity == std::vector<float>(net2->params().at(0).velocity.size(), 0.25f));
}

TEST_CASE("training loop") {
    auto samples = data::gen_synthetic(6, 19, 32);
    auto cfg = tiny_cfg(models::Kind::wroim);
    metrics::MetricsConfig mc;
    data::AugmentConfig ac;

    SUBCASE("two runs with the same seed produce identical histories") {
        auto net1 = models::build_network<float>(cfg, 7);
        auto r1 = train::run(*net1, samples, tiny_train(3), ac, mc, 1);
        auto net2 = models::build_network<float>(cfg, 7);
        auto r2 = train::run(*net2, samples, tiny_train(3), ac, mc, 1);
        CHECK(r1.history.to_csv() == r2.history.to_csv());
        REQUIRE(r1.history.rows.size() == 3);
    }
    SUBCASE("best checkpoint has the minimum validation loss in history") {
        auto net = models::build_network<float>(cfg, 7);
        auto r = train::run(*net, samples, tiny_train(4), ac, mc, 1);
        double best = 1e300;
        for (const auto& row : r.history.rows) best = std::min(best, row.val_loss);
        CHECK(static_cast<double>(r.best.val_loss) == doctest::Approx(best).epsilon(1e-6));
        CHECK(r.train_ids.size() == 5);  // ceil(0.8 * 6)
        CHECK(r.val_ids.size() == 1);
    }
    SUBCASE("validation metrics come from unaugmented samples") {
        config::TrainConfig tc = tiny_train(1);
        tc.augment = true;  // aggressive augmentation on the train side only
        data::AugmentConfig wild;
        wild.rotate_max_deg = 50;
        auto net = models::build_network<float>(cfg, 7);
        auto r = train::run(*net, samples, tc, wild, mc, 1);
        // best checkpoint == params after epoch 1; recompute val loss by hand
        std::vector<data::Sample> val;
        for (const auto& s : samples)
            for (const auto& id : r.val_ids)
                if (s.id == id) val.push_back(s);
        double manual = 0;
        for (const auto& v : val) {
            auto out = net->forward(nullptr, v.image);
            manual += net->loss(out, v.disc, v.cup, 1e-5f, 1.0f).item();
        }
        manual /= static_cast<double>(val.size());
        CHECK(r.history.rows[0].val_loss == doctest::Approx(manual).epsilon(1e-9));
    }
    SUBCASE("early-stop callback halts training") {
        auto net = models::build_network<float>(cfg, 7);
        int calls = 0;
        auto r = train::run(*net, samples, tiny_train(10), ac, mc, 1,
                            [&](const train::History& h) {
                                ++calls;
                                return h.rows.size() >= 2;
                            });
        CHECK(calls == 2);
        CHECK(r.history.rows.size() == 2);
    }
    SUBCASE("non-finite loss aborts with sample id and epoch") {
        // a poisoned head weight reaches the loss directly (no relu after the
        // head to absorb the NaN)
        auto net = models::build_network<float>(cfg, 7);
        net->params().find("main.dec.head.b")->value[0] = std::numeric_limits<float>::quiet_NaN();
        CHECK_THROWS_WITH_AS(train::run(*net, samples, tiny_train(1), ac, mc, 1),
                             doctest::Contains("epoch 1"), DataError);
    }
}

namespace {

// Returns the sample's own masks regardless of the image: an oracle network
// for exercising the evaluation path.
class IdentityStub : public models::Network<float> {
public:
    IdentityStub(const models::ModelConfig& cfg, MaskImage disc, MaskImage cup)
        : models::Network<float>(cfg, true), disc_(std::move(disc)), cup_(std::move(cup)) {}

    models::ForwardOut<float> forward(Tape<float>*, const Tensor<float>&) const override {
        models::ForwardOut<float> out;
        std::vector<float> d(disc_.v.begin(), disc_.v.end());
        std::vector<float> c(cup_.v.begin(), cup_.v.end());
        out.disc_prob = Tensor<float>::from({1, disc_.height, disc_.width}, std::move(d));
        out.cup_prob = Tensor<float>::from({1, cup_.height, cup_.width}, std::move(c));
        out.window = CropWindow{0, 0, disc_.height, disc_.width};
        return out;
    }
    Tensor<float> loss(const models::ForwardOut<float>&, const MaskImage&, const MaskImage&, float,
                       float) const override {
        return Tensor<float>::scalar(0.0f);
    }

private:
    MaskImage disc_, cup_;
};

}  // namespace

TEST_CASE("evaluate") {
    auto samples = data::gen_synthetic(4, 29, 32);
    // identical masks across samples so the stub is exact for all of them
    for (auto& s : samples) {
        s.disc = samples[0].disc;
        s.cup = samples[0].cup;
    }
    auto cfg = tiny_cfg(models::Kind::twomodel);
    IdentityStub stub(cfg, samples[0].disc, samples[0].cup);
    metrics::MetricsConfig mc;
    auto rep = train::evaluate(stub, samples, mc);

    REQUIRE(rep.rows.size() == 4);  // + MEAN row in the CSV
    const std::string csv = rep.to_csv();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
    for (const auto& r : rep.rows) {
        CHECK(r.dice_disc == doctest::Approx(1.0).epsilon(1e-4));
        CHECK(r.dice_cup == doctest::Approx(1.0).epsilon(1e-4));
        CHECK(r.iou_disc == 1.0);
        CHECK(r.iou_cup == 1.0);
        CHECK(r.cdr == doctest::Approx(metrics::vertical_cdr(samples[0].disc, samples[0].cup)));
    }
    CHECK(rep.images_per_sec > 0);

    SUBCASE("rows agree with independent pixel-count oracles on a real model") {
        auto net = models::build_network<float>(cfg, 13);
        auto r2 = train::evaluate(*net, samples, mc);
        for (std::size_t i = 0; i < samples.size(); ++i) {
            auto out = net->forward(nullptr, samples[i].image);
            CHECK(r2.rows[i].dice_disc ==
                  doctest::Approx(metrics::dice(samples[i].disc, out.disc_prob, mc.eps)).epsilon(1e-12));
            MaskImage dm = roi::binarize(out.disc_prob.ptr(), 32, 32, mc.iou_threshold);
            CHECK(r2.rows[i].iou_disc == doctest::Approx(metrics::iou(samples[i].disc, dm)).epsilon(1e-12));
        }
    }
}
