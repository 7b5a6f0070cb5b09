#include "fundus/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "fundus/errors.hpp"
#include "fundus/roi.hpp"

namespace fundus::train {

std::string History::to_csv() const {
    std::ostringstream os;
    os << "epoch,train_loss,val_loss,val_dice_disc,val_dice_cup,degenerate_crops\n";
    char buf[192];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%d\n", r.epoch, r.train_loss,
                      r.val_loss, r.val_dice_disc, r.val_dice_cup, r.degenerate_crops);
        os << buf;
    }
    return os.str();
}

void sgd_step(ParamStore<float>& store, double lr, double momentum) {
    for (std::size_t i = 0; i < store.size(); ++i) {
        auto& p = store.at(i);
        if (p.grad.size() != p.value.size())
            throw std::runtime_error("sgd_step: parameter '" + p.path + "' has no gradient");
        if (p.velocity.size() != p.value.size()) p.velocity.assign(p.value.size(), 0.0f);
        const float m = static_cast<float>(momentum);
        const float step = static_cast<float>(lr);
        for (std::size_t e = 0; e < p.value.size(); ++e) {
            p.velocity[e] = m * p.velocity[e] - step * p.grad[e];
            p.value[e] += p.velocity[e];
        }
    }
}

namespace {

struct ValScore {
    double loss = 0, dice_disc = 0, dice_cup = 0;
};

ValScore score_set(const models::Network<float>& net, const std::vector<data::Sample>& set,
                   double eps, double roi_weight) {
    ValScore v;
    for (const auto& s : set) {
        auto out = net.forward(nullptr, s.image);
        v.loss += net.loss(out, s.disc, s.cup, static_cast<float>(eps),
                           static_cast<float>(roi_weight))
                      .item();
        v.dice_disc += metrics::dice(s.disc, out.disc_prob, eps);
        v.dice_cup += metrics::dice(s.cup, out.cup_prob, eps);
    }
    const double n = static_cast<double>(set.size());
    v.loss /= n;
    v.dice_disc /= n;
    v.dice_cup /= n;
    return v;
}

}  // namespace

TrainResult run(models::Network<float>& net, const std::vector<data::Sample>& samples,
                const config::TrainConfig& tc, const data::AugmentConfig& aug,
                const metrics::MetricsConfig& mc, std::uint64_t config_hash,
                const EpochCallback& callback) {
    auto [train_set, val_set] = data::split(samples, tc.train_frac, tc.seed);
    if (val_set.empty())
        throw DataError("validation split is empty (" + std::to_string(samples.size()) +
                        " samples at train_frac " + std::to_string(tc.train_frac) +
                        "); provide more samples");

    TrainResult result;
    for (const auto& s : train_set) result.train_ids.push_back(s.id);
    for (const auto& s : val_set) result.val_ids.push_back(s.id);

    const float eps = static_cast<float>(mc.eps);
    const float roi_w = static_cast<float>(tc.roi_weight);
    double best_val = std::numeric_limits<double>::infinity();

    std::vector<int> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(tc.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double train_loss = 0;
        int degenerate = 0;
        std::size_t pos = 0;
        while (pos < order.size()) {
            const std::size_t batch_end = std::min(pos + static_cast<std::size_t>(tc.batch_size),
                                                   order.size());
            const int batch_n = static_cast<int>(batch_end - pos);
            net.params().zero_grad();
            for (; pos < batch_end; ++pos) {
                const data::Sample& base = train_set[order[pos]];
                data::Sample sample;
                const data::Sample* use = &base;
                if (tc.augment) {
                    Rng aug_rng(hash_combine(
                        derive_seed(tc.seed, "augment", static_cast<std::uint64_t>(epoch)),
                        fnv1a64(base.id)));
                    sample = data::augment(base, aug, aug_rng);
                    use = &sample;
                }
                Tape<float> tape;
                auto out = net.forward(&tape, use->image);
                if (out.degenerate) ++degenerate;
                Tensor<float> loss = net.loss(out, use->disc, use->cup, eps, roi_w);
                const double lv = loss.item();
                if (!std::isfinite(lv))
                    throw DataError("non-finite training loss at epoch " + std::to_string(epoch) +
                                    " on sample '" + base.id + "'");
                train_loss += lv;
                tape.backward(loss);
            }
            if (batch_n > 1) {
                const float inv = 1.0f / static_cast<float>(batch_n);
                for (std::size_t i = 0; i < net.params().size(); ++i)
                    for (auto& g : net.params().at(i).grad) g *= inv;
            }
            sgd_step(net.params(), tc.lr, tc.momentum);
        }
        train_loss /= static_cast<double>(train_set.size());

        const ValScore val = score_set(net, val_set, mc.eps, tc.roi_weight);
        if (!std::isfinite(val.loss))
            throw DataError("non-finite validation loss at epoch " + std::to_string(epoch));

        result.history.rows.push_back(EpochRow{epoch, train_loss, val.loss, val.dice_disc,
                                               val.dice_cup, degenerate});
        if (val.loss < best_val) {
            best_val = val.loss;
            result.best = checkpoint::snapshot(net.params(), config_hash,
                                               static_cast<std::uint32_t>(epoch),
                                               static_cast<float>(val.loss));
        }
        if (callback && callback(result.history)) break;
    }
    return result;
}

metrics::EvalReport evaluate(const models::Network<float>& net,
                             const std::vector<data::Sample>& samples,
                             const metrics::MetricsConfig& mc) {
    metrics::EvalReport rep;
    if (samples.empty()) throw DataError("evaluate: no samples");
    const int frame = net.config().frame;
    double forward_seconds = 0;
    double bin_disc_sum = 0, bin_cup_sum = 0;

    for (const auto& s : samples) {
        const auto t0 = std::chrono::steady_clock::now();
        auto out = net.forward(nullptr, s.image);
        forward_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        metrics::EvalRow row;
        row.id = s.id;
        row.dice_disc = metrics::dice(s.disc, out.disc_prob, mc.eps);
        row.dice_cup = metrics::dice(s.cup, out.cup_prob, mc.eps);

        MaskImage disc_m = roi::binarize(out.disc_prob.ptr(), frame, frame, mc.iou_threshold);
        MaskImage cup_m = roi::binarize(out.cup_prob.ptr(), frame, frame, mc.iou_threshold);
        for (std::size_t e = 0; e < cup_m.v.size(); ++e) cup_m.v[e] &= disc_m.v[e];
        row.iou_disc = metrics::iou(s.disc, disc_m);
        row.iou_cup = metrics::iou(s.cup, cup_m);
        row.cdr = disc_m.empty_mask() ? 0.0 : metrics::vertical_cdr(disc_m, cup_m);
        bin_disc_sum += metrics::binary_dice(s.disc, disc_m);
        bin_cup_sum += metrics::binary_dice(s.cup, cup_m);

        rep.mean.dice_disc += row.dice_disc;
        rep.mean.iou_disc += row.iou_disc;
        rep.mean.dice_cup += row.dice_cup;
        rep.mean.iou_cup += row.iou_cup;
        rep.mean.cdr += row.cdr;
        rep.rows.push_back(std::move(row));
    }
    const double n = static_cast<double>(samples.size());
    rep.mean.dice_disc /= n;
    rep.mean.iou_disc /= n;
    rep.mean.dice_cup /= n;
    rep.mean.iou_cup /= n;
    rep.mean.cdr /= n;
    rep.dice_disc_binary = bin_disc_sum / n;
    rep.dice_cup_binary = bin_cup_sum / n;
    rep.images_per_sec = forward_seconds > 0 ? n / forward_seconds : 0;
    return rep;
}

}  // namespace fundus::train
