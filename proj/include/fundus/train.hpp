#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fundus/checkpoint.hpp"
#include "fundus/config.hpp"
#include "fundus/data.hpp"
#include "fundus/metrics.hpp"
#include "fundus/models.hpp"

namespace fundus::train {

struct EpochRow {
    int epoch = 0;  // 1-based
    double train_loss = 0;
    double val_loss = 0;
    double val_dice_disc = 0;
    double val_dice_cup = 0;
    int degenerate_crops = 0;
};

struct History {
    std::vector<EpochRow> rows;
    std::string to_csv() const;
};

// v <- momentum * v - lr * grad; w <- w + v (heavy-ball). Throws when a
// parameter is missing its gradient, naming the parameter path.
void sgd_step(ParamStore<float>& store, double lr, double momentum);

struct TrainResult {
    History history;
    checkpoint::Checkpoint best;       // lowest validation loss
    std::vector<std::string> train_ids, val_ids;
};

// Called after each epoch; returning true stops training early.
using EpochCallback = std::function<bool(const History&)>;

// Per epoch: seeded shuffle, per-sample augment (own stream per
// (seed, sample, epoch)), forward, loss, backward, SGD step; then mean
// validation loss and soft dice without augmentation. The best checkpoint is
// replaced only on strict improvement.
TrainResult run(models::Network<float>& net, const std::vector<data::Sample>& samples,
                const config::TrainConfig& tc, const data::AugmentConfig& aug,
                const metrics::MetricsConfig& mc, std::uint64_t config_hash,
                const EpochCallback& callback = {});

// No augmentation; soft dice, binarized IoU, CDR per sample plus means and
// forward-only wall-clock throughput.
metrics::EvalReport evaluate(const models::Network<float>& net,
                             const std::vector<data::Sample>& samples,
                             const metrics::MetricsConfig& mc);

}  // namespace fundus::train
