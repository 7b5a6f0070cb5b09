#pragma once

#include <cstdint>
#include <string>

#include "fundus/data.hpp"
#include "fundus/metrics.hpp"
#include "fundus/models.hpp"

namespace fundus::config {

// Training-loop settings (the architecture lives in models::ModelConfig).
struct TrainConfig {
    double lr = 1e-3;
    double momentum = 0.95;
    int batch_size = 1;
    int epochs = 100;
    std::uint64_t seed = 7;
    double train_frac = 0.8;
    double roi_weight = 1.0;
    bool augment = true;
};

// Full run configuration, read from a key=value file (one pair per line,
// '#' comments). Unknown keys are errors.
struct RunConfig {
    models::ModelConfig model;
    TrainConfig train;
    data::AugmentConfig aug;
    metrics::MetricsConfig metrics;
    bool clahe_enabled = true;
    double clahe_clip = 2.0;
    int clahe_tiles = 8;
    bool parallel = true;

    // Fingerprint of the architecture keys; checkpoints refuse to load into
    // a different architecture unless forced.
    std::uint64_t config_hash() const;

    void validate() const;
};

RunConfig parse_file(const std::string& path);
RunConfig parse_string(const std::string& text, const std::string& origin = "<string>");

// One line per key: name, default, meaning. Backs --help and the README.
std::string reference_text();

}  // namespace fundus::config
