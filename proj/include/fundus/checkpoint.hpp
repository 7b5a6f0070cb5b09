#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fundus/tape.hpp"

namespace fundus::checkpoint {

// Binary checkpoint, little-endian throughout:
//   magic "WROIM1", u32 version, u8 kind (0 weights, 1 resume with
//   velocity), u64 config hash, u32 epoch, f32 val_loss, u32 entry count,
//   then per entry: u16 path length, path bytes, u8 ndim, u32 dims...,
//   f32 values..., and for resume checkpoints f32 velocity...
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    std::uint8_t kind = 0;  // 0 = weights only ("best"), 1 = resume
    std::uint64_t config_hash = 0;
    std::uint32_t epoch = 0;
    float val_loss = 0;

    struct Entry {
        std::string path;
        std::vector<int> shape;
        std::vector<float> value;
        std::vector<float> velocity;  // resume checkpoints only
    };
    std::vector<Entry> entries;
};

Checkpoint snapshot(const ParamStore<float>& store, std::uint64_t config_hash,
                    std::uint32_t epoch, float val_loss, bool with_velocity = false);

// Writes parameters (and velocity, for resume checkpoints) back into a store
// built from the same architecture; path or shape mismatches throw. The
// config-hash gate lives at the CLI, where --force can bypass it.
void apply(const Checkpoint& ckpt, ParamStore<float>& store, bool with_velocity = false);

void save(const Checkpoint& ckpt, const std::string& path);
Checkpoint load(const std::string& path);

}  // namespace fundus::checkpoint
