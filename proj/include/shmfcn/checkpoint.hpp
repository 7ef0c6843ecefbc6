#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "shmfcn/dataset.hpp"
#include "shmfcn/model.hpp"
#include "shmfcn/train.hpp"

namespace shmfcn {

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointMeta {
    Task task = Task::Localization;
    LoadCase load_case = LoadCase::Sinusoidal;
    int n_stories = 8;
    std::uint64_t seed = 0;
    std::uint64_t training_hash = 0;
    int best_epoch = -1;
    int epochs_completed = 0;
    std::string history_digest;  // fnv1a64 of the history CSV text
};

struct Checkpoint {
    nn::NetworkParams<float> params;
    CheckpointMeta meta;
    std::optional<TrainState> state;  // present when saved for resuming
};

/// Directory layout: checkpoint.json, params.f32 (trainable vector then
/// buffers, little-endian float32) and, with a train state, last.f32,
/// adam.f32 (first then second moments) and history.csv.
void save_checkpoint(const std::filesystem::path& dir, const nn::NetworkParams<float>& params,
                     const CheckpointMeta& meta, const TrainState* state = nullptr);

Checkpoint load_checkpoint(const std::filesystem::path& dir, bool with_state = false);

std::string history_digest(const TrainHistory& history);

}  // namespace shmfcn
