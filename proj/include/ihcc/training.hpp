#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ihcc/corpus.hpp"
#include "ihcc/losses.hpp"
#include "ihcc/model.hpp"

namespace ihcc {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 128;
    double learning_rate = 3e-4;
    double weight_decay = 1e-4;
    double tau_I = 0.5;
    double tau_C = 1.0;
    SBPriorConfig sb;
    std::uint64_t seed = 0;
    int checkpoint_every = 0; // epochs; 0 writes only the final checkpoint
    AugmentationConfig augmentation;
    bool use_participant_head = true; // false trains without l_ps (ablation)
    double bn_momentum = 0.1;

    void validate() const;
    LossConfig loss_config() const;
    std::string diff(const TrainConfig& other) const;
};

struct EpochLog {
    int epoch = 0; // 1-based
    int steps = 0;
    LossBreakdown loss; // step means
};

// Adaptive-moment optimizer state; L2 weight decay is added to the gradient.
struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::int64_t step = 0;
    nn::ParamSet<float> m, v;
};

struct TrainState {
    ModelConfig model_config;
    TrainConfig train_config;
    ModelState<float> model;
    AdamState adam;
    int epochs_done = 0;
    std::vector<EpochLog> log;
};

// Fresh state: initialized model and zeroed optimizer moments.
TrainState init_train_state(const ModelConfig& model_config, const TrainConfig& train_config);

// Participant ids of the manifest mapped to head indices in first-appearance order.
std::vector<int> participant_labels(const Manifest& manifest);

struct TrainHooks {
    std::function<void(const TrainState&, const EpochLog&)> on_epoch;
    // Directory for epoch checkpoints (ckpt_epoch<e>.bin) and final.bin; empty disables.
    std::filesystem::path checkpoint_dir;
};

// Runs epochs epochs_done+1 .. until_epoch (train_config.epochs when < 0).
// Every draw is derived from (seed, epoch, step), so resuming a checkpoint
// reproduces the uninterrupted run. Throws TrainingError naming the loss
// component or parameter tensor that became non-finite; parameters are never
// left non-finite.
void train(const Manifest& manifest, TrainState& state, const TrainHooks& hooks = {}, int until_epoch = -1);

// Convenience wrapper: init_train_state then train.
TrainState train(const Manifest& manifest, const ModelConfig& model_config, const TrainConfig& train_config,
                 const TrainHooks& hooks = {});

// Binary checkpoint: magic, format version, JSON header (configs, progress,
// loss log), raw tensors, checksum.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
// Throws DataError on a corrupt, truncated, or wrong-version file.
TrainState load_checkpoint(const std::filesystem::path& path);
// Additionally rejects a checkpoint whose model config differs, listing the fields.
TrainState load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

// Un-augmented forward pass over all records in eval mode, in batches.
ForwardOutput<float> predict(const ModelState<float>& model, const Manifest& manifest, int batch_size = 128);

} // namespace ihcc
