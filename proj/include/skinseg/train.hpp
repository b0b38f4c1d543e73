#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "skinseg/dataset.hpp"
#include "skinseg/imgio.hpp"
#include "skinseg/losses.hpp"
#include "skinseg/skinny.hpp"

namespace skinseg::train {

struct TrainSample {
    Image input;
    BinaryMask truth;
    /// Pixels that contribute to the loss.
    BinaryMask loss_mask;
};

/// Builds a sample whose loss mask is all-true.
TrainSample make_train_sample(Image input, BinaryMask truth);

enum class Branch { None, Skin, NonSkin };

Branch parse_branch(std::string_view s);

/// The network always sees the whole image; the loss is restricted to the BC skin
/// region (Skin), its complement (NonSkin), or nothing (None).
TrainSample stratify_sample(const SamplePair& sample, const BinaryMask& bc_mask, Branch branch);

struct TrainConfig {
    int epochs = 200;
    double lr = 1e-3;
    int batch_size = 4;
    LossWeights loss_weights{};
    std::uint64_t seed = 0;
    /// Save the current weights every N epochs to checkpoint_path; 0 disables.
    int checkpoint_every = 0;
    std::filesystem::path checkpoint_path;
    double val_threshold = 0.5;

    void validate() const;
};

struct TrainRecord {
    std::vector<double> train_loss;
    std::vector<double> val_f_score;
    int best_epoch = -1;
    double wall_seconds = 0.0;
    bool diverged = false;

    std::size_t epochs_completed() const noexcept { return train_loss.size(); }
};

struct TrainResult {
    skinny::WeightStore weights;
    TrainRecord record;
};

struct EpochReport {
    int epoch;
    double train_loss;
    double val_f_score;
};

/// Seeded mini-batch Adam on the coupled loss. Returns the weights of the epoch
/// with the best validation F-score (the final epoch when `val` is empty).
TrainResult train_model(const skinny::NetworkConfig& config, const TrainConfig& tcfg,
                        std::span<const TrainSample> samples, std::span<const TrainSample> val = {},
                        const std::function<void(const EpochReport&)>& on_epoch = {});

/// Pixel-pooled F-score of the model binarized at `threshold` over `samples`.
double validation_f_score(const skinny::WeightStore& weights, std::span<const TrainSample> samples,
                          double threshold = 0.5);

std::string record_to_json(const TrainRecord& record, bool include_timing = true);

}  // namespace skinseg::train
