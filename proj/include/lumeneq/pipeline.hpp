// SPDX-License-Identifier: Apache-2.0
//
// Supervised windows from a simulated link, the training regimen and
// inference for the neural equalizer.
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "lumeneq/channel.hpp"
#include "lumeneq/error.hpp"
#include "lumeneq/nn/model.hpp"

namespace lumeneq {

struct NormStats {
    double mean = 0.0;
    double std = 1.0;

    friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// Stride-1 windows of received samples, each labelled with its center bit.
struct WindowDataset {
    /// One row per window.
    Eigen::MatrixXd inputs;
    std::vector<std::uint8_t> targets;
    /// Bit index n predicted by each window; the window covers
    /// [n - center, n - center + length).
    std::vector<std::size_t> centers;
    int length = 64;
    int center = 32;
    /// Length of the realization the windows were cut from.
    std::size_t total_bits = 0;
    std::uint64_t config_hash = 0;
    Seed seed = 0;
    bool standardized = false;
    NormStats norm;

    [[nodiscard]] std::size_t size() const noexcept { return targets.size(); }
    [[nodiscard]] std::size_t first_index(std::size_t w) const { return centers[w] - static_cast<std::size_t>(center); }
    [[nodiscard]] std::size_t last_index(std::size_t w) const { return first_index(w) + static_cast<std::size_t>(length) - 1; }

    /// Rows `which`, in that order.
    [[nodiscard]] WindowDataset subset(const std::vector<std::size_t>& which) const;
    /// Appends another dataset's windows (pooled training).
    void append(const WindowDataset& other);
};

/// Window n covers received[n - center .. n - center + length - 1] and targets
/// bits[n], for n in [center, N - (length - center)).
WindowDataset make_windows(const LinkRealization& link, int length = 64, int center = 32);

/// Mean and population std over every sample of every window.
/// Throws DegenerateDataError when the std is zero.
NormStats compute_norm_stats(const WindowDataset& training);

/// (x - mean) / std with the given statistics, which are recorded on the result.
WindowDataset standardize(const WindowDataset& ds, const NormStats& stats);

/// Splits on the bit index floor(ratio * total_bits): windows entirely before
/// it go to training, windows entirely at or after it to validation, and
/// windows straddling it are discarded.
std::pair<WindowDataset, WindowDataset> contiguous_split(const WindowDataset& ds, double ratio = 0.8);

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 128;
    int max_epochs = 100;
    int early_stop_patience = 10;
    double lr_factor = 0.5;
    int lr_patience = 3;
    double min_lr = 1e-6;
    double split_ratio = 0.8;
    Seed seed = 0;

    void validate() const;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> val_accuracy;
    std::vector<double> val_precision;
    std::vector<double> val_recall;
    /// Learning rate used during each epoch.
    std::vector<double> learning_rate;
    int best_epoch = -1;
    bool early_stopped = false;

    [[nodiscard]] std::size_t epochs() const noexcept { return val_loss.size(); }
    [[nodiscard]] double best_val_loss() const {
        return best_epoch < 0 ? std::numeric_limits<double>::infinity() : val_loss[static_cast<std::size_t>(best_epoch)];
    }
};

/// Training diverged (non-finite loss). Carries the history up to that point.
class TrainingFailure : public Error {
public:
    TrainingFailure(const std::string& what, TrainHistory history) : Error(what), history_(std::move(history)) {}
    [[nodiscard]] const TrainHistory& history() const noexcept { return history_; }

private:
    TrainHistory history_;
};

/// Validation-loss bookkeeping shared by plateau LR reduction and early
/// stopping. Improvement means strictly lower than the best so far.
class PlateauMonitor {
public:
    struct Decision {
        bool improved = false;
        bool reduce_lr = false;
        bool stop = false;
    };

    PlateauMonitor(int lr_patience, int stop_patience) : lr_patience_(lr_patience), stop_patience_(stop_patience) {}

    Decision observe(double val_loss);

    [[nodiscard]] double best() const noexcept { return best_; }

private:
    int lr_patience_;
    int stop_patience_;
    double best_ = std::numeric_limits<double>::infinity();
    int lr_wait_ = 0;
    int stop_wait_ = 0;
};

struct ValidationResult {
    double loss = 0.0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

/// Loss (cross-entropy plus L2) and metrics in inference mode.
ValidationResult evaluate_dataset(const nn::ModelParams<float>& params, const WindowDataset& ds);

/// Called after every epoch with (epoch index, history so far).
using EpochCallback = std::function<void(int, const TrainHistory&)>;

struct TrainResult {
    nn::ModelParams<float> params;
    TrainHistory history;
};

/// Mini-batch Adam on binary cross-entropy plus L2, with plateau LR halving,
/// early stopping and restore-best. Deterministic in (params, data, cfg).
TrainResult train_equalizer(nn::ModelParams<float> params, const WindowDataset& train, const WindowDataset& val,
                            const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// A trained network with everything needed to apply it to new data.
struct TrainedModel {
    nn::ModelParams<float> params;
    NormStats norm;
    std::uint64_t channel_config_hash = 0;
    Seed seed = 0;
};

struct Prediction {
    Eigen::VectorXd probs;
    BitSequence bits;
};

/// Inference-mode probabilities; bit = 1 iff prob >= threshold. The windows
/// must have been standardized with the model's statistics.
Prediction predict_bits(const TrainedModel& model, const WindowDataset& windows, double threshold = 0.5);

/// Probabilities only, for raw parameter sets.
Eigen::VectorXd predict_probs(const nn::ModelParams<float>& params, const WindowDataset& windows);

}  // namespace lumeneq
