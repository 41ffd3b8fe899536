// SPDX-License-Identifier: Apache-2.0
#include "lumeneq/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lumeneq/metrics.hpp"
#include "lumeneq/nn/adam.hpp"

namespace lumeneq {

namespace {

constexpr Eigen::Index kInferenceChunk = 1024;

nn::Tensor<float> gather_batch(const Eigen::MatrixXd& inputs, const std::vector<std::size_t>& order,
                               std::size_t first, std::size_t count) {
    const auto B = static_cast<Eigen::Index>(count), T = inputs.cols();
    nn::Tensor<float> x(B, T, 1);
    for (Eigen::Index t = 0; t < T; ++t) {
        for (Eigen::Index b = 0; b < B; ++b) {
            x.data(t * B + b, 0) = static_cast<float>(inputs(static_cast<Eigen::Index>(order[first + b]), t));
        }
    }
    return x;
}

void require_standardized(const WindowDataset& ds, const char* what) {
    if (!ds.standardized) {
        throw ContractViolation(std::string(what) + ": windows are not standardized");
    }
}

}  // namespace

WindowDataset WindowDataset::subset(const std::vector<std::size_t>& which) const {
    WindowDataset out;
    out.inputs.resize(static_cast<Eigen::Index>(which.size()), inputs.cols());
    out.targets.reserve(which.size());
    out.centers.reserve(which.size());
    for (std::size_t k = 0; k < which.size(); ++k) {
        out.inputs.row(static_cast<Eigen::Index>(k)) = inputs.row(static_cast<Eigen::Index>(which[k]));
        out.targets.push_back(targets[which[k]]);
        out.centers.push_back(centers[which[k]]);
    }
    out.length = length;
    out.center = center;
    out.total_bits = total_bits;
    out.config_hash = config_hash;
    out.seed = seed;
    out.standardized = standardized;
    out.norm = norm;
    return out;
}

void WindowDataset::append(const WindowDataset& other) {
    if (size() == 0) {
        *this = other;
        return;
    }
    if (other.length != length || other.center != center || other.standardized != standardized ||
        !(other.norm == norm)) {
        throw ContractViolation("WindowDataset::append: incompatible datasets");
    }
    Eigen::MatrixXd merged(inputs.rows() + other.inputs.rows(), inputs.cols());
    merged << inputs, other.inputs;
    inputs = std::move(merged);
    targets.insert(targets.end(), other.targets.begin(), other.targets.end());
    centers.insert(centers.end(), other.centers.begin(), other.centers.end());
    total_bits = std::max(total_bits, other.total_bits);
}

WindowDataset make_windows(const LinkRealization& link, int length, int center) {
    if (length < 1 || center < 0 || center >= length) {
        throw ConfigError("make_windows: center must lie inside the window");
    }
    const std::size_t N = link.size();
    if (N <= static_cast<std::size_t>(length)) {
        throw InsufficientDataError("make_windows: realization of " + std::to_string(N) +
                                    " samples is not longer than one window of " + std::to_string(length));
    }
    const std::size_t first = static_cast<std::size_t>(center);
    const std::size_t end = N - static_cast<std::size_t>(length - center);
    const std::size_t count = end - first;
    WindowDataset ds;
    ds.inputs.resize(static_cast<Eigen::Index>(count), length);
    ds.targets.resize(count);
    ds.centers.resize(count);
    for (std::size_t w = 0; w < count; ++w) {
        const std::size_t n = first + w;
        ds.inputs.row(static_cast<Eigen::Index>(w)) =
            link.received.segment(static_cast<Eigen::Index>(n - first), length).transpose();
        ds.targets[w] = link.bits[n];
        ds.centers[w] = n;
    }
    ds.length = length;
    ds.center = center;
    ds.total_bits = N;
    ds.config_hash = link.config.hash();
    ds.seed = link.config.seed;
    return ds;
}

NormStats compute_norm_stats(const WindowDataset& training) {
    if (training.size() == 0) {
        throw InsufficientDataError("compute_norm_stats: empty training set");
    }
    const double n = static_cast<double>(training.inputs.size());
    const double mean = training.inputs.sum() / n;
    const double var = (training.inputs.array() - mean).square().sum() / n;
    const double std = std::sqrt(var);
    // Summation roundoff leaves a constant input with a std near 1e-17 * |mean|.
    if (!(std > 1e-12 * std::max(1.0, std::abs(mean))) || !std::isfinite(std)) {
        throw DegenerateDataError("compute_norm_stats: training inputs have zero variance");
    }
    return {mean, std};
}

WindowDataset standardize(const WindowDataset& ds, const NormStats& stats) {
    if (!(stats.std > 0.0)) {
        throw DegenerateDataError("standardize: std must be positive");
    }
    WindowDataset out = ds;
    out.inputs = (ds.inputs.array() - stats.mean) / stats.std;
    // A second pass composes with the first, so the recorded statistics
    // still map raw samples to the stored inputs.
    out.norm = ds.standardized ? NormStats{ds.norm.mean + ds.norm.std * stats.mean, ds.norm.std * stats.std} : stats;
    out.standardized = true;
    return out;
}

std::pair<WindowDataset, WindowDataset> contiguous_split(const WindowDataset& ds, double ratio) {
    if (ds.size() == 0) {
        throw InsufficientDataError("contiguous_split: empty dataset");
    }
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw ConfigError("contiguous_split: ratio must lie in (0, 1)");
    }
    const auto boundary = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(ds.total_bits)));
    std::vector<std::size_t> train_rows, val_rows;
    for (std::size_t w = 0; w < ds.size(); ++w) {
        if (ds.last_index(w) < boundary) {
            train_rows.push_back(w);
        } else if (ds.first_index(w) >= boundary) {
            val_rows.push_back(w);
        }
    }
    if (train_rows.size() < 2 || val_rows.empty()) {
        throw InsufficientDataError("contiguous_split: " + std::to_string(train_rows.size()) + " training and " +
                                    std::to_string(val_rows.size()) + " validation windows");
    }
    return {ds.subset(train_rows), ds.subset(val_rows)};
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
    if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
    if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (early_stop_patience < 1 || lr_patience < 1) throw ConfigError("train: patience values must be >= 1");
    if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw ConfigError("train: lr_factor must lie in (0, 1)");
    if (!(min_lr >= 0.0) || min_lr > learning_rate) throw ConfigError("train: min_lr must lie in [0, learning_rate]");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("train: split_ratio must lie in (0, 1)");
}

PlateauMonitor::Decision PlateauMonitor::observe(double val_loss) {
    Decision d;
    if (val_loss < best_) {
        best_ = val_loss;
        lr_wait_ = 0;
        stop_wait_ = 0;
        d.improved = true;
        return d;
    }
    if (++lr_wait_ >= lr_patience_) {
        d.reduce_lr = true;
        lr_wait_ = 0;
    }
    if (++stop_wait_ >= stop_patience_) {
        d.stop = true;
    }
    return d;
}

Eigen::VectorXd predict_probs(const nn::ModelParams<float>& params, const WindowDataset& windows) {
    if (windows.inputs.cols() != params.arch.window) {
        throw ShapeError("predict: window length " + std::to_string(windows.inputs.cols()) + " but model expects " +
                         std::to_string(params.arch.window));
    }
    const std::size_t n = windows.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Eigen::VectorXd probs(static_cast<Eigen::Index>(n));
    for (std::size_t first = 0; first < n; first += kInferenceChunk) {
        const std::size_t count = std::min<std::size_t>(kInferenceChunk, n - first);
        const nn::Tensor<float> x = gather_batch(windows.inputs, order, first, count);
        const nn::Mat<float> p = nn::model_forward(params, x, nn::ForwardOptions{});
        probs.segment(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count)) = p.col(0).cast<double>();
    }
    return probs;
}

ValidationResult evaluate_dataset(const nn::ModelParams<float>& params, const WindowDataset& ds) {
    if (ds.size() == 0) {
        throw InsufficientDataError("evaluate_dataset: empty dataset");
    }
    const Eigen::VectorXd probs = predict_probs(params, ds);
    double sum = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double p = std::clamp(probs[static_cast<Eigen::Index>(i)], nn::kProbClip, 1.0 - nn::kProbClip);
        sum -= ds.targets[i] ? std::log(p) : std::log1p(-p);
    }
    const ClassificationMetrics m = classification_metrics(probs, ds.targets, 0.5);
    return {sum / static_cast<double>(ds.size()) + nn::l2_penalty(params, params.arch.l2), m.accuracy, m.precision,
            m.recall};
}

TrainResult train_equalizer(nn::ModelParams<float> params, const WindowDataset& train, const WindowDataset& val,
                            const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    params.check_shapes();
    require_standardized(train, "train_equalizer");
    require_standardized(val, "train_equalizer");
    if (!(train.norm == val.norm)) {
        throw ContractViolation("train_equalizer: validation windows use different normalization statistics");
    }
    if (train.size() < 2 || val.size() == 0) {
        throw InsufficientDataError("train_equalizer: need at least 2 training and 1 validation window");
    }

    const double lambda = params.arch.l2;
    auto adam = nn::AdamState<float>::zeros(params.arch, cfg.learning_rate);
    Engine shuffle_rng = make_engine(cfg.seed, Stream::shuffle);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    TrainHistory history;
    PlateauMonitor monitor(cfg.lr_patience, cfg.early_stop_patience);
    nn::ModelParams<float> best = params;
    std::uint64_t step = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t first = 0; first < order.size(); first += batch) {
            const std::size_t count = std::min(batch, order.size() - first);
            if (count < 2) break;  // batchnorm needs two samples
            const nn::Tensor<float> x = gather_batch(train.inputs, order, first, count);
            std::vector<std::uint8_t> labels(count);
            for (std::size_t b = 0; b < count; ++b) labels[b] = train.targets[order[first + b]];

            nn::ForwardCache<float> cache;
            const nn::ForwardOptions fo{true, true, derive_seed(cfg.seed, Stream::dropout, step++)};
            const nn::Mat<float> probs = nn::model_forward(params, x, fo, &cache);
            const double loss = nn::bce_l2_loss(probs, labels, params, lambda);
            if (!std::isfinite(loss)) {
                throw TrainingFailure("training diverged at epoch " + std::to_string(epoch), history);
            }
            loss_sum += loss * static_cast<double>(count);
            seen += count;
            const nn::ModelParams<float> grads = nn::backward(params, cache, labels, lambda);
            nn::adam_step(params, grads, adam);
            nn::update_running_stats(params, cache);
        }

        const ValidationResult v = evaluate_dataset(params, val);
        history.train_loss.push_back(loss_sum / static_cast<double>(std::max<std::size_t>(seen, 1)));
        history.val_loss.push_back(v.loss);
        history.val_accuracy.push_back(v.accuracy);
        history.val_precision.push_back(v.precision);
        history.val_recall.push_back(v.recall);
        history.learning_rate.push_back(adam.learning_rate);
        if (!std::isfinite(v.loss)) {
            throw TrainingFailure("validation loss is not finite at epoch " + std::to_string(epoch), history);
        }

        const auto decision = monitor.observe(v.loss);
        if (decision.improved) {
            best = params;
            history.best_epoch = epoch;
        }
        if (decision.reduce_lr) {
            adam.learning_rate = std::max(adam.learning_rate * cfg.lr_factor, cfg.min_lr);
        }
        if (on_epoch) on_epoch(epoch, history);
        if (decision.stop) {
            history.early_stopped = true;
            break;
        }
    }
    return {std::move(best), std::move(history)};
}

Prediction predict_bits(const TrainedModel& model, const WindowDataset& windows, double threshold) {
    require_standardized(windows, "predict_bits");
    if (!(windows.norm == model.norm)) {
        throw ContractViolation("predict_bits: windows were standardized with statistics other than the model's");
    }
    Eigen::VectorXd probs = predict_probs(model.params, windows);
    std::vector<std::uint8_t> bits(windows.size());
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = probs[static_cast<Eigen::Index>(i)] >= threshold ? 1 : 0;
    return {std::move(probs), BitSequence(std::move(bits))};
}

}  // namespace lumeneq
