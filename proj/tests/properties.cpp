// SPDX-License-Identifier: Apache-2.0
#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "lumeneq/channel.hpp"
#include "lumeneq/nn/layers.hpp"
#include "lumeneq/nn/model.hpp"
#include "lumeneq/pipeline.hpp"

namespace lumeneq::props {

namespace {

/// Runs `check` once per case with its own engine. `check` returns an empty
/// string on success and a description otherwise.
PropertyResult run(const std::string& name, Seed seed, std::size_t cases,
                   const std::function<std::string(Engine&, std::size_t)>& check) {
    PropertyResult r{name, cases, 0, {}};
    for (std::size_t i = 0; i < cases; ++i) {
        Engine rng = make_engine(fnv1a64(name, seed), Stream::oracle_instances, i);
        std::string why;
        try {
            why = check(rng, i);
        } catch (const std::exception& e) {
            why = std::string("threw: ") + e.what();
        }
        if (!why.empty()) {
            if (r.failures++ == 0) r.detail = "case " + std::to_string(i) + ": " + why;
        }
    }
    return r;
}

struct ShapeTraceRow {
    const char* layer;
    nn::Index time;
    nn::Index channels;
};

int uniform_int(Engine& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
double uniform(Engine& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

template <typename Scalar>
nn::Mat<Scalar> gaussian(Engine& rng, nn::Index rows, nn::Index cols, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    nn::Mat<Scalar> m(rows, cols);
    for (nn::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(g(rng));
    return m;
}

/// Random standardized windows for the tiny architecture.
WindowDataset random_windows(Engine& rng, std::size_t count, int length, std::size_t first_center) {
    WindowDataset ds;
    ds.length = length;
    ds.center = length / 2;
    ds.inputs = gaussian<double>(rng, static_cast<nn::Index>(count), length);
    ds.targets.resize(count);
    ds.centers.resize(count);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = 0; i < count; ++i) {
        ds.targets[i] = coin(rng) ? 1 : 0;
        ds.centers[i] = first_center + i;
    }
    ds.total_bits = first_center + count + static_cast<std::size_t>(length);
    ds.standardized = true;
    ds.norm = {0.0, 1.0};
    return ds;
}

/// A short training run on noise labels with randomized schedule settings,
/// so plateaus and LR cuts actually happen.
struct TrainingCase {
    TrainConfig cfg;
    WindowDataset train, val;
    TrainResult result;
};

TrainingCase random_training(Engine& rng) {
    TrainingCase tc;
    const nn::ModelArch arch = nn::ModelArch::tiny();
    tc.cfg.learning_rate = std::pow(10.0, uniform(rng, -4.0, -1.0));
    tc.cfg.batch_size = uniform_int(rng, 8, 32);
    tc.cfg.max_epochs = uniform_int(rng, 3, 12);
    tc.cfg.early_stop_patience = uniform_int(rng, 1, 5);
    tc.cfg.lr_patience = uniform_int(rng, 1, 3);
    tc.cfg.lr_factor = uniform(rng, 0.1, 0.9);
    tc.cfg.min_lr = tc.cfg.learning_rate * uniform(rng, 0.0, 0.5);
    tc.cfg.seed = rng();
    tc.train = random_windows(rng, static_cast<std::size_t>(uniform_int(rng, 40, 120)), arch.window, 4);
    tc.val = random_windows(rng, static_cast<std::size_t>(uniform_int(rng, 10, 40)), arch.window, 200);
    tc.result = train_equalizer(nn::init_params<float>(arch, rng()), tc.train, tc.val, tc.cfg);
    return tc;
}

}  // namespace

PropertyResult dropout_expectation(Seed seed, std::size_t cases) {
    // Inverted dropout keeps E[y] = x; the Monte-Carlo mean over 10,000
    // masks must land within 2% (RMS, relative to |x|) of the input.
    return run("dropout expectation", seed, cases, [](Engine& rng, std::size_t i) -> std::string {
        const double rate = uniform(rng, 0.0, 0.5);
        const nn::Index B = uniform_int(rng, 1, 3), T = uniform_int(rng, 1, 4), C = uniform_int(rng, 1, 3);
        nn::Tensor<double> x(nn::Mat<double>(gaussian<double>(rng, B * T, C).array() + 2.0), B, T);
        constexpr int kMasks = 10000;
        nn::Mat<double> sum = nn::Mat<double>::Zero(x.data.rows(), x.data.cols());
        const Seed base = rng();
        for (int m = 0; m < kMasks; ++m) {
            sum += nn::dropout_forward(x, rate, true, derive_seed(base, Stream::dropout, static_cast<std::uint64_t>(m))).data;
        }
        const nn::Mat<double> mean = sum / kMasks;
        const double rel = (mean - x.data).norm() / x.data.norm();
        const nn::Tensor<double> inferred = nn::dropout_forward(x, rate, false, base);
        if (inferred.data != x.data) return "inference mode is not the identity";
        if (rel > 0.02) {
            std::ostringstream os;
            os << "rate " << rate << " relative deviation " << rel << " (case " << i << ")";
            return os.str();
        }
        return {};
    });
}

PropertyResult lstm_gate_bounds(Seed seed, std::size_t cases) {
    return run("LSTM gate bounds", seed, cases, [](Engine& rng, std::size_t) -> std::string {
        const nn::Index H = uniform_int(rng, 1, 8), Cin = uniform_int(rng, 1, 6);
        const nn::Index B = uniform_int(rng, 1, 4), T = uniform_int(rng, 1, 12);
        // Pre-activations stay within about +-10; far beyond that tanh and the
        // logistic round to exactly +-1 in double and the open bounds cannot hold.
        const double scale = uniform(rng, 0.05, 0.5);
        nn::LstmParams<double> p{gaussian<double>(rng, H + Cin, 4 * H, scale), gaussian<double>(rng, 1, 4 * H, scale), H};
        const nn::Tensor<double> x(gaussian<double>(rng, B * T, Cin), B, T);
        nn::LstmCache<double> cache;
        nn::lstm_sequence_forward(x, p, uniform_int(rng, 0, 1) == 1, &cache);
        const auto& g = cache.gates;
        const auto sig = [&](nn::Gate gate) { return g.middleCols(static_cast<nn::Index>(gate) * H, H); };
        for (nn::Gate gate : {nn::Gate::forget, nn::Gate::input, nn::Gate::output}) {
            if (!(sig(gate).array() > 0.0).all() || !(sig(gate).array() < 1.0).all()) {
                return "sigmoid gate " + std::to_string(static_cast<int>(gate)) + " left (0, 1)";
            }
        }
        if (!(sig(nn::Gate::candidate).array().abs() < 1.0).all()) return "|candidate| reached 1";
        // A single step from random state obeys the same bounds.
        const auto step = nn::lstm_cell_step<double>(x.step(0), gaussian<double>(rng, B, H), gaussian<double>(rng, B, H), p);
        if (!(step.gates.leftCols(2 * H).array() > 0.0).all() || !(step.gates.leftCols(2 * H).array() < 1.0).all() ||
            !(step.gates.rightCols(H).array() > 0.0).all() || !(step.gates.rightCols(H).array() < 1.0).all() ||
            !(step.gates.middleCols(2 * H, H).array().abs() < 1.0).all()) {
            return "single step gate out of bounds";
        }
        return {};
    });
}

PropertyResult model_shape_trace(Seed seed, std::size_t cases) {
    return run("model shape trace", seed, cases, [](Engine& rng, std::size_t i) -> std::string {
        nn::ModelArch a;
        // Every tenth case is the full architecture; the rest vary its widths.
        if (i % 10 != 0) {
            a.window = 4 * uniform_int(rng, 1, 8);
            a.conv1_filters = uniform_int(rng, 1, 6);
            a.conv2_filters = uniform_int(rng, 1, 6);
            a.conv1_kernel = 2 * uniform_int(rng, 0, 2) + 1;
            a.conv2_kernel = 2 * uniform_int(rng, 0, 2) + 1;
            a.lstm1_units = uniform_int(rng, 1, 5);
            a.lstm2_units = uniform_int(rng, 1, 5);
            a.dense_units = uniform_int(rng, 1, 6);
        }
        const nn::Index B = uniform_int(rng, 1, 3);
        const auto params = nn::init_params<float>(a, rng());
        const nn::Tensor<float> x(gaussian<float>(rng, B * a.window, 1), B, a.window);
        nn::ShapeTrace trace;
        const auto probs = nn::model_forward<float>(params, x, nn::ForwardOptions{}, nullptr, &trace);

        const nn::Index W = a.window, W2 = W / a.pool, W4 = W2 / a.pool;
        const std::vector<ShapeTraceRow> expected = {
            {"input", W, 1},        {"conv1", W, a.conv1_filters},     {"pool1", W2, a.conv1_filters},
            {"conv2", W2, a.conv2_filters}, {"pool2", W4, a.conv2_filters}, {"bilstm1", W4, 2 * a.lstm1_units},
            {"bilstm2", 1, 2 * a.lstm2_units}, {"dense1", 1, a.dense_units}, {"output", 1, 1}};
        if (trace.entries.size() != expected.size()) return "trace has " + std::to_string(trace.entries.size()) + " entries";
        for (std::size_t k = 0; k < expected.size(); ++k) {
            const auto& e = trace.entries[k];
            if (e.layer != expected[k].layer || e.batch != B || e.time != expected[k].time ||
                e.channels != expected[k].channels) {
                std::ostringstream os;
                os << "layer " << e.layer << " is (" << e.batch << "," << e.time << "," << e.channels << "), expected ("
                   << B << "," << expected[k].time << "," << expected[k].channels << ") for " << a.describe();
                return os.str();
            }
        }
        if (probs.rows() != B || probs.cols() != 1 || !(probs.array() > 0.0f).all() || !(probs.array() < 1.0f).all()) {
            return "output is not (B, 1) in (0, 1)";
        }
        return {};
    });
}

PropertyResult split_has_no_leakage(Seed seed, std::size_t cases) {
    return run("no-leakage split", seed, cases, [](Engine& rng, std::size_t) -> std::string {
        ChannelConfig cfg;
        cfg.seed = rng();
        cfg.snr_db = uniform(rng, 0.0, 20.0);
        const int length = uniform_int(rng, 2, 64);
        const int center = uniform_int(rng, 0, length - 1);
        const auto N = static_cast<std::size_t>(uniform_int(rng, 4 * length + 8, 3000));
        const double ratio = uniform(rng, 0.3, 0.8);
        const WindowDataset ds = make_windows(simulate_link(cfg, N), length, center);
        const auto [train, val] = contiguous_split(ds, ratio);

        std::size_t train_last = 0, val_first = N;
        for (std::size_t w = 0; w < train.size(); ++w) train_last = std::max(train_last, train.last_index(w));
        for (std::size_t w = 0; w < val.size(); ++w) val_first = std::min(val_first, val.first_index(w));
        if (train_last >= val_first) {
            return "training window reaches bit " + std::to_string(train_last) + ", validation starts at " +
                   std::to_string(val_first);
        }
        const std::size_t discarded = ds.size() - train.size() - val.size();
        if (discarded > static_cast<std::size_t>(length - 1)) {
            return std::to_string(discarded) + " windows discarded for length " + std::to_string(length);
        }
        // Standardizing validation with the training statistics records them.
        const NormStats stats = compute_norm_stats(train);
        if (!(standardize(val, stats).norm == stats)) return "validation did not keep the training statistics";
        return {};
    });
}

PropertyResult learning_rate_monotone(Seed seed, std::size_t cases) {
    return run("LR monotonicity", seed, cases, [](Engine& rng, std::size_t) -> std::string {
        const TrainingCase tc = random_training(rng);
        const auto& lr = tc.result.history.learning_rate;
        if (lr.empty() || lr.front() != tc.cfg.learning_rate) return "first epoch does not use the configured rate";
        for (std::size_t e = 0; e < lr.size(); ++e) {
            if (lr[e] < tc.cfg.min_lr) return "rate fell below min_lr at epoch " + std::to_string(e);
            if (e > 0 && lr[e] > lr[e - 1]) return "rate increased at epoch " + std::to_string(e);
        }
        return {};
    });
}

PropertyResult restore_best(Seed seed, std::size_t cases) {
    return run("restore-best", seed, cases, [](Engine& rng, std::size_t) -> std::string {
        const TrainingCase tc = random_training(rng);
        const TrainHistory& h = tc.result.history;
        const double best = *std::min_element(h.val_loss.begin(), h.val_loss.end());
        if (h.best_val_loss() != best) return "best epoch does not hold the minimum validation loss";
        const double again = evaluate_dataset(tc.result.params, tc.val).loss;
        if (again != best) {
            std::ostringstream os;
            os << "returned parameters score " << again << ", best recorded " << best;
            return os.str();
        }
        for (double v : h.val_loss) {
            if (again > v) return "returned loss exceeds an epoch's loss";
        }
        return {};
    });
}

std::vector<PropertyResult> invariant_suite(Seed seed, std::size_t cases) {
    return {dropout_expectation(seed, cases), lstm_gate_bounds(seed, cases), model_shape_trace(seed, cases),
            split_has_no_leakage(seed, cases), learning_rate_monotone(seed, cases), restore_best(seed, cases)};
}

}  // namespace lumeneq::props
