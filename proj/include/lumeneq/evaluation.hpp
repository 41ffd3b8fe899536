// SPDX-License-Identifier: Apache-2.0
//
// MAP sequence detection, per-link metrics and the SNR sweep.
#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "lumeneq/channel.hpp"
#include "lumeneq/nn/model.hpp"
#include "lumeneq/pipeline.hpp"

namespace lumeneq {

/// Largest sequence the exhaustive oracle will enumerate.
inline constexpr std::size_t kExhaustiveLimit = 14;
/// Largest multipath delay the Viterbi trellis accepts (2^(d+1) states).
inline constexpr int kMaxTrellisDelay = 12;
/// Noise floor used when the link is noiseless.
inline constexpr double kSigmaFloor = 1e-9;

/// log P(bits) + log p(received | bits) up to a constant independent of bits.
/// Samples the receiver never saw (the zero-filled lead-in of a lagged
/// receiver) contribute nothing.
double sequence_log_posterior(const BitSequence& bits, const SampleSignal& received, const ChannelConfig& config,
                              double noise_sigma);

/// Viterbi over the last (multipath_delay + 1) bits. Ties go to the state
/// with the smaller encoding, which makes the decoded sequence the smallest
/// optimum when bits are compared from the last one backwards.
BitSequence map_sequence_detector(const SampleSignal& received, const ChannelConfig& config, double noise_sigma);
BitSequence map_sequence_detector(const LinkRealization& link);

/// Brute force over all 2^n sequences with the same tie-break. n <= 14.
BitSequence exhaustive_map_oracle(const SampleSignal& received, const ChannelConfig& config, double noise_sigma);

struct MetricSet {
    double ber_pre = 0.0;
    double ber_post = 0.0;
    double ber_map = 0.0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::size_t n_bits = 0;
    double stderr_ber = 0.0;
};

/// Runs every detector on a test link. Only bits with a full equalizer
/// window, [center, N - (window - center)), are scored.
MetricSet evaluate_on_link(const TrainedModel& model, const LinkRealization& link);

/// Seeds a sweep point draws from, all derived from the master seed and
/// the point's index.
struct PointSeeds {
    Seed train_link = 0;
    Seed test_link = 0;
    Seed weight_init = 0;
    Seed shuffle = 0;

    static PointSeeds derive(Seed master, std::size_t index);
};

struct SweepConfig {
    /// snr_db and seed are replaced per point.
    ChannelConfig channel;
    TrainConfig train;
    nn::ModelArch arch;
    std::vector<double> snr_db = default_snr_grid();
    std::size_t train_bits = 50000;
    std::size_t test_bits = 50000;
    Seed master_seed = 42;
    /// One model trained on all SNR points pooled, evaluated per point.
    bool mixed_snr = false;
    int parallel = 1;

    static std::vector<double> default_snr_grid();
    void validate() const;
};

struct SweepPoint {
    double snr_db = 0.0;
    PointSeeds seeds;
    MetricSet metrics;
    bool ok = false;
    std::string error;
    int epochs = 0;
    int best_epoch = -1;
    /// Not exported; files stay reproducible.
    double wall_seconds = 0.0;
};

struct SweepReport {
    SweepConfig config;
    std::vector<SweepPoint> points;
};

using PointCallback = std::function<void(const SweepPoint&)>;

/// Per point: simulate a training link, train, simulate a fresh test link
/// and score it. A point that fails is recorded and the sweep moves on.
/// Results do not depend on `parallel`.
SweepReport run_snr_sweep(const SweepConfig& config, const PointCallback& on_point = {});

/// Trains one model on a realization of `channel` (which carries the seed).
TrainedModel train_on_link(const LinkRealization& link, const nn::ModelArch& arch, const TrainConfig& train,
                           Seed init_seed, TrainHistory* history = nullptr, const EpochCallback& on_epoch = {});

enum class ReportFormat { csv, json };

inline constexpr char kReportCsvHeader[] = "snr_db,ber_pre,ber_post,ber_map,accuracy,precision,recall,n_bits,stderr_ber";

void write_report(const SweepReport& report, std::ostream& out, ReportFormat format);
/// Throws IoError naming the path.
void export_report(const SweepReport& report, const std::string& path, ReportFormat format);

/// Reads the CSV form back as (snr_db, MetricSet) rows.
std::vector<std::pair<double, MetricSet>> read_report_csv(std::istream& in);

}  // namespace lumeneq
