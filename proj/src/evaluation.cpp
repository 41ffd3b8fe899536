// SPDX-License-Identifier: Apache-2.0
#include "lumeneq/evaluation.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "json_io.hpp"
#include "lumeneq/error.hpp"
#include "lumeneq/format.hpp"
#include "lumeneq/metrics.hpp"

namespace lumeneq {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Everything the detectors need to score a hypothesis, derived from the
/// channel configuration.
struct ChannelLaw {
    double level[2];
    double gain;
    int delay;
    int offset;
    double variance;
    double log_stay;
    double log_flip;
    double log_first;

    ChannelLaw(const ChannelConfig& config, double noise_sigma, std::size_t n) {
        config.validate();
        if (!std::isfinite(noise_sigma) || noise_sigma < 0.0) {
            throw ContractViolation("MAP detector: noise sigma must be finite and non-negative");
        }
        if (config.is_noiseless() && noise_sigma > 0.0) {
            throw ContractViolation("MAP detector: noiseless configuration paired with a noisy signal");
        }
        for (int b = 0; b < 2; ++b) {
            level[b] = config.responsivity * led_level(b, config.led_steepness, config.led_midpoint);
        }
        const bool inert = multipath_is_inert(n, config.multipath_delay);
        gain = inert ? 0.0 : config.multipath_gain;
        delay = inert ? 0 : config.multipath_delay;
        offset = config.alignment_offset;
        const double sigma = std::max(noise_sigma, kSigmaFloor);
        variance = sigma * sigma;
        log_stay = std::log(1.0 - config.flip_prob);
        log_flip = std::log(config.flip_prob);
        log_first = std::log(0.5);
    }

    [[nodiscard]] double transition(int previous, int current) const { return previous == current ? log_stay : log_flip; }

    /// Gaussian log-likelihood of the sample carrying bit n, or 0 when the
    /// receiver never observed it.
    [[nodiscard]] double emission(const SampleSignal& received, std::size_t n, double mean) const {
        const auto j = static_cast<Eigen::Index>(n) + offset;
        if (j >= received.size()) return 0.0;
        const double d = received[j] - mean;
        return -0.5 * d * d / variance;
    }
};

void require_signal(const SampleSignal& received, const char* who) {
    if (received.size() == 0) throw EmptySequenceError(std::string(who) + ": empty signal");
    if (!received.allFinite()) throw NumericDomainError(std::string(who) + ": signal contains non-finite samples");
}

}  // namespace

double sequence_log_posterior(const BitSequence& bits, const SampleSignal& received, const ChannelConfig& config,
                              double noise_sigma) {
    require_signal(received, "sequence_log_posterior");
    if (static_cast<Eigen::Index>(bits.size()) != received.size()) {
        throw ContractViolation("sequence_log_posterior: bit and sample counts differ");
    }
    const ChannelLaw law(config, noise_sigma, bits.size());
    // The clean signal the hypothesis implies, built with the simulator's own stages.
    const SampleSignal emitted = config.responsivity * led_response(ook_modulate(bits), config.led_steepness, config.led_midpoint);
    const SampleSignal clean = apply_multipath(emitted, config.multipath_delay, config.multipath_gain);

    double score = law.log_first + law.emission(received, 0, clean[0]);
    for (std::size_t n = 1; n < bits.size(); ++n) {
        score = score + law.transition(bits[n - 1], bits[n]);
        score = score + law.emission(received, n, clean[static_cast<Eigen::Index>(n)]);
    }
    return score;
}

BitSequence map_sequence_detector(const SampleSignal& received, const ChannelConfig& config, double noise_sigma) {
    require_signal(received, "map_sequence_detector");
    const auto N = static_cast<std::size_t>(received.size());
    const ChannelLaw law(config, noise_sigma, N);
    if (law.delay > kMaxTrellisDelay) {
        throw DomainError("map_sequence_detector: multipath delay " + std::to_string(law.delay) + " exceeds " +
                          std::to_string(kMaxTrellisDelay));
    }
    // State s holds b[n] in bit d and b[n - d] in bit 0.
    const int d = law.delay;
    const std::size_t S = std::size_t{1} << (d + 1);
    const std::size_t low_mask = (std::size_t{1} << d) - 1;
    auto mean = [&](std::size_t n, std::size_t s) {
        const int now = static_cast<int>(s >> d);
        if (n < static_cast<std::size_t>(d)) return law.level[now];
        return law.level[now] + law.gain * law.level[s & 1];
    };

    std::vector<double> score(S, kNegInf), next(S);
    std::vector<std::uint8_t> back(N * S, 0);
    // Bits before the first are fixed at 0, so only b[0] varies at the start.
    for (std::size_t s : {std::size_t{0}, std::size_t{1} << d}) {
        score[s] = law.log_first + law.emission(received, 0, mean(0, s));
    }
    for (std::size_t n = 1; n < N; ++n) {
        for (std::size_t s = 0; s < S; ++s) {
            const int now = static_cast<int>(s >> d);
            double best = kNegInf;
            std::uint8_t choice = 0;
            for (std::uint8_t x = 0; x < 2; ++x) {
                const std::size_t p = ((s & low_mask) << 1) | x;
                const double candidate = score[p] + law.transition(static_cast<int>(p >> d), now);
                if (x == 0) {
                    best = candidate;
                } else if (candidate > best) {
                    best = candidate;
                    choice = 1;
                }
            }
            next[s] = best + law.emission(received, n, mean(n, s));
            back[n * S + s] = choice;
        }
        score.swap(next);
    }

    std::size_t state = 0;
    for (std::size_t s = 1; s < S; ++s) {
        if (score[s] > score[state]) state = s;
    }
    std::vector<std::uint8_t> bits(N);
    for (std::size_t n = N; n-- > 0;) {
        bits[n] = static_cast<std::uint8_t>(state >> d);
        if (n > 0) state = ((state & low_mask) << 1) | back[n * S + state];
    }
    return BitSequence(std::move(bits));
}

BitSequence map_sequence_detector(const LinkRealization& link) {
    return map_sequence_detector(link.received, link.config, link.noise_sigma);
}

BitSequence exhaustive_map_oracle(const SampleSignal& received, const ChannelConfig& config, double noise_sigma) {
    require_signal(received, "exhaustive_map_oracle");
    const auto N = static_cast<std::size_t>(received.size());
    if (N > kExhaustiveLimit) {
        throw DomainError("exhaustive_map_oracle: refusing to enumerate 2^" + std::to_string(N) + " sequences (limit 2^" +
                          std::to_string(kExhaustiveLimit) + ")");
    }
    // Code k has bit n of the sequence in bit n of k. Scanning k upwards and
    // replacing only on a strictly better score keeps the smallest code among
    // ties, i.e. the smallest sequence compared from the last bit backwards.
    std::vector<std::uint8_t> candidate(N);
    std::uint64_t best_code = 0;
    double best_score = kNegInf;
    for (std::uint64_t code = 0; code < (std::uint64_t{1} << N); ++code) {
        for (std::size_t n = 0; n < N; ++n) candidate[n] = static_cast<std::uint8_t>((code >> n) & 1);
        const double s = sequence_log_posterior(BitSequence(candidate), received, config, noise_sigma);
        if (code == 0 || s > best_score) {
            best_score = s;
            best_code = code;
        }
    }
    for (std::size_t n = 0; n < N; ++n) candidate[n] = static_cast<std::uint8_t>((best_code >> n) & 1);
    return BitSequence(std::move(candidate));
}

MetricSet evaluate_on_link(const TrainedModel& model, const LinkRealization& link) {
    const int window = model.params.arch.window;
    const WindowDataset windows = standardize(make_windows(link, window, window / 2), model.norm);
    const Prediction post = predict_bits(model, windows);
    const BitSequence pre = hard_decision(link.received);
    const BitSequence map = map_sequence_detector(link);

    const std::size_t n = windows.size();
    std::size_t err_pre = 0, err_post = 0, err_map = 0;
    for (std::size_t w = 0; w < n; ++w) {
        const std::size_t i = windows.centers[w];
        const std::uint8_t truth = link.bits[i];
        err_pre += pre[i] != truth;
        err_post += post.bits[w] != truth;
        err_map += map[i] != truth;
    }
    const ClassificationMetrics cls = classification_metrics(post.probs, windows.targets);
    MetricSet m;
    const auto total = static_cast<double>(n);
    m.ber_pre = static_cast<double>(err_pre) / total;
    m.ber_post = static_cast<double>(err_post) / total;
    m.ber_map = static_cast<double>(err_map) / total;
    m.accuracy = 1.0 - m.ber_post;
    m.precision = cls.precision;
    m.recall = cls.recall;
    m.n_bits = n;
    m.stderr_ber = binomial_stderr(m.ber_post, n);
    return m;
}

PointSeeds PointSeeds::derive(Seed master, std::size_t index) {
    return {derive_seed(master, Stream::train_link, index), derive_seed(master, Stream::test_link, index),
            derive_seed(master, Stream::weight_init, index), derive_seed(master, Stream::shuffle, index)};
}

std::vector<double> SweepConfig::default_snr_grid() {
    std::vector<double> grid;
    for (int snr = 0; snr <= 20; snr += 2) grid.push_back(snr);
    return grid;
}

void SweepConfig::validate() const {
    channel.validate();
    train.validate();
    arch.validate();
    if (snr_db.empty()) throw ConfigError("sweep: SNR list is empty");
    for (std::size_t i = 0; i < snr_db.size(); ++i) {
        if (!std::isfinite(snr_db[i])) throw ConfigError("sweep: SNR values must be finite");
        if (i > 0 && !(snr_db[i] > snr_db[i - 1])) throw ConfigError("sweep: SNR values must be strictly increasing");
    }
    const auto window = static_cast<std::size_t>(arch.window);
    if (train_bits <= 2 * window || test_bits <= window) {
        throw ConfigError("sweep: bit counts are too small for the window length");
    }
    if (parallel < 1) throw ConfigError("sweep: parallel must be >= 1");
}

namespace {

struct Split {
    WindowDataset train, val;
};

Split split_link(const LinkRealization& link, const nn::ModelArch& arch, double ratio) {
    auto [train, val] = contiguous_split(make_windows(link, arch.window, arch.window / 2), ratio);
    return {std::move(train), std::move(val)};
}

TrainedModel fit(Split data, const nn::ModelArch& arch, const TrainConfig& train, Seed init_seed, std::uint64_t config_hash,
                 TrainHistory* history, const EpochCallback& on_epoch) {
    const NormStats norm = compute_norm_stats(data.train);
    const WindowDataset train_std = standardize(data.train, norm);
    const WindowDataset val_std = standardize(data.val, norm);
    TrainResult result = train_equalizer(nn::init_params<float>(arch, init_seed), train_std, val_std, train, on_epoch);
    if (history) *history = result.history;
    return TrainedModel{std::move(result.params), norm, config_hash, train.seed};
}

void run_indexed(std::size_t count, int parallel, const std::function<void(std::size_t)>& task) {
    if (parallel <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(parallel), count);
    for (std::size_t w = 0; w < n_workers; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) task(i);
        });
    }
    for (auto& t : workers) t.join();
}

ChannelConfig point_channel(const SweepConfig& cfg, double snr_db, Seed seed) {
    ChannelConfig c = cfg.channel;
    c.snr_db = snr_db;
    c.noiseless = false;
    c.seed = seed;
    return c;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

TrainedModel train_on_link(const LinkRealization& link, const nn::ModelArch& arch, const TrainConfig& train,
                           Seed init_seed, TrainHistory* history, const EpochCallback& on_epoch) {
    return fit(split_link(link, arch, train.split_ratio), arch, train, init_seed, link.config.hash(), history, on_epoch);
}

SweepReport run_snr_sweep(const SweepConfig& config, const PointCallback& on_point) {
    config.validate();
    SweepReport report{config, std::vector<SweepPoint>(config.snr_db.size())};
    std::mutex callback_mutex;
    auto finish = [&](const SweepPoint& p) {
        if (!on_point) return;
        std::lock_guard lock(callback_mutex);
        on_point(p);
    };
    auto score = [&](SweepPoint& p, const TrainedModel& model) {
        const LinkRealization test = simulate_link(point_channel(config, p.snr_db, p.seeds.test_link), config.test_bits);
        p.metrics = evaluate_on_link(model, test);
        p.ok = true;
    };
    auto fail = [](SweepPoint& p, const std::exception& e) {
        p.ok = false;
        p.error = e.what();
        const double nan = std::numeric_limits<double>::quiet_NaN();
        p.metrics = MetricSet{nan, nan, nan, nan, nan, nan, 0, nan};
    };

    for (std::size_t i = 0; i < report.points.size(); ++i) {
        report.points[i].snr_db = config.snr_db[i];
        report.points[i].seeds = PointSeeds::derive(config.master_seed, i);
    }

    if (!config.mixed_snr) {
        run_indexed(report.points.size(), config.parallel, [&](std::size_t i) {
            SweepPoint& p = report.points[i];
            const auto start = std::chrono::steady_clock::now();
            try {
                TrainConfig train = config.train;
                train.seed = p.seeds.shuffle;
                const LinkRealization link =
                    simulate_link(point_channel(config, p.snr_db, p.seeds.train_link), config.train_bits);
                TrainHistory history;
                TrainedModel model = train_on_link(link, config.arch, train, p.seeds.weight_init, &history);
                model.seed = config.master_seed;
                p.epochs = static_cast<int>(history.epochs());
                p.best_epoch = history.best_epoch;
                score(p, model);
            } catch (const Error& e) {
                fail(p, e);
            }
            p.wall_seconds = seconds_since(start);
            finish(p);
        });
        return report;
    }

    // Pooled training: every point contributes its own training link; the
    // single model then faces each point's test link.
    const PointSeeds pooled = PointSeeds::derive(config.master_seed, report.points.size());
    const auto start = std::chrono::steady_clock::now();
    std::optional<TrainedModel> model;
    TrainHistory history;
    try {
        Split pool;
        for (const SweepPoint& p : report.points) {
            Split part = split_link(simulate_link(point_channel(config, p.snr_db, p.seeds.train_link), config.train_bits),
                                    config.arch, config.train.split_ratio);
            pool.train.append(part.train);
            pool.val.append(part.val);
        }
        TrainConfig train = config.train;
        train.seed = pooled.shuffle;
        model = fit(std::move(pool), config.arch, train, pooled.weight_init, config.channel.hash(), &history, {});
        model->seed = config.master_seed;
    } catch (const Error& e) {
        for (SweepPoint& p : report.points) {
            fail(p, e);
            finish(p);
        }
        return report;
    }
    const double train_seconds = seconds_since(start);
    run_indexed(report.points.size(), config.parallel, [&](std::size_t i) {
        SweepPoint& p = report.points[i];
        const auto point_start = std::chrono::steady_clock::now();
        p.epochs = static_cast<int>(history.epochs());
        p.best_epoch = history.best_epoch;
        try {
            score(p, *model);
        } catch (const Error& e) {
            fail(p, e);
        }
        p.wall_seconds = seconds_since(point_start) + train_seconds / static_cast<double>(report.points.size());
        finish(p);
    });
    return report;
}

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

void write_report(const SweepReport& report, std::ostream& out, ReportFormat format) {
    if (format == ReportFormat::csv) {
        out << kReportCsvHeader << '\n';
        for (const SweepPoint& p : report.points) {
            const MetricSet& m = p.metrics;
            out << format_g9(p.snr_db) << ',' << format_g9(m.ber_pre) << ',' << format_g9(m.ber_post) << ','
                << format_g9(m.ber_map) << ',' << format_g9(m.accuracy) << ',' << format_g9(m.precision) << ','
                << format_g9(m.recall) << ',' << m.n_bits << ',' << format_g9(m.stderr_ber) << '\n';
        }
        return;
    }
    const SweepConfig& c = report.config;
    nlohmann::json j;
    j["master_seed"] = c.master_seed;
    j["config"] = {{"channel", detail::to_json(c.channel)},
                   {"train", detail::to_json(c.train)},
                   {"architecture", detail::to_json(c.arch)},
                   {"snr_db", c.snr_db},
                   {"train_bits", c.train_bits},
                   {"test_bits", c.test_bits},
                   {"mixed_snr", c.mixed_snr}};
    nlohmann::json rows = nlohmann::json::array();
    for (const SweepPoint& p : report.points) {
        const MetricSet& m = p.metrics;
        nlohmann::json row = {{"snr_db", p.snr_db},
                              {"ok", p.ok},
                              {"seeds",
                               {{"train_link", p.seeds.train_link},
                                {"test_link", p.seeds.test_link},
                                {"weight_init", p.seeds.weight_init},
                                {"shuffle", p.seeds.shuffle}}},
                              {"epochs", p.epochs},
                              {"best_epoch", p.best_epoch},
                              {"ber_pre", number_or_null(m.ber_pre)},
                              {"ber_post", number_or_null(m.ber_post)},
                              {"ber_map", number_or_null(m.ber_map)},
                              {"accuracy", number_or_null(m.accuracy)},
                              {"precision", number_or_null(m.precision)},
                              {"recall", number_or_null(m.recall)},
                              {"n_bits", m.n_bits},
                              {"stderr_ber", number_or_null(m.stderr_ber)}};
        if (!p.ok) row["error"] = p.error;
        rows.push_back(std::move(row));
    }
    j["points"] = std::move(rows);
    out << j.dump(2) << '\n';
}

void export_report(const SweepReport& report, const std::string& path, ReportFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open report file '" + path + "' for writing");
    write_report(report, out, format);
    out.flush();
    if (!out) throw IoError("failed writing report file '" + path + "'");
}

std::vector<std::pair<double, MetricSet>> read_report_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kReportCsvHeader) {
        throw ConfigError("report CSV: missing or unexpected header");
    }
    std::vector<std::pair<double, MetricSet>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        if (cells.size() != 9) throw ConfigError("report CSV: expected 9 columns in '" + line + "'");
        auto num = [&](int k) { return std::strtod(cells[static_cast<std::size_t>(k)].c_str(), nullptr); };
        MetricSet m{num(1), num(2), num(3), num(4), num(5), num(6),
                    static_cast<std::size_t>(std::stoull(cells[7])), num(8)};
        rows.emplace_back(num(0), m);
    }
    return rows;
}

}  // namespace lumeneq
