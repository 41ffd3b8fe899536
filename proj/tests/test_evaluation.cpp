// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "lumeneq/error.hpp"
#include "lumeneq/evaluation.hpp"
#include "lumeneq/metrics.hpp"

using namespace lumeneq;

namespace {

ChannelConfig random_channel(Engine& rng, double snr_db) {
    ChannelConfig c;
    c.snr_db = snr_db;
    c.seed = rng();
    c.multipath_delay = std::uniform_int_distribution<int>(0, 3)(rng);
    c.multipath_gain = std::uniform_real_distribution<double>(0.0, 0.6)(rng);
    c.flip_prob = std::uniform_real_distribution<double>(0.05, 0.5)(rng);
    c.alignment_offset = std::uniform_int_distribution<int>(0, 2)(rng);
    return c;
}

SweepConfig small_sweep() {
    SweepConfig s;
    s.arch = nn::ModelArch::tiny();
    s.snr_db = {0.0, 10.0, 20.0};
    s.train_bits = 600;
    s.test_bits = 400;
    s.train.max_epochs = 3;
    s.train.batch_size = 32;
    s.train.learning_rate = 1e-2;
    s.train.min_lr = 1e-4;
    s.master_seed = 19;
    return s;
}

std::string csv_of(const SweepReport& r) {
    std::ostringstream os;
    write_report(r, os, ReportFormat::csv);
    return os.str();
}

}  // namespace

TEST_CASE("bit error rate") {
    const BitSequence a({0, 1, 1, 0});
    CHECK(bit_error_rate(a, a) == 0.0);
    CHECK(bit_error_rate(a, BitSequence({1, 0, 0, 1})) == 1.0);
    CHECK(bit_error_rate(a, BitSequence({0, 1, 0, 0})) == 0.25);
    CHECK_THROWS_AS(bit_error_rate(a, BitSequence({0, 1})), ContractViolation);
}

TEST_CASE("classification metrics") {
    Eigen::VectorXd perfect(3);
    perfect << 0.9, 0.1, 0.8;
    auto m = classification_metrics(perfect, {1, 0, 1});
    CHECK(m.accuracy == 1.0);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);

    m = classification_metrics(Eigen::VectorXd::Constant(3, 0.1), {1, 0, 1});
    CHECK(m.recall == 0.0);
    CHECK(m.precision == 1.0);

    Eigen::VectorXd probs(4);
    probs << 0.9, 0.2, 0.6, 0.4;
    m = classification_metrics(probs, {1, 0, 0, 1});
    CHECK(m.accuracy == 0.5);
    CHECK(m.precision == 0.5);
    CHECK(m.recall == 0.5);
    CHECK(m.true_positive == 1);
    CHECK(m.false_positive == 1);
    CHECK(m.false_negative == 1);
    CHECK(m.true_negative == 1);
    CHECK_THROWS_AS(classification_metrics(probs, {1, 0}), ContractViolation);
}

TEST_CASE("binomial standard error") {
    CHECK(binomial_stderr(0.5, 100) == doctest::Approx(0.05));
    CHECK(binomial_stderr(0.0, 100) == 0.0);
}

TEST_CASE("accuracy and BER sum to exactly one for every error count") {
    // The metric set stores accuracy as 1 - ber_post; check that the sum
    // rounds back to 1 for every count at the sweep's bit total.
    const std::size_t n = 49936;
    std::size_t bad = 0;
    for (std::size_t errors = 0; errors <= n; ++errors) {
        const double ber = static_cast<double>(errors) / static_cast<double>(n);
        bad += (1.0 - ber) + ber != 1.0;
    }
    CHECK(bad == 0);
}

TEST_CASE("MAP detector") {
    SUBCASE("noiseless link decodes exactly") {
        ChannelConfig c;
        c.noiseless = true;
        const auto link = simulate_link(c, 2000);
        CHECK(map_sequence_detector(link) == link.bits);
    }
    SUBCASE("no echo and a uniform prior reduce to a 0.5 threshold") {
        ChannelConfig c;
        c.multipath_gain = 0.0;
        c.flip_prob = 0.5;
        c.snr_db = 3.0;
        const auto link = simulate_link(c, 5000);
        CHECK(map_sequence_detector(link) == hard_decision(link.received, 0.5));
    }
    SUBCASE("a lagged receiver is decoded through the lag") {
        ChannelConfig c;
        c.noiseless = true;
        c.alignment_offset = 2;
        const auto link = simulate_link(c, 500);
        const auto decoded = map_sequence_detector(link);
        CHECK(decoded.slice(0, 498) == link.bits.slice(0, 498));
        // The last two bits were never observed; the prior says "no flip".
        CHECK(decoded[498] == decoded[497]);
        CHECK(decoded[499] == decoded[498]);
    }
    SUBCASE("decoded sequence is at least as probable as the truth") {
        for (double snr : {0.0, 6.0, 12.0}) {
            ChannelConfig c;
            c.snr_db = snr;
            const auto link = simulate_link(c, 3000);
            const auto decoded = map_sequence_detector(link);
            CHECK(sequence_log_posterior(decoded, link.received, c, link.noise_sigma) >=
                  sequence_log_posterior(link.bits, link.received, c, link.noise_sigma));
        }
    }
    SUBCASE("contract errors") {
        ChannelConfig c;
        CHECK_THROWS_AS(map_sequence_detector(SampleSignal::Ones(5), c, -1.0), ContractViolation);
        c.noiseless = true;
        CHECK_THROWS_AS(map_sequence_detector(SampleSignal::Ones(5), c, 0.3), ContractViolation);
        c = ChannelConfig{};
        c.multipath_delay = kMaxTrellisDelay + 1;
        CHECK_THROWS_AS(map_sequence_detector(SampleSignal::Ones(50), c, 0.1), DomainError);
        CHECK_THROWS_AS(map_sequence_detector(SampleSignal(), ChannelConfig{}, 0.1), EmptySequenceError);
    }
}

TEST_CASE("Viterbi equals exhaustive search") {
    for (double snr : {0.0, 10.0, 20.0}) {
        Engine rng = make_engine(1000 + static_cast<Seed>(snr), Stream::oracle_instances);
        int mismatches = 0;
        for (int i = 0; i < 100; ++i) {
            const ChannelConfig c = random_channel(rng, snr);
            const auto link = simulate_link(c, 10);
            mismatches += !(map_sequence_detector(link) == exhaustive_map_oracle(link.received, c, link.noise_sigma));
        }
        CAPTURE(snr);
        CHECK(mismatches == 0);
    }
}

TEST_CASE("MAP beats the hard decision on long links; aligned 20 dB hard decision is clean") {
    constexpr std::size_t n = 50000, first = 32, scored = n - 64;
    for (double snr = 0.0; snr <= 20.0; snr += 2.0) {
        ChannelConfig c;
        c.snr_db = snr;
        c.seed = derive_seed(5, Stream::test_link, static_cast<std::uint64_t>(snr));
        const LinkRealization link = simulate_link(c, n);
        const BitSequence truth = link.bits.slice(first, scored);
        const double pre = bit_error_rate(truth, hard_decision(link.received).slice(first, scored));
        const double map = bit_error_rate(truth, map_sequence_detector(link).slice(first, scored));
        CAPTURE(snr);
        CHECK(map <= pre + 2 * binomial_stderr(pre, scored));
        if (snr == 20.0) CHECK(pre < 0.01);
    }
}

TEST_CASE("exhaustive oracle") {
    ChannelConfig c;
    SUBCASE("refuses long inputs") {
        CHECK_THROWS_AS(exhaustive_map_oracle(SampleSignal::Zero(15), c, 0.1), DomainError);
    }
    SUBCASE("one sample picks the closer level") {
        c.multipath_gain = 0.0;
        c.flip_prob = 0.5;
        CHECK(exhaustive_map_oracle(SampleSignal::Constant(1, 0.6), c, 0.2) == BitSequence({1}));
        CHECK(exhaustive_map_oracle(SampleSignal::Constant(1, 0.4), c, 0.2) == BitSequence({0}));
    }
    SUBCASE("no flips allowed gives a constant sequence") {
        c.flip_prob = 0.0;
        c.snr_db = 0.0;
        Engine rng = make_engine(3);
        std::normal_distribution<double> g(0.5, 0.5);
        for (int trial = 0; trial < 20; ++trial) {
            SampleSignal y(8);
            for (auto& v : y) v = g(rng);
            const auto b = exhaustive_map_oracle(y, c, 0.4);
            for (auto v : b) CHECK(v == b[0]);
            CHECK(map_sequence_detector(y, c, 0.4) == b);
        }
    }
    SUBCASE("exact ties go to the smaller sequence read from the end") {
        // No echo, uniform prior, every sample on the midpoint: all 2^n
        // sequences tie, so both detectors must return all zeros.
        c.multipath_gain = 0.0;
        c.flip_prob = 0.5;
        const SampleSignal y = SampleSignal::Constant(6, 0.5);
        CHECK(exhaustive_map_oracle(y, c, 0.3) == BitSequence(std::vector<std::uint8_t>(6, 0)));
        CHECK(map_sequence_detector(y, c, 0.3) == BitSequence(std::vector<std::uint8_t>(6, 0)));
    }
}

TEST_CASE("sweep") {
    const SweepConfig cfg = small_sweep();
    const SweepReport report = run_snr_sweep(cfg);
    REQUIRE(report.points.size() == 3);
    for (const auto& p : report.points) {
        CAPTURE(p.snr_db);
        CHECK(p.ok);
        const MetricSet& m = p.metrics;
        for (double rate : {m.ber_pre, m.ber_post, m.ber_map, m.accuracy, m.precision, m.recall}) {
            CHECK(rate >= 0.0);
            CHECK(rate <= 1.0);
        }
        CHECK(m.accuracy + m.ber_post == 1.0);
        CHECK(m.n_bits == cfg.test_bits - 8);
        CHECK(m.stderr_ber == doctest::Approx(std::sqrt(m.ber_post * (1 - m.ber_post) / m.n_bits)));
    }
    CHECK(report.points[0].seeds.test_link != report.points[0].seeds.train_link);
    CHECK(report.points[0].seeds.train_link != report.points[1].seeds.train_link);

    SUBCASE("same seed, same report; schedule does not matter") {
        SweepConfig parallel = cfg;
        parallel.parallel = 3;
        CHECK(csv_of(run_snr_sweep(parallel)) == csv_of(report));
    }
    SUBCASE("CSV layout and round trip") {
        const std::string text = csv_of(report);
        std::istringstream in(text);
        const auto rows = read_report_csv(in);
        REQUIRE(rows.size() == 3);
        CHECK(std::count(text.begin(), text.end(), '\n') == 4);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const MetricSet& a = report.points[i].metrics;
            const MetricSet& b = rows[i].second;
            CHECK(rows[i].first == report.points[i].snr_db);
            for (auto [x, y] : {std::pair{a.ber_pre, b.ber_pre}, {a.ber_post, b.ber_post}, {a.ber_map, b.ber_map},
                                {a.accuracy, b.accuracy}, {a.stderr_ber, b.stderr_ber}}) {
                CHECK(y == doctest::Approx(x).epsilon(5e-9));
            }
            CHECK(b.n_bits == a.n_bits);
        }
    }
    SUBCASE("structured report carries config and seeds") {
        std::ostringstream os;
        write_report(report, os, ReportFormat::json);
        const std::string json = os.str();
        CHECK(json.find("\"master_seed\": 19") != std::string::npos);
        CHECK(json.find(std::to_string(report.points[2].seeds.test_link)) != std::string::npos);
        CHECK(json.find("\"train_bits\": 600") != std::string::npos);
    }
    SUBCASE("unwritable path names the path") {
        try {
            export_report(report, "/nonexistent-dir/report.csv", ReportFormat::csv);
            FAIL("expected an IoError");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("/nonexistent-dir/report.csv") != std::string::npos);
        }
    }
}

TEST_CASE("sweep records failed points and keeps going") {
    SweepConfig cfg = small_sweep();
    cfg.snr_db = {0.0, 20.0};
    cfg.train.learning_rate = 1e300;
    cfg.train.min_lr = 1.0;
    const SweepReport report = run_snr_sweep(cfg);
    REQUIRE(report.points.size() == 2);
    for (const auto& p : report.points) {
        CHECK_FALSE(p.ok);
        CHECK_FALSE(p.error.empty());
        CHECK(std::isnan(p.metrics.ber_post));
    }
    CHECK(csv_of(report).find("nan") != std::string::npos);
}

TEST_CASE("pooled-SNR sweep") {
    SweepConfig cfg = small_sweep();
    cfg.mixed_snr = true;
    const SweepReport report = run_snr_sweep(cfg);
    REQUIRE(report.points.size() == 3);
    for (const auto& p : report.points) CHECK(p.ok);
    CHECK(report.points[0].epochs == report.points[2].epochs);
    CHECK(csv_of(run_snr_sweep(cfg)) == csv_of(report));
}

TEST_CASE("sweep configuration") {
    CHECK(SweepConfig::default_snr_grid() == std::vector<double>{0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20});
    SweepConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.snr_db = {10, 5};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SweepConfig{};
    cfg.snr_db.clear();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SweepConfig{};
    cfg.parallel = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
