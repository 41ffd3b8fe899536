// SPDX-License-Identifier: Apache-2.0
#include "lumeneq/channel.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <random>

#include "lumeneq/error.hpp"
#include "lumeneq/format.hpp"

namespace lumeneq {

namespace {

void require_finite(const SampleSignal& signal, const char* what) {
    if (!signal.allFinite()) {
        throw NumericDomainError(std::string(what) + ": signal contains NaN or Inf");
    }
}

void require_non_empty(const SampleSignal& signal, const char* what) {
    if (signal.size() == 0) {
        throw EmptySequenceError(std::string(what) + ": empty signal");
    }
}

}  // namespace

BitSequence::BitSequence(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    if (bits_.empty()) {
        throw EmptySequenceError("BitSequence: length must be at least 1");
    }
    for (auto b : bits_) {
        if (b > 1) {
            throw DomainError("BitSequence: symbols must be 0 or 1");
        }
    }
}

BitSequence BitSequence::slice(std::size_t first, std::size_t count) const {
    if (first + count > bits_.size()) {
        throw ContractViolation("BitSequence::slice: range out of bounds");
    }
    return BitSequence({bits_.begin() + static_cast<std::ptrdiff_t>(first),
                        bits_.begin() + static_cast<std::ptrdiff_t>(first + count)});
}

void ChannelConfig::validate() const {
    if (!(multipath_gain >= 0.0 && multipath_gain < 1.0)) {
        throw ConfigError("channel: multipath_gain must lie in [0, 1)");
    }
    if (multipath_delay < 0) {
        throw ConfigError("channel: multipath_delay must be >= 0");
    }
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) {
        throw ConfigError("channel: flip_prob must lie in [0, 1]");
    }
    if (!(led_steepness > 0.0) || !std::isfinite(led_steepness)) {
        throw ConfigError("channel: led_steepness must be positive");
    }
    if (!std::isfinite(led_midpoint)) {
        throw ConfigError("channel: led_midpoint must be finite");
    }
    if (!(responsivity > 0.0) || !std::isfinite(responsivity)) {
        throw ConfigError("channel: responsivity must be positive");
    }
    if (alignment_offset < 0) {
        throw ConfigError("channel: alignment_offset must be >= 0");
    }
    if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity()) {
        throw ConfigError("channel: snr_db must be a number");
    }
}

std::uint64_t ChannelConfig::hash() const {
    std::string canon;
    canon += "snr_db=" + format_g17(snr_db);
    canon += ";noiseless=" + std::to_string(is_noiseless());
    canon += ";delay=" + std::to_string(multipath_delay);
    canon += ";gain=" + format_g17(multipath_gain);
    canon += ";steep=" + format_g17(led_steepness);
    canon += ";mid=" + format_g17(led_midpoint);
    canon += ";flip=" + format_g17(flip_prob);
    canon += ";resp=" + format_g17(responsivity);
    canon += ";offset=" + std::to_string(alignment_offset);
    canon += ";seed=" + std::to_string(seed);
    return fnv1a64(canon);
}

BitSequence generate_markov_bits(std::size_t n, double flip_prob, Seed seed) {
    if (n == 0) {
        throw EmptySequenceError("generate_markov_bits: n must be at least 1");
    }
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) {
        throw DomainError("generate_markov_bits: flip_prob must lie in [0, 1]");
    }
    Engine rng = make_engine(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::uint8_t> bits(n);
    bits[0] = unit(rng) < 0.5 ? 0 : 1;
    for (std::size_t t = 1; t < n; ++t) {
        // u in [0, 1) so flip_prob = 0 never flips and flip_prob = 1 always does.
        const bool flip = unit(rng) < flip_prob;
        bits[t] = static_cast<std::uint8_t>(bits[t - 1] ^ (flip ? 1 : 0));
    }
    return BitSequence(std::move(bits));
}

SampleSignal ook_modulate(const BitSequence& bits) {
    SampleSignal x(static_cast<Eigen::Index>(bits.size()));
    for (std::size_t i = 0; i < bits.size(); ++i) {
        x[static_cast<Eigen::Index>(i)] = bits[i] ? 1.0 : 0.0;
    }
    return x;
}

double led_level(double drive, double steepness, double midpoint) {
    return 1.0 / (1.0 + std::exp(-steepness * (drive - midpoint)));
}

SampleSignal led_response(const SampleSignal& signal, double steepness, double midpoint) {
    require_finite(signal, "led_response");
    return signal.unaryExpr([&](double x) { return led_level(x, steepness, midpoint); });
}

SampleSignal apply_multipath(const SampleSignal& signal, int delay, double gain) {
    if (delay < 0) {
        throw ConfigError("apply_multipath: delay must be >= 0");
    }
    if (!(gain >= 0.0 && gain < 1.0)) {
        throw ConfigError("apply_multipath: gain must lie in [0, 1)");
    }
    SampleSignal out = signal;
    const Eigen::Index n = signal.size();
    if (delay < n) {
        out.tail(n - delay) += gain * signal.head(n - delay);
    }
    return out;
}

NoisySignal add_awgn(const SampleSignal& signal, double snr_db, Seed seed) {
    require_non_empty(signal, "add_awgn");
    require_finite(signal, "add_awgn");
    const double power = signal.squaredNorm() / static_cast<double>(signal.size());
    if (power == 0.0) {
        throw ZeroPowerError("add_awgn: all-zero signal, SNR undefined");
    }
    if (snr_db == std::numeric_limits<double>::infinity()) {
        return {signal, 0.0};
    }
    const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
    Engine rng = make_engine(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    SampleSignal out = signal;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        out[i] += sigma * gauss(rng);
    }
    return {std::move(out), sigma};
}

SampleSignal delay_samples(const SampleSignal& signal, int offset) {
    if (offset < 0) {
        throw ConfigError("delay_samples: offset must be >= 0");
    }
    const Eigen::Index n = signal.size();
    SampleSignal out = SampleSignal::Zero(n);
    if (offset < n) {
        out.tail(n - offset) = signal.head(n - offset);
    }
    return out;
}

LinkRealization simulate_link(const ChannelConfig& config, std::size_t n_bits) {
    config.validate();
    BitSequence bits =
        generate_markov_bits(n_bits, config.flip_prob, derive_seed(config.seed, Stream::bits));
    const SampleSignal drive = ook_modulate(bits);
    const SampleSignal emitted =
        config.responsivity * led_response(drive, config.led_steepness, config.led_midpoint);

    std::vector<std::string> warnings;
    if (multipath_is_inert(n_bits, config.multipath_delay)) {
        warnings.push_back("multipath delay " + std::to_string(config.multipath_delay) +
                           " >= signal length " + std::to_string(n_bits) +
                           "; multipath term is all-zero");
    }
    SampleSignal clean = apply_multipath(emitted, config.multipath_delay, config.multipath_gain);

    NoisySignal noisy{clean, 0.0};
    if (!config.is_noiseless()) {
        noisy = add_awgn(clean, config.snr_db, derive_seed(config.seed, Stream::noise));
    }
    if (config.alignment_offset > 0) {
        clean = delay_samples(clean, config.alignment_offset);
        noisy.signal = delay_samples(noisy.signal, config.alignment_offset);
    }
    return LinkRealization{std::move(bits), std::move(clean), std::move(noisy.signal),
                           noisy.noise_sigma, config, std::move(warnings)};
}

BitSequence hard_decision(const SampleSignal& signal, double threshold) {
    require_non_empty(signal, "hard_decision");
    require_finite(signal, "hard_decision");
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(signal.size()));
    for (Eigen::Index i = 0; i < signal.size(); ++i) {
        bits[static_cast<std::size_t>(i)] = signal[i] >= threshold ? 1 : 0;
    }
    return BitSequence(std::move(bits));
}

double measured_snr_db(const LinkRealization& link) {
    const double signal_power = link.clean_signal.squaredNorm();
    const double noise_power = (link.received - link.clean_signal).squaredNorm();
    if (noise_power == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(signal_power / noise_power);
}

void write_link_csv(const LinkRealization& link, std::ostream& out) {
    out << "index,bit,clean,received\n";
    for (std::size_t i = 0; i < link.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        out << i << ',' << int(link.bits[i]) << ',' << format_g9(link.clean_signal[k]) << ','
            << format_g9(link.received[k]) << '\n';
    }
}

void write_link_csv(const LinkRealization& link, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    write_link_csv(link, out);
    if (!out) {
        throw IoError("write failed for '" + path + "'");
    }
}

}  // namespace lumeneq
