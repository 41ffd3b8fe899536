// SPDX-License-Identifier: Apache-2.0
//
// Discrete-time OOK link: Markov bit source, LED sigmoid, two-tap multipath
// and calibrated AWGN. One sample per bit period throughout.
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "lumeneq/rng.hpp"

namespace lumeneq {

/// Ordered binary symbols. Every element is 0 or 1 and the sequence is never empty.
class BitSequence {
public:
    explicit BitSequence(std::vector<std::uint8_t> bits);

    [[nodiscard]] std::size_t size() const noexcept { return bits_.size(); }
    [[nodiscard]] std::uint8_t operator[](std::size_t i) const noexcept { return bits_[i]; }
    [[nodiscard]] const std::vector<std::uint8_t>& values() const noexcept { return bits_; }
    [[nodiscard]] auto begin() const noexcept { return bits_.begin(); }
    [[nodiscard]] auto end() const noexcept { return bits_.end(); }

    /// Bits [first, first + count).
    [[nodiscard]] BitSequence slice(std::size_t first, std::size_t count) const;

    friend bool operator==(const BitSequence&, const BitSequence&) = default;

private:
    std::vector<std::uint8_t> bits_;
};

/// Real samples, one per bit period.
using SampleSignal = Eigen::VectorXd;

struct ChannelConfig {
    double snr_db = 10.0;
    /// Skip noise entirely; equivalent to snr_db = +inf.
    bool noiseless = false;
    int multipath_delay = 2;
    double multipath_gain = 0.3;
    double led_steepness = 5.0;
    double led_midpoint = 0.5;
    double flip_prob = 0.2;
    double responsivity = 1.0;
    /// Receiver sampling lag in samples. 0 is the aligned receiver.
    int alignment_offset = 0;
    Seed seed = 42;

    [[nodiscard]] bool is_noiseless() const noexcept {
        return noiseless || snr_db == std::numeric_limits<double>::infinity();
    }

    /// Throws ConfigError on any violated invariant.
    void validate() const;

    /// Stable hash of every field, used to tag model files.
    [[nodiscard]] std::uint64_t hash() const;

    friend bool operator==(const ChannelConfig&, const ChannelConfig&) = default;
};

struct LinkRealization {
    BitSequence bits;
    /// After LED, responsivity and multipath; before noise.
    SampleSignal clean_signal;
    SampleSignal received;
    double noise_sigma = 0.0;
    ChannelConfig config;
    /// Non-fatal configuration diagnostics collected while simulating.
    std::vector<std::string> warnings;

    [[nodiscard]] std::size_t size() const noexcept { return bits.size(); }
};

struct NoisySignal {
    SampleSignal signal;
    double noise_sigma = 0.0;
};

BitSequence generate_markov_bits(std::size_t n, double flip_prob, Seed seed);

SampleSignal ook_modulate(const BitSequence& bits);

/// s[n] = 1 / (1 + exp(-steepness (x[n] - midpoint)))
SampleSignal led_response(const SampleSignal& signal, double steepness, double midpoint);

/// Scalar form of the LED transfer curve.
double led_level(double drive, double steepness, double midpoint);

/// m[n] = s[n] + gain * s[n - delay], with s[j] = 0 for j < 0.
/// A delay at or beyond the signal length leaves the signal unchanged; see
/// multipath_is_inert().
SampleSignal apply_multipath(const SampleSignal& signal, int delay, double gain);

[[nodiscard]] constexpr bool multipath_is_inert(std::size_t length, int delay) noexcept {
    return delay >= 0 && static_cast<std::size_t>(delay) >= length;
}

/// sigma^2 = mean(m^2) / 10^(snr_db/10). An infinite snr_db returns the
/// input unchanged with sigma = 0.
NoisySignal add_awgn(const SampleSignal& signal, double snr_db, Seed seed);

/// Shifts the stream later by `offset` samples, zero-filling the front.
SampleSignal delay_samples(const SampleSignal& signal, int offset);

LinkRealization simulate_link(const ChannelConfig& config, std::size_t n_bits);

/// 1 where y[n] >= threshold.
BitSequence hard_decision(const SampleSignal& signal, double threshold = 0.5);

/// 10 log10(mean(clean^2) / mean((received - clean)^2)).
double measured_snr_db(const LinkRealization& link);

/// Writes `index,bit,clean,received` with 9 significant digits.
void write_link_csv(const LinkRealization& link, std::ostream& out);
void write_link_csv(const LinkRealization& link, const std::string& path);

}  // namespace lumeneq
