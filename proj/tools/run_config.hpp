// SPDX-License-Identifier: Apache-2.0
//
// The merged configuration behind every subcommand, and its flat
// `section.key = value` text form.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lumeneq/channel.hpp"
#include "lumeneq/evaluation.hpp"
#include "lumeneq/nn/model.hpp"
#include "lumeneq/pipeline.hpp"

namespace lumeneq::cli {

enum class Profile { full, desk, gradcheck_tiny };

std::string to_string(Profile p);
/// Throws ConfigError on an unknown name.
Profile parse_profile(const std::string& name);

struct RunConfig {
    Profile profile = Profile::full;
    Seed seed = 42;
    ChannelConfig channel;
    TrainConfig train;
    nn::ModelArch arch;
    /// Training bits per link; also the length `simulate` writes.
    std::size_t bits = 50000;
    std::size_t test_bits = 50000;
    std::vector<double> snr_db = SweepConfig::default_snr_grid();
    bool mixed_snr = false;
    int parallel = 1;
    /// Sequence length for oracle-check.
    std::size_t oracle_bits = 10;
    std::size_t oracle_instances = 100;

    /// Overwrites the fields a profile controls.
    void apply_profile(Profile p);
    /// Field-level checks only; training subcommands also validate sweep().
    void validate() const;
    [[nodiscard]] SweepConfig sweep() const;
};

/// One `key = value` per line, every field, `#` comments.
void write_run_config(const RunConfig& cfg, std::ostream& out);
void write_run_config(const RunConfig& cfg, const std::string& path);

/// Applies the assignments in `text` on top of `cfg`. Unknown keys and
/// malformed values throw ConfigError naming the line.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "config");

/// Applies one assignment; shared by files and flags.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Current value of `key` in config-file syntax.
std::string get_config_value(const RunConfig& cfg, const std::string& key);

/// INT, FLOAT, BOOL, NAME or LIST.
std::string config_value_type(const std::string& key);

/// Every key write_run_config emits, in order.
std::vector<std::string> config_keys();

}  // namespace lumeneq::cli
