// SPDX-License-Identifier: Apache-2.0
#include "run_config.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <type_traits>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "lumeneq/error.hpp"

namespace lumeneq::cli {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    // Shortest form that reads back to the same double.
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
    if (t == "-inf") return -std::numeric_limits<double>::infinity();
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE || std::isnan(v)) {
        throw ConfigError(key + ": expected a number, got '" + text + "'");
    }
    return v;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    Int v{};
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
        throw ConfigError(key + ": expected an integer, got '" + text + "'");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
}

struct Field {
    const char* type;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <typename T>
Field int_field(T RunConfig::*outer) {
    return {"INT", [outer](const RunConfig& c) { return std::to_string(c.*outer); },
            [outer](RunConfig& c, const std::string& k, const std::string& v) { c.*outer = parse_int<T>(k, v); }};
}

// Member of a member, e.g. &RunConfig::channel then &ChannelConfig::flip_prob.
template <typename S, typename T>
Field nested(S RunConfig::*outer, T S::*inner) {
    if constexpr (std::is_same_v<T, double>) {
        return {"FLOAT", [=](const RunConfig& c) { return fmt_double(c.*outer.*inner); },
                [=](RunConfig& c, const std::string& k, const std::string& v) { c.*outer.*inner = parse_double(k, v); }};
    } else if constexpr (std::is_same_v<T, bool>) {
        return {"BOOL", [=](const RunConfig& c) { return std::string(c.*outer.*inner ? "true" : "false"); },
                [=](RunConfig& c, const std::string& k, const std::string& v) { c.*outer.*inner = parse_bool(k, v); }};
    } else {
        return {"INT", [=](const RunConfig& c) { return std::to_string(c.*outer.*inner); },
                [=](RunConfig& c, const std::string& k, const std::string& v) { c.*outer.*inner = parse_int<T>(k, v); }};
    }
}

const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = [] {
        std::vector<std::pair<std::string, Field>> t;
        t.emplace_back("run.profile",
                       Field{"NAME", [](const RunConfig& c) { return to_string(c.profile); },
                             [](RunConfig& c, const std::string&, const std::string& v) { c.profile = parse_profile(trim(v)); }});
        t.emplace_back("run.seed", int_field(&RunConfig::seed));
        t.emplace_back("run.bits", int_field(&RunConfig::bits));
        t.emplace_back("run.test_bits", int_field(&RunConfig::test_bits));
        t.emplace_back("run.oracle_bits", int_field(&RunConfig::oracle_bits));
        t.emplace_back("run.oracle_instances", int_field(&RunConfig::oracle_instances));

        using C = ChannelConfig;
        t.emplace_back("channel.snr_db", nested(&RunConfig::channel, &C::snr_db));
        t.emplace_back("channel.noiseless", nested(&RunConfig::channel, &C::noiseless));
        t.emplace_back("channel.flip_prob", nested(&RunConfig::channel, &C::flip_prob));
        t.emplace_back("channel.multipath_delay", nested(&RunConfig::channel, &C::multipath_delay));
        t.emplace_back("channel.multipath_gain", nested(&RunConfig::channel, &C::multipath_gain));
        t.emplace_back("channel.led_steepness", nested(&RunConfig::channel, &C::led_steepness));
        t.emplace_back("channel.led_midpoint", nested(&RunConfig::channel, &C::led_midpoint));
        t.emplace_back("channel.responsivity", nested(&RunConfig::channel, &C::responsivity));
        t.emplace_back("channel.alignment_offset", nested(&RunConfig::channel, &C::alignment_offset));

        using T = TrainConfig;
        t.emplace_back("train.learning_rate", nested(&RunConfig::train, &T::learning_rate));
        t.emplace_back("train.batch_size", nested(&RunConfig::train, &T::batch_size));
        t.emplace_back("train.max_epochs", nested(&RunConfig::train, &T::max_epochs));
        t.emplace_back("train.early_stop_patience", nested(&RunConfig::train, &T::early_stop_patience));
        t.emplace_back("train.lr_factor", nested(&RunConfig::train, &T::lr_factor));
        t.emplace_back("train.lr_patience", nested(&RunConfig::train, &T::lr_patience));
        t.emplace_back("train.min_lr", nested(&RunConfig::train, &T::min_lr));
        t.emplace_back("train.split_ratio", nested(&RunConfig::train, &T::split_ratio));

        using M = nn::ModelArch;
        t.emplace_back("model.window", nested(&RunConfig::arch, &M::window));
        t.emplace_back("model.conv1_filters", nested(&RunConfig::arch, &M::conv1_filters));
        t.emplace_back("model.conv1_kernel", nested(&RunConfig::arch, &M::conv1_kernel));
        t.emplace_back("model.conv2_filters", nested(&RunConfig::arch, &M::conv2_filters));
        t.emplace_back("model.conv2_kernel", nested(&RunConfig::arch, &M::conv2_kernel));
        t.emplace_back("model.pool", nested(&RunConfig::arch, &M::pool));
        t.emplace_back("model.conv_dropout", nested(&RunConfig::arch, &M::conv_dropout));
        t.emplace_back("model.lstm1_units", nested(&RunConfig::arch, &M::lstm1_units));
        t.emplace_back("model.lstm2_units", nested(&RunConfig::arch, &M::lstm2_units));
        t.emplace_back("model.dense_units", nested(&RunConfig::arch, &M::dense_units));
        t.emplace_back("model.dense_dropout", nested(&RunConfig::arch, &M::dense_dropout));
        t.emplace_back("model.l2", nested(&RunConfig::arch, &M::l2));

        t.emplace_back("sweep.snr_db", Field{"LIST", [](const RunConfig& c) {
                                                 std::string s;
                                                 for (double v : c.snr_db) s += (s.empty() ? "" : ", ") + fmt_double(v);
                                                 return s;
                                             },
                                             [](RunConfig& c, const std::string& k, const std::string& v) {
                                                 c.snr_db = parse_list(k, v);
                                             }});
        t.emplace_back("sweep.mixed_snr",
                       Field{"BOOL", [](const RunConfig& c) { return std::string(c.mixed_snr ? "true" : "false"); },
                             [](RunConfig& c, const std::string& k, const std::string& v) { c.mixed_snr = parse_bool(k, v); }});
        t.emplace_back("sweep.parallel", int_field(&RunConfig::parallel));
        return t;
    }();
    return table;
}

const Field& find_field(const std::string& key) {
    for (const auto& [name, f] : fields()) {
        if (name == key) return f;
    }
    throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

std::string to_string(Profile p) {
    switch (p) {
        case Profile::full: return "full";
        case Profile::desk: return "desk";
        case Profile::gradcheck_tiny: return "gradcheck-tiny";
    }
    return "full";
}

Profile parse_profile(const std::string& name) {
    if (name == "full") return Profile::full;
    if (name == "desk") return Profile::desk;
    if (name == "gradcheck-tiny") return Profile::gradcheck_tiny;
    throw ConfigError("unknown profile '" + name + "' (expected full, desk or gradcheck-tiny)");
}

void RunConfig::apply_profile(Profile p) {
    profile = p;
    switch (p) {
        case Profile::full:
            arch = nn::ModelArch::standard();
            bits = test_bits = 50000;
            train.max_epochs = 100;
            break;
        case Profile::desk:
            arch = nn::ModelArch::standard();
            bits = test_bits = 20000;
            train.max_epochs = 30;
            break;
        case Profile::gradcheck_tiny:
            arch = nn::ModelArch::tiny();
            bits = test_bits = 4000;
            train.max_epochs = 20;
            break;
    }
}

void RunConfig::validate() const {
    channel.validate();
    train.validate();
    arch.validate();
    if (bits == 0 || test_bits == 0) throw ConfigError("run: bit counts must be positive");
    if (parallel < 1) throw ConfigError("sweep: parallel must be >= 1");
    if (oracle_bits < 1 || oracle_bits > kExhaustiveLimit) {
        throw ConfigError("run: oracle_bits must lie in [1, " + std::to_string(kExhaustiveLimit) + "]");
    }
}

SweepConfig RunConfig::sweep() const {
    SweepConfig s;
    s.channel = channel;
    s.train = train;
    s.arch = arch;
    s.snr_db = snr_db;
    s.train_bits = bits;
    s.test_bits = test_bits;
    s.master_seed = seed;
    s.mixed_snr = mixed_snr;
    s.parallel = parallel;
    return s;
}

void write_run_config(const RunConfig& cfg, std::ostream& out) {
    out << "# lumeneq run configuration\n";
    std::string section;
    for (const auto& [key, f] : fields()) {
        const std::string sec = key.substr(0, key.find('.'));
        if (sec != section) {
            if (!section.empty()) out << '\n';
            section = sec;
        }
        out << key << " = " << f.get(cfg) << '\n';
    }
}

void write_run_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open " + path + " for writing");
    write_run_config(cfg, f);
    if (!f) throw IoError("write failed: " + path);
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    find_field(key).set(cfg, key, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) { return find_field(key).get(cfg); }

std::string config_value_type(const std::string& key) { return find_field(key).type; }

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        try {
            set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, f] : fields()) keys.push_back(k);
    return keys;
}

}  // namespace lumeneq::cli
