// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "lumeneq/channel.hpp"
#include "lumeneq/error.hpp"
#include "lumeneq/evaluation.hpp"
#include "lumeneq/model_io.hpp"
#include "lumeneq/nn/gradcheck.hpp"
#include "lumeneq/pipeline.hpp"
#include "run_config.hpp"

namespace lumeneq::cli {
namespace {

constexpr double kGradcheckThreshold = 1e-4;
constexpr std::size_t kGradcheckMinCoordinates = 200;
constexpr double kOracleSnrs[] = {0.0, 10.0, 20.0};

std::string flag_for(const std::string& key) {
    if (key == "sweep.snr_db") return "--snr-grid";
    std::string name = key.substr(key.find('.') + 1);
    std::replace(name.begin(), name.end(), '_', '-');
    return "--" + name;
}

bool is_switch(const std::string& key) { return key == "channel.noiseless" || key == "sweep.mixed_snr"; }

std::string describe(const std::string& key) {
    static const std::map<std::string, std::string> text = {
        {"run.profile", "full, desk or gradcheck-tiny"},
        {"run.seed", "master seed (falls back to LUMENEQ_SEED, then 42)"},
        {"run.bits", "bits per training link (simulate: link length)"},
        {"run.test_bits", "bits per test link"},
        {"run.oracle_bits", "sequence length for oracle-check"},
        {"run.oracle_instances", "instances per SNR for oracle-check"},
        {"channel.snr_db", "SNR in dB (inf for noiseless)"},
        {"channel.noiseless", "skip the noise stage"},
        {"channel.flip_prob", "Markov source transition probability"},
        {"channel.multipath_delay", "echo delay in samples"},
        {"channel.multipath_gain", "echo gain"},
        {"channel.led_steepness", "LED sigmoid steepness"},
        {"channel.led_midpoint", "LED sigmoid midpoint"},
        {"channel.responsivity", "photodiode responsivity"},
        {"channel.alignment_offset", "receiver sampling lag in samples"},
        {"train.learning_rate", "Adam learning rate"},
        {"train.batch_size", "mini-batch size"},
        {"train.max_epochs", "epoch limit"},
        {"train.early_stop_patience", "epochs without improvement before stopping"},
        {"train.lr_factor", "plateau learning-rate factor"},
        {"train.lr_patience", "epochs without improvement before reducing the rate"},
        {"train.min_lr", "learning-rate floor"},
        {"train.split_ratio", "training fraction of the contiguous split"},
        {"model.window", "input window length"},
        {"model.conv1_filters", "first convolution filters"},
        {"model.conv1_kernel", "first convolution kernel"},
        {"model.conv2_filters", "second convolution filters"},
        {"model.conv2_kernel", "second convolution kernel"},
        {"model.pool", "max-pool size"},
        {"model.conv_dropout", "dropout after each convolution block"},
        {"model.lstm1_units", "units per direction, first BiLSTM"},
        {"model.lstm2_units", "units per direction, second BiLSTM"},
        {"model.dense_units", "hidden dense units"},
        {"model.dense_dropout", "dropout after the hidden dense layer"},
        {"model.l2", "L2 weight on convolution kernels"},
        {"sweep.snr_db", "comma-separated SNR grid for sweep"},
        {"sweep.mixed_snr", "train one model on every SNR's training link"},
        {"sweep.parallel", "sweep points run concurrently"},
    };
    const auto it = text.find(key);
    return it == text.end() ? key : it->second;
}

// Flags and storage shared by every subcommand.
struct Command {
    CLI::App* app = nullptr;
    std::map<std::string, std::string> values;
    std::map<std::string, bool> switches;
    std::string config_path;
    std::string out_path;
    std::string model_path;
};

void add_config_flags(Command& cmd, const RunConfig& defaults) {
    cmd.app->add_option("--config", cmd.config_path, "config file of 'key = value' lines");
    for (const std::string& key : config_keys()) {
        const std::string desc = describe(key) + " [" + key + "]";
        if (is_switch(key)) {
            cmd.app->add_flag(flag_for(key), cmd.switches[key], desc);
        } else {
            cmd.app->add_option(flag_for(key), cmd.values[key], desc)
                ->type_name(config_value_type(key))
                ->default_str(get_config_value(defaults, key));
        }
    }
}

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// defaults, then profile, then LUMENEQ_SEED, then the config file, then flags.
RunConfig resolve(const Command& cmd) {
    std::string file_text;
    if (!cmd.config_path.empty()) file_text = read_file(cmd.config_path);

    Profile profile = Profile::full;
    if (!file_text.empty()) {
        RunConfig probe;
        apply_config_text(probe, file_text, cmd.config_path);
        profile = probe.profile;
    }
    const auto flag = [&](const std::string& key) { return cmd.app->get_option(flag_for(key))->count() > 0; };
    if (flag("run.profile")) profile = parse_profile(cmd.values.at("run.profile"));

    RunConfig cfg;
    cfg.apply_profile(profile);
    if (const char* env = std::getenv("LUMENEQ_SEED"); env && *env) set_config_value(cfg, "run.seed", env);
    if (!file_text.empty()) apply_config_text(cfg, file_text, cmd.config_path);
    for (const std::string& key : config_keys()) {
        if (!flag(key)) continue;
        set_config_value(cfg, key, is_switch(key) ? "true" : cmd.values.at(key));
    }
    cfg.validate();
    return cfg;
}

void write_sidecar(const RunConfig& cfg, const std::string& artifact) { write_run_config(cfg, artifact + ".config"); }

void write_history_csv(const TrainHistory& h, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << "epoch,train_loss,val_loss,val_accuracy,val_precision,val_recall,learning_rate\n";
    char line[256];
    for (std::size_t e = 0; e < h.epochs(); ++e) {
        std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", e, h.train_loss[e], h.val_loss[e],
                      h.val_accuracy[e], h.val_precision[e], h.val_recall[e], h.learning_rate[e]);
        f << line;
    }
    if (!f) throw IoError("write failed: " + path);
}

void print_metrics(const MetricSet& m, std::ostream& out) {
    char line[128];
    const std::pair<const char*, double> rows[] = {{"ber_pre", m.ber_pre},     {"ber_post", m.ber_post},
                                                   {"ber_map", m.ber_map},     {"accuracy", m.accuracy},
                                                   {"precision", m.precision}, {"recall", m.recall},
                                                   {"stderr_ber", m.stderr_ber}};
    for (const auto& [name, v] : rows) {
        std::snprintf(line, sizeof line, "%-10s = %.9g\n", name, v);
        out << line;
    }
    out << "n_bits     = " << m.n_bits << '\n';
}

ChannelConfig point_channel(const RunConfig& cfg, Seed seed) {
    ChannelConfig c = cfg.channel;
    c.seed = seed;
    return c;
}

int do_simulate(const RunConfig& cfg, const Command& cmd, std::ostream& out, std::ostream& err) {
    const LinkRealization link = simulate_link(point_channel(cfg, cfg.seed), cfg.bits);
    for (const std::string& w : link.warnings) err << "warning: " << w << '\n';
    if (cmd.out_path.empty()) {
        write_link_csv(link, out);
        return kExitOk;
    }
    write_link_csv(link, cmd.out_path);
    write_sidecar(cfg, cmd.out_path);
    return kExitOk;
}

// Trains exactly as the first sweep point with this seed would.
int do_train(const RunConfig& cfg, const Command& cmd, std::ostream& out, std::ostream& err) {
    cfg.sweep().validate();
    const PointSeeds seeds = PointSeeds::derive(cfg.seed, 0);
    const LinkRealization link = simulate_link(point_channel(cfg, seeds.train_link), cfg.bits);
    TrainConfig train = cfg.train;
    train.seed = seeds.shuffle;
    TrainHistory history;
    TrainedModel model = train_on_link(link, cfg.arch, train, seeds.weight_init, &history, [&](int epoch, const TrainHistory& h) {
        char line[160];
        std::snprintf(line, sizeof line, "epoch %3d  train %.5f  val %.5f  acc %.5f  lr %.3g\n", epoch,
                      h.train_loss.back(), h.val_loss.back(), h.val_accuracy.back(), h.learning_rate.back());
        err << line << std::flush;
    });
    model.seed = cfg.seed;
    save_model(model, cmd.model_path);
    write_history_csv(history, cmd.model_path + ".history.csv");
    write_sidecar(cfg, cmd.model_path);

    const LinkRealization test = simulate_link(point_channel(cfg, seeds.test_link), cfg.test_bits);
    out << "epochs     = " << history.epochs() << "\nbest_epoch = " << history.best_epoch << '\n';
    print_metrics(evaluate_on_link(model, test), out);
    return kExitOk;
}

int do_evaluate(const RunConfig& cfg, const Command& cmd, std::ostream& out, std::ostream&) {
    const TrainedModel model = load_model(cmd.model_path);
    const PointSeeds seeds = PointSeeds::derive(cfg.seed, 0);
    const LinkRealization test = simulate_link(point_channel(cfg, seeds.test_link), cfg.test_bits);
    print_metrics(evaluate_on_link(model, test), out);
    return kExitOk;
}

int do_sweep(const RunConfig& cfg, const Command& cmd, std::ostream& out, std::ostream& err) {
    const SweepReport report = run_snr_sweep(cfg.sweep(), [&](const SweepPoint& p) {
        char line[200];
        if (p.ok) {
            std::snprintf(line, sizeof line, "snr %6.2f dB  pre %.5f  post %.5f  map %.5f  epochs %d  %.1fs\n", p.snr_db,
                          p.metrics.ber_pre, p.metrics.ber_post, p.metrics.ber_map, p.epochs, p.wall_seconds);
        } else {
            std::snprintf(line, sizeof line, "snr %6.2f dB  FAILED: %s\n", p.snr_db, p.error.c_str());
        }
        err << line << std::flush;
    });
    if (cmd.out_path.empty()) {
        write_report(report, out, ReportFormat::csv);
    } else {
        const bool json = cmd.out_path.size() >= 5 && cmd.out_path.substr(cmd.out_path.size() - 5) == ".json";
        export_report(report, cmd.out_path, json ? ReportFormat::json : ReportFormat::csv);
        write_sidecar(cfg, cmd.out_path);
    }
    const bool failed = std::any_of(report.points.begin(), report.points.end(), [](const SweepPoint& p) { return !p.ok; });
    return failed ? kExitRuntime : kExitOk;
}

int do_gradcheck(const RunConfig& cfg, std::ostream& out) {
    const nn::GradcheckProblem problem = nn::tiny_gradcheck_problem(derive_seed(cfg.seed, Stream::gradcheck, 0));
    nn::GradcheckOptions options;
    options.seed = derive_seed(cfg.seed, Stream::gradcheck, 1);
    const nn::GradcheckReport r = nn::finite_difference_gradcheck(problem.params, problem.batch, problem.labels, options);
    char line[160];
    std::snprintf(line, sizeof line, "max_relative_error = %.3e  (%s)\n", r.max_relative_error, r.worst_coordinate.c_str());
    out << line << "checked = " << r.checked << "  unresolved = " << r.unresolved
        << "  skipped_kinks = " << r.skipped_kinks << '\n';
    for (const auto& [kind, count] : r.checked_per_kind) out << "  " << nn::to_string(kind) << ": " << count << '\n';
    const bool pass = r.max_relative_error < kGradcheckThreshold && r.checked >= kGradcheckMinCoordinates &&
                      r.checked_per_kind.size() == 4;
    out << (pass ? "PASS" : "FAIL") << '\n';
    return pass ? kExitOk : kExitThreshold;
}

int do_oracle_check(const RunConfig& cfg, std::ostream& out) {
    std::size_t mismatches = 0;
    for (std::size_t s = 0; s < std::size(kOracleSnrs); ++s) {
        std::size_t bad = 0;
        for (std::size_t i = 0; i < cfg.oracle_instances; ++i) {
            ChannelConfig c = cfg.channel;
            c.snr_db = kOracleSnrs[s];
            c.noiseless = false;
            c.seed = derive_seed(cfg.seed, Stream::oracle_instances, s * cfg.oracle_instances + i);
            const LinkRealization link = simulate_link(c, cfg.oracle_bits);
            if (!(map_sequence_detector(link) == exhaustive_map_oracle(link.received, c, link.noise_sigma))) ++bad;
        }
        out << "snr " << kOracleSnrs[s] << " dB: " << cfg.oracle_instances - bad << '/' << cfg.oracle_instances
            << " match\n";
        mismatches += bad;
    }
    out << (mismatches == 0 ? "PASS" : "FAIL") << '\n';
    return mismatches == 0 ? kExitOk : kExitThreshold;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Neural equalizer for a simulated visible-light OOK link", "lumeneq"};
    app.require_subcommand(1);
    app.fallthrough(false);

    RunConfig defaults;
    defaults.apply_profile(Profile::full);

    const std::pair<const char*, const char*> subcommands[] = {
        {"simulate", "write one link realization as CSV"},
        {"train", "train on one SNR point, save the model and its history"},
        {"evaluate", "score a saved model on a fresh test link"},
        {"sweep", "train and score every SNR of the grid, write a report"},
        {"gradcheck", "finite-difference gradient check on the tiny model"},
        {"oracle-check", "compare the Viterbi detector with exhaustive search"},
    };
    std::vector<std::unique_ptr<Command>> commands;
    for (const auto& [name, help] : subcommands) {
        auto cmd = std::make_unique<Command>();
        cmd->app = app.add_subcommand(name, help);
        add_config_flags(*cmd, defaults);
        const std::string n = name;
        if (n == "simulate" || n == "sweep") {
            cmd->app->add_option("--out", cmd->out_path, n == "sweep" ? "report path (.csv or .json); stdout if omitted"
                                                                      : "CSV path; stdout if omitted");
        }
        if (n == "train" || n == "evaluate") {
            cmd->app->add_option("--model", cmd->model_path, "model file")->required();
        }
        commands.push_back(std::move(cmd));
    }

    if (!args.empty() && !args.front().empty() && args.front().front() != '-' &&
        std::none_of(std::begin(subcommands), std::end(subcommands), [&](const auto& s) { return args.front() == s.first; })) {
        err << "error: unknown subcommand '" << args.front() << "'\n\n" << app.help();
        return kExitConfig;
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const auto parsed = app.get_subcommands();
        err << (parsed.empty() ? app.help() : parsed.front()->help());
        return kExitConfig;
    }

    for (const auto& cmd : commands) {
        if (!cmd->app->parsed()) continue;
        const std::string name = cmd->app->get_name();
        RunConfig cfg;
        try {
            cfg = resolve(*cmd);
        } catch (const Error& e) {
            err << "error: " << e.what() << '\n';
            return kExitConfig;
        }
        try {
            if (name == "simulate") return do_simulate(cfg, *cmd, out, err);
            if (name == "train") return do_train(cfg, *cmd, out, err);
            if (name == "evaluate") return do_evaluate(cfg, *cmd, out, err);
            if (name == "sweep") return do_sweep(cfg, *cmd, out, err);
            if (name == "gradcheck") return do_gradcheck(cfg, out);
            return do_oracle_check(cfg, out);
        } catch (const ConfigError& e) {
            err << "error: " << e.what() << '\n';
            return kExitConfig;
        } catch (const std::exception& e) {
            err << "error: " << e.what() << '\n';
            return kExitRuntime;
        }
    }
    return kExitConfig;
}

}  // namespace lumeneq::cli
