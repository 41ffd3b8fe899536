// SPDX-License-Identifier: Apache-2.0
// JSON views of configuration structs, shared by model files and reports.
#pragma once

#include <json.hpp>

#include "lumeneq/channel.hpp"
#include "lumeneq/nn/model.hpp"
#include "lumeneq/pipeline.hpp"

namespace lumeneq::detail {

inline nlohmann::json to_json(const nn::ModelArch& a) {
    return {{"window", a.window},           {"conv1_filters", a.conv1_filters}, {"conv1_kernel", a.conv1_kernel},
            {"conv2_filters", a.conv2_filters}, {"conv2_kernel", a.conv2_kernel}, {"pool", a.pool},
            {"conv_dropout", a.conv_dropout}, {"lstm1_units", a.lstm1_units},   {"lstm2_units", a.lstm2_units},
            {"dense_units", a.dense_units}, {"dense_dropout", a.dense_dropout}, {"l2", a.l2}};
}

inline nn::ModelArch arch_from_json(const nlohmann::json& j) {
    nn::ModelArch a;
    a.window = j.at("window");
    a.conv1_filters = j.at("conv1_filters");
    a.conv1_kernel = j.at("conv1_kernel");
    a.conv2_filters = j.at("conv2_filters");
    a.conv2_kernel = j.at("conv2_kernel");
    a.pool = j.at("pool");
    a.conv_dropout = j.at("conv_dropout");
    a.lstm1_units = j.at("lstm1_units");
    a.lstm2_units = j.at("lstm2_units");
    a.dense_units = j.at("dense_units");
    a.dense_dropout = j.at("dense_dropout");
    a.l2 = j.at("l2");
    return a;
}

inline nlohmann::json to_json(const ChannelConfig& c) {
    return {{"snr_db", c.is_noiseless() ? nlohmann::json("inf") : nlohmann::json(c.snr_db)},
            {"noiseless", c.noiseless},
            {"multipath_delay", c.multipath_delay},
            {"multipath_gain", c.multipath_gain},
            {"led_steepness", c.led_steepness},
            {"led_midpoint", c.led_midpoint},
            {"flip_prob", c.flip_prob},
            {"responsivity", c.responsivity},
            {"alignment_offset", c.alignment_offset},
            {"seed", c.seed}};
}

inline nlohmann::json to_json(const TrainConfig& t) {
    return {{"learning_rate", t.learning_rate}, {"batch_size", t.batch_size},
            {"max_epochs", t.max_epochs},       {"early_stop_patience", t.early_stop_patience},
            {"lr_factor", t.lr_factor},         {"lr_patience", t.lr_patience},
            {"min_lr", t.min_lr},               {"split_ratio", t.split_ratio},
            {"seed", t.seed}};
}

}  // namespace lumeneq::detail
