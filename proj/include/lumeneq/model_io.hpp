// SPDX-License-Identifier: Apache-2.0
//
// Model file layout (all integers little-endian):
//   "LUMENEQ1"                      8-byte magic
//   u64 n, then n bytes of JSON     architecture, hashes, normalization, seed
//   f32 values per tensor           declaration order, column-major
//   u64 FNV-1a of all prior bytes
#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lumeneq/pipeline.hpp"

namespace lumeneq {

inline constexpr char kModelMagic[] = "LUMENEQ1";

std::vector<unsigned char> serialize_model(const TrainedModel& model);

/// Throws TruncatedFileError, VersionMismatchError, ChecksumError,
/// ArchitectureMismatchError or ModelFileError.
TrainedModel deserialize_model(const std::vector<unsigned char>& bytes,
                               const std::optional<nn::ModelArch>& expected_arch = std::nullopt);

void save_model(const TrainedModel& model, const std::string& path);

TrainedModel load_model(const std::string& path, const std::optional<nn::ModelArch>& expected_arch = std::nullopt);

}  // namespace lumeneq
