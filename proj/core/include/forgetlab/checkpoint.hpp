// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "forgetlab/toy_tasks.hpp"
#include "forgetlab/trainer.hpp"

namespace forgetlab::io {

/// Container layout: a "FLAB1" magic line, a kind line ("checkpoint" or
/// "task_suite"), then one JSON document. Matrices are stored row-major with
/// round-trip exact doubles.
inline constexpr std::string_view kMagic = "FLAB1";

[[nodiscard]] std::string encode_checkpoint(const train::Checkpoint& checkpoint);
[[nodiscard]] train::Checkpoint decode_checkpoint(std::string_view text);
void write_checkpoint(const std::string& path, const train::Checkpoint& checkpoint);
[[nodiscard]] train::Checkpoint read_checkpoint(const std::string& path);

[[nodiscard]] std::string encode_task_suite(const std::vector<toy::ToyTask>& tasks);
[[nodiscard]] std::vector<toy::ToyTask> decode_task_suite(std::string_view text);
void write_task_suite(const std::string& path, const std::vector<toy::ToyTask>& tasks);
[[nodiscard]] std::vector<toy::ToyTask> read_task_suite(const std::string& path);

/// Flat JSON object with one key per TrainConfig field (M and lambda appear
/// as "m_percent" and "lambda").
[[nodiscard]] std::string train_config_json(const train::TrainConfig& config);
/// Overrides the fields of `base` present in `json`; unknown keys and
/// wrongly typed values throw ValidationError.
[[nodiscard]] train::TrainConfig parse_train_config_json(std::string_view json, const train::TrainConfig& base);

[[nodiscard]] std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace forgetlab::io
