#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "irisseg/model.hpp"

namespace irisseg {

/// key=value sidecar stored next to a checkpoint blob as <blob>.meta.
using Metadata = std::map<std::string, std::string>;

std::filesystem::path sidecar_path(const std::filesystem::path& blob);

void write_key_values(const Metadata& values, const std::filesystem::path& file);
Metadata read_key_values(const std::filesystem::path& file);

/// Writes the trainable parameters as a binary blob plus the sidecar. The
/// sidecar always records model_kind and input_resolution.
void save_checkpoint(const SegModel& model, const std::filesystem::path& blob, Metadata metadata);

/// Rebuilds the model named by the sidecar and loads its parameters.
/// Throws MissingCheckpoint when either file is absent.
std::unique_ptr<SegModel> load_checkpoint(const std::filesystem::path& blob,
                                          Metadata* metadata = nullptr);

}  // namespace irisseg
