#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "wcmtl/buffer.hpp"
#include "wcmtl/model.hpp"
#include "wcmtl/sampler.hpp"
#include "wcmtl/tasks.hpp"

namespace wcmtl {

// Text snapshots: nested JSON arrays of decimals that parse back to the
// identical doubles.

std::string model_to_json(const ModelParams& params);
ModelParams model_from_json(std::string_view text);

std::string sampler_to_json(const SamplerState& state);
SamplerState sampler_from_json(std::string_view text);

/// Batches are stored as (task, rows) handles and rebuilt from the suite.
std::string buffer_to_json(const Buffer& buffer);
Buffer buffer_from_json(std::string_view text, const TaskSuite& suite);

struct Checkpoint {
  ModelParams model;
  SamplerState sampler;
  std::optional<Buffer> buffer;
};

void write_checkpoint(const std::filesystem::path& path, const ModelParams& model,
                      const SamplerState& sampler, const Buffer* buffer);
/// `suite` is needed only to restore a stored buffer.
Checkpoint read_checkpoint(const std::filesystem::path& path, const TaskSuite* suite = nullptr);

}  // namespace wcmtl
