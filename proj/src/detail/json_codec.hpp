#pragma once

// Internal JSON conversions shared between modules.

#include "biasforge/manifest.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>

namespace biasforge::detail {

using nlohmann::json;

json manifest_json(const DatasetManifest& m, const std::optional<std::filesystem::path>& path_base = std::nullopt,
                   const std::optional<std::filesystem::path>& relativize_under = std::nullopt);
DatasetManifest manifest_from(const json& j, const std::optional<std::filesystem::path>& path_base = std::nullopt);

}  // namespace biasforge::detail

#include "biasforge/render.hpp"

namespace biasforge::detail {

json render_spec_json(const RenderSpec& spec);
/// Missing keys keep the values already present in `defaults`.
RenderSpec render_spec_from(const json& j, const RenderSpec& defaults = {});

}  // namespace biasforge::detail

#include "biasforge/trainer.hpp"

namespace biasforge::detail {

json train_config_json(const TrainConfig& c);
TrainConfig train_config_from(const json& j, const TrainConfig& defaults = {});

}  // namespace biasforge::detail

#include "biasforge/bootstrap.hpp"

namespace biasforge::detail {

json bootstrap_config_json(const BootstrapConfig& c);
BootstrapConfig bootstrap_config_from(const json& j, const BootstrapConfig& defaults = {});
json stats_json(const std::vector<ClassAccuracyStats>& stats);
std::vector<ClassAccuracyStats> stats_from(const json& j);

}  // namespace biasforge::detail
