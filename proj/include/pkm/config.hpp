#pragma once

#include <filesystem>

#include "json.hpp"
#include "pkm/experiments.hpp"

namespace pkm::config {

/// Strict schema: unknown fields anywhere in the document are rejected with
/// a ConfigError before anything is allocated.
experiments::ExperimentSpec spec_from_json(const nlohmann::json& j);

/// Emits every field with defaults and derived values resolved; parsing the
/// result gives the same spec back (round-trip stable).
nlohmann::json spec_to_json(const experiments::ExperimentSpec& spec);

experiments::ExperimentSpec load_spec_file(const std::filesystem::path& path);

}  // namespace pkm::config
