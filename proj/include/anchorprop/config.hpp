#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "anchorprop/network.hpp"
#include "anchorprop/propagation.hpp"

namespace anchorprop {

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t frames = 8;
  std::size_t anchors = 3;
  std::size_t steps = 10;
  std::size_t workers = 1;
  NetworkConfig network;
  EditMode mode = EditMode::kAnchored;
  std::vector<double> thresholds = {16.0, 32.0};
  std::filesystem::path output_dir = "out";

  void validate() const;
  // network with the run's seed and step count applied.
  NetworkConfig effective_network() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

// Unknown keys are rejected so typos do not silently fall back to defaults.
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Writes <dir>/provenance.json: {command, config, outputs, ...extra}.
void write_provenance(const std::filesystem::path& dir, const std::string& command,
                      const nlohmann::json& config, const nlohmann::json& extra);

}  // namespace anchorprop
