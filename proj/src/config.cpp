#include "anchorprop/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "anchorprop/error.hpp"

namespace anchorprop {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw FormatError(std::string(what) + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw FormatError(std::string(what) + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = nlohmann::json{{"grid_h", c.grid_h},
                     {"grid_w", c.grid_w},
                     {"dim", c.dim},
                     {"num_heads", c.num_heads},
                     {"pyramid", c.pyramid},
                     {"steps", c.steps},
                     {"seed", c.seed},
                     {"match_gain", c.match_gain},
                     {"residual_gain", c.residual_gain},
                     {"edit_strength", c.edit_strength},
                     {"edit_variance", c.edit_variance},
                     {"skip_gain", c.skip_gain}};
}

void from_json(const nlohmann::json& j, NetworkConfig& c) {
  reject_unknown(j,
                 {"grid_h", "grid_w", "dim", "num_heads", "pyramid", "steps", "seed", "match_gain",
                  "residual_gain", "edit_strength", "edit_variance", "skip_gain"},
                 "network config");
  read_field(j, "grid_h", c.grid_h);
  read_field(j, "grid_w", c.grid_w);
  read_field(j, "dim", c.dim);
  read_field(j, "num_heads", c.num_heads);
  read_field(j, "pyramid", c.pyramid);
  read_field(j, "steps", c.steps);
  read_field(j, "seed", c.seed);
  read_field(j, "match_gain", c.match_gain);
  read_field(j, "residual_gain", c.residual_gain);
  read_field(j, "edit_strength", c.edit_strength);
  read_field(j, "edit_variance", c.edit_variance);
  read_field(j, "skip_gain", c.skip_gain);
}

void RunConfig::validate() const {
  if (frames == 0) throw ParameterError("config: frames must be >= 1");
  if (anchors == 0) throw ParameterError("config: anchors must be >= 1");
  if (steps == 0) throw ParameterError("config: steps must be >= 1");
  if (workers == 0) throw ParameterError("config: workers must be >= 1");
  if (thresholds.empty()) throw ParameterError("config: at least one threshold");
  for (double t : thresholds) {
    if (!(t > 0.0)) throw ParameterError("config: thresholds must be positive");
  }
  if (output_dir.empty()) throw ParameterError("config: empty output directory");
  effective_network().validate();
}

NetworkConfig RunConfig::effective_network() const {
  NetworkConfig n = network;
  n.seed = seed;
  n.steps = steps;
  return n;
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"seed", c.seed},
                     {"frames", c.frames},
                     {"anchors", c.anchors},
                     {"steps", c.steps},
                     {"workers", c.workers},
                     {"network", c.effective_network()},
                     {"mode", to_string(c.mode)},
                     {"thresholds", c.thresholds},
                     {"output_dir", c.output_dir.string()}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  reject_unknown(j,
                 {"seed", "frames", "anchors", "steps", "workers", "network", "mode", "thresholds",
                  "output_dir"},
                 "run config");
  read_field(j, "seed", c.seed);
  read_field(j, "frames", c.frames);
  read_field(j, "anchors", c.anchors);
  read_field(j, "steps", c.steps);
  read_field(j, "workers", c.workers);
  if (j.contains("network")) from_json(j.at("network"), c.network);
  if (j.contains("mode")) c.mode = parse_edit_mode(j.at("mode").get<std::string>());
  read_field(j, "thresholds", c.thresholds);
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig c;
  from_json(read_json_file(path), c);
  return c;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("write failed: " + path.string());
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

void write_provenance(const std::filesystem::path& dir, const std::string& command,
                      const nlohmann::json& config, const nlohmann::json& extra) {
  nlohmann::json p = {{"command", command}, {"config", config}};
  if (extra.is_object()) {
    for (const auto& [key, value] : extra.items()) p[key] = value;
  }
  write_json_file(dir / "provenance.json", p);
}

}  // namespace anchorprop
