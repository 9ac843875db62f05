#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace ensplan {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EnvSettings {
  std::string kind = "deep_sea";  // deep_sea | toy_mr | sokoban
  int max_episode_len = 0;        // 0: environment default
  int deep_sea_size = 10;
  std::int64_t deep_sea_mask_seed = -1;  // -1: the run seed
  std::string toy_mr_map = "data/maps/toy_mr_6room.txt";
  std::string sokoban_mode = "single";  // single | pool | generated
  std::string sokoban_board_file;       // single/pool; empty single board is generated
  int sokoban_board_index = 0;
  int sokoban_width = 10;
  int sokoban_height = 10;
  int sokoban_boxes = 4;
  int sokoban_pull_steps = 30;
  std::int64_t sokoban_board_seed = -1;  // -1: the run seed

  friend bool operator==(const EnvSettings&, const EnvSettings&) = default;
};

struct PlannerSettings {
  int passes = 10;
  double gamma = 0.99;
  double penalty_p = 0.1;
  double penalty_e = 0.1;
  double dead_end_value = -2.0;
  bool avoid_loops = true;

  friend bool operator==(const PlannerSettings&, const PlannerSettings&) = default;
};

struct EnsembleSettings {
  int k = 20;
  int subsample = 10;  // 0: no sub-sampling
  std::string arch = "linear";
  std::vector<int> hidden;
  double prior_scale = 0.0;

  friend bool operator==(const EnsembleSettings&, const EnsembleSettings&) = default;
};

struct RiskSettings {
  std::string measure = "mean_std";
  double kappa = 50.0;

  friend bool operator==(const RiskSettings&, const RiskSettings&) = default;
};

struct MaskSettings {
  std::string policy = "static_bernoulli";
  double p = 0.5;

  friend bool operator==(const MaskSettings&, const MaskSettings&) = default;
};

struct TrainingSettings {
  std::string target = "bootstrap";
  double lr = 2.5e-4;
  double rho = 0.9;
  double eps = 1e-8;
  double l2 = 1e-4;
  int batch_size = 32;
  int updates_per_episode = 1;
  double solved_ratio = 0.5;
  std::int64_t buffer_capacity = 100000;
  bool hindsight = false;

  friend bool operator==(const TrainingSettings&, const TrainingSettings&) = default;
};

struct RunSettings {
  std::int64_t total_env_steps = 400000;
  std::uint64_t seed = 0;
  bool stop_on_first_solve = false;
  double win_rate_threshold = 0.95;  // > 1 disables the convergence stop
  int min_games = 100;
  bool trace = false;

  friend bool operator==(const RunSettings&, const RunSettings&) = default;
};

// Learned aggregation over frozen networks taken from earlier checkpoints.
struct TransferSettings {
  std::vector<std::string> checkpoints;
  int hidden = 16;
  bool averaging_init = true;

  friend bool operator==(const TransferSettings&, const TransferSettings&) = default;
};

struct RunConfig {
  std::string preset = "deep_sea";
  EnvSettings env;
  PlannerSettings planner;
  EnsembleSettings ensemble;
  RiskSettings risk;
  MaskSettings mask;
  TrainingSettings training;
  RunSettings run;
  TransferSettings transfer;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

const std::vector<std::string>& preset_names();
RunConfig preset(const std::string& name);

nlohmann::json to_json(const RunConfig& cfg);

// Layers doc over the preset it names (or deep_sea). Unknown keys and
// mistyped values raise ConfigError naming the dotted key.
RunConfig config_from_json(const nlohmann::json& doc);

// "a.b.c=value" overrides; value is read as JSON when it parses, otherwise
// as a plain string.
RunConfig apply_overrides(const RunConfig& cfg, const std::vector<std::string>& overrides);

RunConfig load_config(const std::string& path);

// Semantic checks (ranges, enum names, mask/batch compatibility).
void validate(const RunConfig& cfg);

}  // namespace ensplan
