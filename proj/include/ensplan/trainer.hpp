#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "ensplan/config.hpp"
#include "ensplan/deep_sea.hpp"
#include "ensplan/ensemble.hpp"
#include "ensplan/env.hpp"
#include "ensplan/planner.hpp"
#include "ensplan/replay.hpp"

namespace ensplan {

std::unique_ptr<Environment> make_environment(const RunConfig& cfg);
PlannerConfig planner_config(const RunConfig& cfg);
EnsembleConfig ensemble_config(const RunConfig& cfg);
BufferConfig buffer_config(const RunConfig& cfg);

// Fresh ensemble for the run, or the learned aggregator over frozen
// checkpoint members when transfer checkpoints are configured.
Ensemble make_ensemble(const RunConfig& cfg, int observation_len);

struct MetricsRow {
  std::int64_t episode = 0;
  std::int64_t env_steps = 0;
  bool solved = false;
  int length = 0;
  double episode_return = 0.0;
  double win_rate = 0.0;  // trailing min(1000, games) games
  std::int64_t explored_states = 0;
  std::string extra;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

inline constexpr const char* metrics_header =
    "episode,env_steps,solved,length,return,win_rate_1000,explored_states,extra";
std::string format_metrics_row(const MetricsRow& row);

// Cumulative set of distinct state keys seen on real trajectories.
class ExploredGraph {
 public:
  void record(const std::vector<Transition>& transitions, const State& final_state);
  std::size_t size() const { return keys_.size(); }

 private:
  std::unordered_set<std::string> keys_;
};

// Win rate over the trailing window of games (all games while fewer).
class WinRate {
 public:
  explicit WinRate(std::size_t window = 1000) : window_(window) {}
  void add(bool solved);
  double rate() const;
  std::size_t games() const { return games_; }

 private:
  std::size_t window_;
  std::vector<std::uint8_t> ring_;
  std::size_t next_ = 0;
  std::size_t wins_ = 0;
  std::size_t games_ = 0;
};

struct TrainOutputs {
  std::ostream* metrics = nullptr;  // CSV, flushed every episode
  std::ostream* trace = nullptr;    // JSON lines
  std::function<void(const MetricsRow&)> on_episode;
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  Ensemble ensemble;
  std::optional<std::int64_t> first_solve_steps;  // env steps at the end of the first solved episode
  std::int64_t env_steps = 0;
  std::size_t solved_episodes = 0;
  std::size_t rooms_visited = 0;  // distinct regions over the run (Toy MR)
  bool converged = false;
  std::uint64_t evaluations = 0;
};

// Plan, store, train; repeated until the step budget or a stop condition.
// Deterministic in the config (including seed).
TrainResult train(const RunConfig& cfg, const TrainOutputs& outputs = {});

// Per-cell population std of the members' values on a Deep-sea grid,
// indexed [y][x].
std::vector<std::vector<double>> deep_sea_std_heatmap(const Ensemble& ensemble, const Environment& env);

// P2 graymap scaled so the maximum cell is white (all black when flat zero).
void write_pgm(std::ostream& out, const std::vector<std::vector<double>>& grid);
void write_grid_csv(std::ostream& out, const std::vector<std::vector<double>>& grid);

// Writes config.json, metrics.csv, checkpoint.bin and optionally trace.jsonl
// into dir (created if missing).
TrainResult train_to_directory(const RunConfig& cfg, const std::string& dir);

std::string checkpoint_metadata(const RunConfig& cfg);

}  // namespace ensplan
