#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ensplan/ensemble.hpp"
#include "ensplan/env.hpp"
#include "ensplan/random.hpp"

namespace ensplan {

// Transposition-table record shared by every tree node holding the same
// environment state. value is a running mean (see update()).
struct GraphEntry {
  std::vector<double> value;
  std::uint64_t count = 0;
};

struct PlannerConfig {
  int passes = 10;
  int max_episode_len = 0;  // 0: take the environment's own cap
  double gamma = 0.99;
  double penalty_p = 0.1;
  double penalty_e = 0.1;
  double dead_end_value = -2.0;
  bool avoid_loops = true;
  RiskMeasure measure{RiskKind::mean_std, 0.0};
};

void validate(const PlannerConfig& cfg);

struct TreeNode {
  State state;
  GraphEntry* entry = nullptr;
  bool terminal = false;  // done flag of the generating edge
  bool expanded = false;
  std::vector<double> rewards;
  std::vector<std::unique_ptr<TreeNode>> children;

  bool is_leaf() const { return !expanded; }
};

// One search owns its table and tree. Entries are created on first sight of
// a state: terminal states get a zero vector, anything else is evaluated
// once by the value source and never again.
class Search {
 public:
  Search(const Model& model, const StateEvaluator& evaluator, PlannerConfig cfg, Rng& rng);

  const PlannerConfig& config() const { return cfg_; }
  int dimension() const { return dim_; }

  GraphEntry& entry(const State& state, bool terminal);
  const std::unordered_map<std::string, GraphEntry>& table() const { return table_; }
  std::unordered_map<std::string, GraphEntry>& table() { return table_; }
  std::uint64_t evaluations() const { return evaluations_; }

  std::unique_ptr<TreeNode> make_node(State state, bool terminal);

  // reward(a) + gamma * child value; terminal children count as zero.
  void q_hat(const TreeNode& node, int action, std::span<double> out) const;

  // seen holds the entries of states that must not be re-entered.
  std::optional<int> choose_action(const TreeNode& node, std::span<const GraphEntry* const> seen,
                                   std::vector<double>* scores_out = nullptr);

  struct Descent {
    std::vector<std::pair<TreeNode*, int>> path;
    TreeNode* leaf = nullptr;
    bool dead_end = false;
  };
  Descent traversal(TreeNode& root);
  std::vector<double> expand_leaf(TreeNode& leaf, bool dead_end);
  void backpropagate(std::vector<double> v, const std::vector<std::pair<TreeNode*, int>>& path);
  static void update(GraphEntry& entry, std::span<const double> v);

  // traversal, expand_leaf, backpropagate. Returns the descent for tracing.
  Descent run_pass(TreeNode& root);

 private:
  const Model& model_;
  const StateEvaluator& evaluator_;
  PlannerConfig cfg_;
  Rng& rng_;
  int dim_;
  std::unordered_map<std::string, GraphEntry> table_;
  std::uint64_t evaluations_ = 0;
  std::vector<double> qbuf_;
};

struct EpisodeResult {
  std::vector<Transition> transitions;
  // Root GraphEntry vector of every transition's state, read after the last
  // real step (with the episode penalty still applied).
  std::vector<std::vector<double>> root_values;
  State final_state;
  bool solved = false;
  bool done = false;
  double total_return = 0.0;
  std::uint64_t evaluations = 0;
  std::size_t table_size = 0;
  int root_fallbacks = 0;
};

// Plays one real episode from start, planning every step with a fresh
// per-episode search. model drives the search; env advances the real state.
EpisodeResult run_episode(const Environment& env, const Model& model, const State& start,
                          const StateEvaluator& evaluator, const PlannerConfig& cfg, Rng& rng,
                          std::ostream* trace = nullptr);

inline EpisodeResult run_episode(const Environment& env, const State& start, const StateEvaluator& evaluator,
                                 const PlannerConfig& cfg, Rng& rng, std::ostream* trace = nullptr) {
  return run_episode(env, env, start, evaluator, cfg, rng, trace);
}

}  // namespace ensplan
