#include "ensplan/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "ensplan/bytes.hpp"

namespace ensplan {

void validate(const PlannerConfig& cfg) {
  if (cfg.passes < 1) throw std::invalid_argument("planner.passes must be at least 1");
  if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) throw std::invalid_argument("planner.gamma must lie in (0, 1]");
  if (cfg.max_episode_len < 0) throw std::invalid_argument("max_episode_len must be nonnegative");
  if (cfg.measure.kappa < 0.0) throw std::invalid_argument("risk.kappa must be nonnegative");
}

Search::Search(const Model& model, const StateEvaluator& evaluator, PlannerConfig cfg, Rng& rng)
    : model_(model), evaluator_(evaluator), cfg_(cfg), rng_(rng), dim_(evaluator.dimension()) {
  validate(cfg_);
  if (dim_ < 1) throw std::invalid_argument("value source dimension must be positive");
}

GraphEntry& Search::entry(const State& state, bool terminal) {
  auto [it, inserted] = table_.try_emplace(state_key(state));
  if (inserted) {
    it->second.value.assign(static_cast<std::size_t>(dim_), 0.0);
    if (!terminal) {
      evaluator_.evaluate(state, it->second.value);
      ++evaluations_;
    }
  }
  return it->second;
}

std::unique_ptr<TreeNode> Search::make_node(State state, bool terminal) {
  auto node = std::make_unique<TreeNode>();
  node->entry = &entry(state, terminal);
  node->state = std::move(state);
  node->terminal = terminal;
  return node;
}

void Search::q_hat(const TreeNode& node, int action, std::span<double> out) const {
  if (!node.expanded) throw std::logic_error("q_hat on an unexpanded node");
  const auto a = static_cast<std::size_t>(action);
  const TreeNode& child = *node.children.at(a);
  const double r = node.rewards[a];
  if (child.terminal) {
    std::fill(out.begin(), out.end(), r);
    return;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = r + cfg_.gamma * child.entry->value[i];
}

std::optional<int> Search::choose_action(const TreeNode& node, std::span<const GraphEntry* const> seen,
                                         std::vector<double>* scores_out) {
  const int actions = static_cast<int>(node.children.size());
  thread_local std::vector<int> candidates;
  candidates.clear();
  for (int a = 0; a < actions; ++a) {
    const GraphEntry* child = node.children[static_cast<std::size_t>(a)]->entry;
    if (cfg_.avoid_loops && std::find(seen.begin(), seen.end(), child) != seen.end()) continue;
    candidates.push_back(a);
  }
  if (scores_out) scores_out->assign(static_cast<std::size_t>(actions), std::numeric_limits<double>::quiet_NaN());
  if (candidates.empty()) return std::nullopt;

  const int cols = static_cast<int>(candidates.size());
  qbuf_.resize(static_cast<std::size_t>(dim_) * cols);
  thread_local std::vector<double> column;
  column.resize(static_cast<std::size_t>(dim_));
  for (int j = 0; j < cols; ++j) {
    q_hat(node, candidates[static_cast<std::size_t>(j)], column);
    for (int i = 0; i < dim_; ++i) qbuf_[static_cast<std::size_t>(i) * cols + j] = column[static_cast<std::size_t>(i)];
  }
  const auto scores = score_actions(qbuf_, dim_, cols, cfg_.measure, rng_);
  const int best = argmax_random_tie(scores, rng_);
  if (scores_out)
    for (int j = 0; j < cols; ++j)
      (*scores_out)[static_cast<std::size_t>(candidates[static_cast<std::size_t>(j)])] = scores[static_cast<std::size_t>(j)];
  return candidates[static_cast<std::size_t>(best)];
}

Search::Descent Search::traversal(TreeNode& root) {
  Descent d;
  TreeNode* n = &root;
  std::vector<const GraphEntry*> seen;
  while (!n->is_leaf()) {
    for (double& x : n->entry->value) x -= cfg_.penalty_p;
    // Besides the path, the node itself counts as seen so that a self-loop
    // (a blocked move) never re-enters it.
    seen.clear();
    for (const auto& [p, a] : d.path) seen.push_back(p->entry);
    seen.push_back(n->entry);
    const auto a = choose_action(*n, seen);
    if (!a) {
      d.dead_end = true;
      break;
    }
    d.path.emplace_back(n, *a);
    n = n->children[static_cast<std::size_t>(*a)].get();
  }
  d.leaf = n;
  return d;
}

std::vector<double> Search::expand_leaf(TreeNode& leaf, bool dead_end) {
  const auto dim = static_cast<std::size_t>(dim_);
  if (leaf.terminal) {
    std::vector<double> zero(dim, 0.0);
    update(*leaf.entry, zero);
    return zero;
  }
  if (dead_end) {
    std::vector<double> v(dim, cfg_.dead_end_value);
    update(*leaf.entry, v);
    return v;
  }
  const int actions = model_.action_count();
  leaf.rewards.assign(static_cast<std::size_t>(actions), 0.0);
  leaf.children.clear();
  for (int a = 0; a < actions; ++a) {
    StepOutcome out = model_.step(leaf.state, a);
    leaf.rewards[static_cast<std::size_t>(a)] = out.reward;
    leaf.children.push_back(make_node(std::move(out.next_state), out.done));
  }
  leaf.expanded = true;
  return leaf.entry->value;
}

void Search::backpropagate(std::vector<double> v, const std::vector<std::pair<TreeNode*, int>>& path) {
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    TreeNode& n = *it->first;
    for (double& x : n.entry->value) x += cfg_.penalty_p;
    const double r = n.rewards[static_cast<std::size_t>(it->second)];
    for (double& x : v) x = r + cfg_.gamma * x;
    update(*n.entry, v);
  }
}

void Search::update(GraphEntry& entry, std::span<const double> v) {
  if (v.size() != entry.value.size()) throw std::invalid_argument("update: dimension mismatch");
  const double c = static_cast<double>(entry.count);
  for (std::size_t i = 0; i < v.size(); ++i) entry.value[i] = (entry.value[i] * c + v[i]) / (c + 1.0);
  ++entry.count;
}

Search::Descent Search::run_pass(TreeNode& root) {
  Descent d = traversal(root);
  auto v = expand_leaf(*d.leaf, d.dead_end);
  backpropagate(std::move(v), d.path);
  return d;
}

EpisodeResult run_episode(const Environment& env, const Model& model, const State& start,
                          const StateEvaluator& evaluator, const PlannerConfig& cfg, Rng& rng, std::ostream* trace) {
  const int max_len = cfg.max_episode_len > 0 ? cfg.max_episode_len : env.spec().max_episode_len;
  Search search(model, evaluator, cfg, rng);
  EpisodeResult result;
  auto root = search.make_node(start, model.is_terminal(start));
  if (root->terminal) {
    result.done = true;
    result.final_state = start;
    return result;
  }

  std::vector<const GraphEntry*> roots;
  std::vector<double> scores;
  for (int step = 0; step < max_len; ++step) {
    for (double& x : root->entry->value) x -= cfg.penalty_e;

    nlohmann::json passes = nlohmann::json::array();
    for (int p = 0; p < cfg.passes; ++p) {
      const auto d = search.run_pass(*root);
      if (trace) {
        nlohmann::json keys = nlohmann::json::array();
        for (const auto& [n, a] : d.path) keys.push_back(bytes::to_hex(state_key(n->state)));
        passes.push_back({{"pass", p},
                          {"path", std::move(keys)},
                          {"leaf", bytes::to_hex(state_key(d.leaf->state))},
                          {"dead_end", d.dead_end}});
      }
    }

    const GraphEntry* seen[] = {root->entry};
    auto choice = search.choose_action(*root, seen, &scores);
    int action;
    if (choice) {
      action = *choice;
    } else {
      action = uniform_int(rng, 0, env.action_count() - 1);
      ++result.root_fallbacks;
    }

    StepOutcome out = env.step(root->state, action);
    if (trace) {
      nlohmann::json line = {{"step", step},
                             {"root", bytes::to_hex(state_key(root->state))},
                             {"passes", std::move(passes)},
                             {"action", action},
                             {"scores", scores},
                             {"fallback", !choice.has_value()}};
      *trace << line.dump() << '\n';
    }

    result.transitions.push_back({root->state, action, out.reward});
    roots.push_back(root->entry);
    result.total_return += out.reward;

    std::unique_ptr<TreeNode> next;
    if (root->expanded) next = std::move(root->children[static_cast<std::size_t>(action)]);
    if (!next || !(next->state == out.next_state)) next = search.make_node(out.next_state, out.done);
    root = std::move(next);

    if (out.done) {
      result.done = true;
      result.solved = out.solved;
      break;
    }
  }

  result.final_state = root->state;
  for (const GraphEntry* e : roots) result.root_values.push_back(e->value);
  result.evaluations = search.evaluations();
  result.table_size = search.table().size();
  return result;
}

}  // namespace ensplan
