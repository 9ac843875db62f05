#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_map>

#include "ensplan/ensemble.hpp"
#include "ensplan/planner.hpp"
#include "ensplan/replay.hpp"
#include "ensplan/sokoban.hpp"
#include "ensplan/trainer.hpp"
#include "test_envs.hpp"

namespace ensplan::testing {

namespace {

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(3);
  s << x;
  return s.str();
}

}  // namespace

Check factual_closed_form() {
  // values_t = gamma^(T-2-t) for t <= T-2, values_{T-1} = 0, from the direct
  // power formula rather than the recursion.
  int cases = 0;
  for (double gamma : {0.99, 0.9, 0.5, 1.0}) {
    for (std::size_t T = 1; T <= 60; ++T) {
      const auto v = evaluate_episode(T, {}, true, ValueTarget::factual, gamma, 0.1);
      for (std::size_t t = 0; t < T; ++t) {
        const double want = t + 1 == T ? 0.0 : std::pow(gamma, static_cast<double>(T - 2 - t));
        if (std::abs(v[t] - want) > 1e-12 * std::max(1.0, want))
          return {false, "T=" + std::to_string(T) + " t=" + std::to_string(t) + " got " + fmt(v[t]) + " want " +
                             fmt(want)};
      }
      const auto u = evaluate_episode(T, {}, false, ValueTarget::factual, gamma, 0.1);
      if (std::any_of(u.begin(), u.end(), [](double x) { return x != 0.0; }))
        return {false, "unsolved episode of length " + std::to_string(T) + " has nonzero values"};
      ++cases;
    }
  }
  return {true, std::to_string(cases) + " (gamma, T) cases"};
}

namespace {

double batch_loss(const NetParams& net, const std::vector<std::vector<double>>& xs, const std::vector<double>& ys,
                  const std::vector<double>& ws, double l2) {
  double loss = 0.0;
  for (std::size_t b = 0; b < xs.size(); ++b) {
    const double e = net_forward(net, xs[b]) - ys[b];
    loss += ws[b] * e * e;
  }
  loss /= static_cast<double>(xs.size());
  double sq = 0.0;
  for (double p : net.params) sq += p * p;
  return loss + l2 * sq;
}

// Smallest |pre-activation| over the hidden units for the batch.
double kink_margin(const NetParams& net, const std::vector<std::vector<double>>& xs) {
  double margin = INFINITY;
  for (const auto& x : xs) {
    std::vector<double> a = x;
    std::size_t off = 0;
    for (int l = 0; l + 1 < net.layer_count(); ++l) {
      const int in = net.layer_in(l), out = net.layer_out(l);
      std::vector<double> z(static_cast<std::size_t>(out));
      for (int o = 0; o < out; ++o) {
        double s = net.params[off + static_cast<std::size_t>(in) * out + o];
        for (int i = 0; i < in; ++i) s += a[static_cast<std::size_t>(i)] * net.params[off + static_cast<std::size_t>(i) * out + o];
        z[static_cast<std::size_t>(o)] = s;
        margin = std::min(margin, std::abs(s));
      }
      off += static_cast<std::size_t>(in + 1) * out;
      for (auto& v : z) v = std::max(v, 0.0);
      a = std::move(z);
    }
  }
  return margin;
}

}  // namespace

Check gradient_check(Arch arch, int draws) {
  Rng rng = make_rng(2024, static_cast<std::uint64_t>(arch));
  const double h = 1e-5;
  double worst = 0.0;
  int accepted = 0;
  for (int attempt = 0; accepted < draws && attempt < draws * 50; ++attempt) {
    const int input = uniform_int(rng, 3, 12);
    const std::vector<int> hidden = arch == Arch::mlp ? std::vector<int>{50, 50} : std::vector<int>{};
    NetParams net = net_init(arch, input, hidden, rng());
    for (auto& p : net.params) p += 0.1 * (uniform01(rng) - 0.5);  // nonzero biases too
    const int rows = uniform_int(rng, 1, 8);
    std::vector<std::vector<double>> xs(static_cast<std::size_t>(rows));
    std::vector<double> ys, ws;
    for (auto& x : xs) {
      x.resize(static_cast<std::size_t>(input));
      for (auto& v : x) v = uniform01(rng) < 0.3 ? 0.0 : 2.0 * uniform01(rng) - 1.0;
      ys.push_back(2.0 * uniform01(rng) - 1.0);
      ws.push_back(uniform01(rng) < 0.25 ? 0.0 : 1.0);
    }
    const double l2 = uniform01(rng) * 1e-2;
    if (arch == Arch::mlp && kink_margin(net, xs) < 1e-3) continue;  // finite differences straddle a ReLU kink

    std::vector<Sample> batch;
    for (std::size_t b = 0; b < xs.size(); ++b) batch.push_back({xs[b], ys[b], ws[b], 0.0});
    std::vector<double> grad;
    net_grad(net, batch, l2, grad);
    for (std::size_t k = 0; k < net.params.size(); ++k) {
      NetParams plus = net, minus = net;
      plus.params[k] += h;
      minus.params[k] -= h;
      const double fd = (batch_loss(plus, xs, ys, ws, l2) - batch_loss(minus, xs, ys, ws, l2)) / (2 * h);
      const double rel = std::abs(grad[k] - fd) / std::max({std::abs(grad[k]), std::abs(fd), 1e-6});
      worst = std::max(worst, rel);
    }
    ++accepted;
  }
  if (accepted < draws) return {false, "could not draw kink-free batches"};
  return {worst <= 1e-4, to_string(arch) + ": " + std::to_string(accepted) + " draws, max rel err " + fmt(worst)};
}

Check penalty_conservation(int passes) {
  RandomGraphEnv env(40, 3, 5);
  FunctionEvaluator eval(4, [](const State& s, int i) { return std::sin(ChainEnv::pos(s) * 1.7 + i); });
  Rng rng = make_rng(3, 3);
  PlannerConfig cfg;
  cfg.penalty_p = 0.37;
  cfg.gamma = 0.95;
  cfg.measure = {RiskKind::mean_std, 1.0};
  Search search(env, eval, cfg, rng);
  auto root = search.make_node(env.reset(0), false);
  double worst = 0.0;
  int dead_ends = 0;
  for (int p = 0; p < passes; ++p) {
    std::unordered_map<const GraphEntry*, GraphEntry> before;
    for (auto& [k, e] : search.table()) before[&e] = e;

    auto d = search.traversal(*root);
    auto v = search.expand_leaf(*d.leaf, d.dead_end);
    const auto leaf_value = v;
    search.backpropagate(v, d.path);
    dead_ends += d.dead_end ? 1 : 0;

    // Expected entries: plain running-mean updates of the pre-pass values;
    // on-path penalties must have cancelled exactly.
    std::unordered_map<const GraphEntry*, std::vector<double>> expect;
    auto mean_in = [](const GraphEntry& e, const std::vector<double>& x) {
      std::vector<double> out(x.size());
      const double c = static_cast<double>(e.count);
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = (e.value[i] * c + x[i]) / (c + 1.0);
      return out;
    };
    if (d.leaf->terminal || d.dead_end) {
      GraphEntry b = before.at(d.leaf->entry);
      if (d.dead_end)
        for (auto& x : b.value) x -= cfg.penalty_p;  // the dead-end node is not on the path
      expect[d.leaf->entry] = mean_in(b, leaf_value);
    }
    std::vector<double> w = leaf_value;
    for (auto it = d.path.rbegin(); it != d.path.rend(); ++it) {
      const double r = it->first->rewards[static_cast<std::size_t>(it->second)];
      for (auto& x : w) x = r + cfg.gamma * x;
      expect[it->first->entry] = mean_in(before.at(it->first->entry), w);
    }
    for (auto& [k, e] : search.table()) {
      auto found = before.find(&e);
      if (found == before.end()) continue;  // created by this expansion
      const auto& want = expect.count(&e) ? expect[&e] : found->second.value;
      for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(e.value[i] - want[i]));
    }
  }
  return {worst <= 1e-12, std::to_string(passes) + " passes (" + std::to_string(dead_ends) +
                              " dead ends), max deviation " + fmt(worst)};
}

Check vote_scores_sum(int trials) {
  Rng rng = make_rng(11, 0);
  for (int t = 0; t < trials; ++t) {
    const int rows = uniform_int(rng, 1, 20), cols = uniform_int(rng, 2, 6);
    std::vector<double> q(static_cast<std::size_t>(rows * cols));
    for (auto& x : q) x = uniform_int(rng, 0, 3);  // plenty of ties
    const auto s = score_actions(q, rows, cols, {RiskKind::vote, 0.0}, rng);
    double sum = 0.0;
    for (double x : s) sum += x;
    if (sum != rows) return {false, "trial " + std::to_string(t) + ": scores sum to " + fmt(sum)};
  }
  return {true, std::to_string(trials) + " random matrices"};
}

Check batch_pattern_half_ratio() {
  ReplayBuffer buf({1000, 0.5, 64});
  Rng rng = make_rng(1, 1);
  for (int e = 0; e < 6; ++e) {
    EpisodeRecord r;
    for (int t = 0; t < 3 + e; ++t) r.transitions.push_back({ChainEnv::at(t), 0, 0.0});
    r.values.assign(r.transitions.size(), 0.0);
    r.solved = e % 2 == 0;
    buf.add(std::move(r), nullptr, rng);
  }
  for (int rep = 0; rep < 20; ++rep) {
    const auto b = buf.batch(rng);
    for (std::size_t i = 0; i < b.size(); ++i) {
      const bool want_solved = (i + 1) % 2 == 1;  // slot b = i + 1
      if (b[i].solved != want_solved) return {false, "slot " + std::to_string(i + 1) + " came from the wrong population"};
    }
  }
  return {true, "20 batches of 64 follow solved,unsolved,..."};
}

Check no_reevaluation() {
  RandomGraphEnv env(60, 4, 9);
  Rng rng = make_rng(4, 4);
  PlannerConfig cfg;
  cfg.measure = {RiskKind::mean_std, 2.0};
  std::map<std::string, int> per_state;
  FunctionEvaluator counting(3, [&](const State& s, int i) {
    if (i == 0) ++per_state[s.bytes];
    return 0.01 * ChainEnv::pos(s) - 0.1 * i;
  });
  Search search(env, counting, cfg, rng);
  auto root = search.make_node(env.reset(0), false);
  long worst_pass = 0;
  for (int p = 0; p < 500; ++p) {
    const long before = counting.calls;
    search.run_pass(*root);
    worst_pass = std::max(worst_pass, counting.calls - before);
  }
  for (const auto& [k, n] : per_state)
    if (n != 1) return {false, "a state was evaluated " + std::to_string(n) + " times"};
  if (worst_pass > env.action_count()) return {false, "a pass made " + std::to_string(worst_pass) + " evaluations"};
  if (static_cast<std::uint64_t>(counting.calls) != search.evaluations()) return {false, "evaluation counter mismatch"};
  return {true, std::to_string(per_state.size()) + " states evaluated once each, <= " + std::to_string(worst_pass) +
                    " per pass"};
}

Check full_run_determinism() {
  RunConfig cfg = preset("deep_sea");
  cfg.env.deep_sea_size = 8;
  cfg.run.total_env_steps = 6000;
  cfg.run.seed = 17;
  std::string out[2];
  std::string ckpt[2];
  for (int i = 0; i < 2; ++i) {
    std::ostringstream m;
    TrainOutputs o;
    o.metrics = &m;
    const auto r = train(cfg, o);
    out[i] = m.str();
    std::ostringstream c;
    write_ensemble(c, r.ensemble, checkpoint_metadata(cfg));
    ckpt[i] = c.str();
  }
  if (out[0] != out[1]) return {false, "metrics differ between identical runs"};
  if (ckpt[0] != ckpt[1]) return {false, "checkpoints differ between identical runs"};
  return {true, "metrics (" + std::to_string(out[0].size()) + " bytes) and checkpoint byte-identical"};
}

Check generator_solvability(int boards) {
  GeneratorParams params;  // 10x10, 4 boxes, 30 pulls
  int ok = 0;
  for (int i = 0; i < boards; ++i) {
    const auto g = sokoban_generate(params, static_cast<std::uint64_t>(i));
    SokobanConfig sc;
    sc.boards = {g.board};
    sc.max_episode_len = 1000;
    Sokoban env(sc);
    State s = env.reset(0);
    bool solved = false;
    for (std::size_t k = 0; k < g.solution.size() && !solved; ++k) {
      const auto out = env.step(s, g.solution[k]);
      s = out.next_state;
      solved = out.solved && k + 1 == g.solution.size();
    }
    ok += solved ? 1 : 0;
  }
  return {ok == boards, std::to_string(ok) + "/" + std::to_string(boards) + " boards solved by forward replay"};
}

Check chain_optimal(int seeds) {
  int optimal = 0;
  for (int seed = 0; seed < seeds; ++seed) {
    ChainEnv env(5, 3, static_cast<std::uint64_t>(seed));
    const double gamma = 0.99;
    FunctionEvaluator exact(3, [&](const State& s, int) { return env.exact_value(ChainEnv::pos(s), gamma); });
    PlannerConfig cfg;
    cfg.gamma = gamma;
    cfg.penalty_p = 0.0;
    cfg.penalty_e = 0.0;
    cfg.measure = {RiskKind::mean_std, 1.0};
    Rng rng = make_rng(static_cast<std::uint64_t>(seed), 8);
    const auto r = run_episode(env, env.reset(0), exact, cfg, rng);
    bool good = r.solved && r.transitions.size() == 5;
    for (std::size_t t = 0; good && t < r.transitions.size(); ++t)
      good = r.transitions[t].action == env.correct(static_cast<int>(t));
    optimal += good ? 1 : 0;
  }
  return {optimal == seeds, std::to_string(optimal) + "/" + std::to_string(seeds) + " seeds optimal"};
}

}  // namespace ensplan::testing
