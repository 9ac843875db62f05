#include "ensplan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "ensplan/sokoban.hpp"
#include "ensplan/toy_mr.hpp"

namespace ensplan {

std::unique_ptr<Environment> make_environment(const RunConfig& cfg) {
  const auto& e = cfg.env;
  if (e.kind == "deep_sea") {
    const std::uint64_t seed = e.deep_sea_mask_seed < 0 ? cfg.run.seed : static_cast<std::uint64_t>(e.deep_sea_mask_seed);
    return std::make_unique<DeepSea>(e.deep_sea_size, seed);
  }
  if (e.kind == "toy_mr") {
    return std::make_unique<ToyMr>(load_toy_mr(e.toy_mr_map, e.max_episode_len > 0 ? e.max_episode_len
                                                                                   : ToyMr::default_episode_cap));
  }
  if (e.kind == "sokoban") {
    SokobanConfig sc;
    sc.generator = {e.sokoban_width, e.sokoban_height, e.sokoban_boxes, e.sokoban_pull_steps, 200};
    const std::uint64_t board_seed =
        e.sokoban_board_seed < 0 ? cfg.run.seed : static_cast<std::uint64_t>(e.sokoban_board_seed);
    if (e.sokoban_mode == "generated") {
      sc.mode = SokobanConfig::Mode::generated;
      sc.max_episode_len = Sokoban::multi_board_cap;
    } else if (e.sokoban_mode == "pool") {
      sc.mode = SokobanConfig::Mode::pool;
      sc.boards = load_levels(e.sokoban_board_file);
      sc.max_episode_len = Sokoban::multi_board_cap;
    } else {
      sc.mode = SokobanConfig::Mode::single;
      if (e.sokoban_board_file.empty()) {
        sc.boards.push_back(sokoban_generate(sc.generator, board_seed).board);
      } else {
        auto boards = load_levels(e.sokoban_board_file);
        if (static_cast<std::size_t>(e.sokoban_board_index) >= boards.size())
          throw ConfigError("env.sokoban.board_index " + std::to_string(e.sokoban_board_index) + " out of range (" +
                            std::to_string(boards.size()) + " boards in file)");
        sc.boards.push_back(boards[static_cast<std::size_t>(e.sokoban_board_index)]);
      }
      sc.max_episode_len = Sokoban::single_board_cap;
    }
    if (e.max_episode_len > 0) sc.max_episode_len = e.max_episode_len;
    return std::make_unique<Sokoban>(std::move(sc));
  }
  throw ConfigError("unknown environment '" + e.kind + "'");
}

PlannerConfig planner_config(const RunConfig& cfg) {
  PlannerConfig p;
  p.passes = cfg.planner.passes;
  p.max_episode_len = cfg.env.max_episode_len;
  p.gamma = cfg.planner.gamma;
  p.penalty_p = cfg.planner.penalty_p;
  p.penalty_e = cfg.planner.penalty_e;
  p.dead_end_value = cfg.planner.dead_end_value;
  p.avoid_loops = cfg.planner.avoid_loops;
  p.measure = {parse_risk(cfg.risk.measure), cfg.risk.kappa};
  return p;
}

EnsembleConfig ensemble_config(const RunConfig& cfg) {
  EnsembleConfig e;
  e.size = cfg.ensemble.k;
  e.arch = parse_arch(cfg.ensemble.arch);
  e.hidden = cfg.ensemble.hidden;
  e.prior_scale = cfg.ensemble.prior_scale;
  e.optimizer = {cfg.training.lr, cfg.training.rho, cfg.training.eps};
  return e;
}

BufferConfig buffer_config(const RunConfig& cfg) {
  return {static_cast<std::size_t>(cfg.training.buffer_capacity), cfg.training.solved_ratio, cfg.training.batch_size};
}

Ensemble make_ensemble(const RunConfig& cfg, int observation_len) {
  const std::uint64_t seed = make_rng(cfg.run.seed, 0)();
  if (cfg.transfer.checkpoints.empty()) return Ensemble(ensemble_config(cfg), observation_len, seed);
  std::vector<NetParams> frozen;
  for (const auto& path : cfg.transfer.checkpoints) {
    const Ensemble source = load_ensemble(path);
    if (source.observation_len() != observation_len)
      throw ConfigError("transfer checkpoint '" + path + "' was trained on a different observation length");
    for (const auto& m : source.members()) frozen.push_back(m.net);
  }
  return Ensemble::aggregated(std::move(frozen), cfg.transfer.hidden,
                              {cfg.training.lr, cfg.training.rho, cfg.training.eps}, seed,
                              cfg.transfer.averaging_init);
}

std::string format_metrics_row(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%lld,%d,%d,%.10g,%.6f,%lld,", static_cast<long long>(r.episode),
                static_cast<long long>(r.env_steps), r.solved ? 1 : 0, r.length, r.episode_return, r.win_rate,
                static_cast<long long>(r.explored_states));
  return buf + r.extra;
}

void ExploredGraph::record(const std::vector<Transition>& transitions, const State& final_state) {
  for (const auto& t : transitions) keys_.insert(state_key(t.state));
  keys_.insert(state_key(final_state));
}

void WinRate::add(bool solved) {
  if (ring_.size() < window_) {
    ring_.push_back(solved ? 1 : 0);
  } else {
    wins_ -= ring_[next_];
    ring_[next_] = solved ? 1 : 0;
    next_ = (next_ + 1) % window_;
  }
  wins_ += solved ? 1 : 0;
  ++games_;
}

double WinRate::rate() const {
  return ring_.empty() ? 0.0 : static_cast<double>(wins_) / static_cast<double>(ring_.size());
}

namespace {

HindsightMapping sokoban_hindsight_mapping(double gamma) {
  return [gamma](const EpisodeRecord& rec, Rng& rng) -> std::optional<EpisodeRecord> {
    auto relabelled = sokoban_hindsight(rec.transitions, rec.final_state, rec.solved, rng);
    if (!relabelled) return std::nullopt;
    EpisodeRecord out;
    out.transitions = std::move(*relabelled);
    const std::size_t len = out.transitions.size();
    out.values = evaluate_episode(len, {}, true, ValueTarget::factual, gamma, 0.0);
    out.solved = true;
    if (!rec.masks.empty()) out.masks.assign(rec.masks.begin(), rec.masks.begin() + static_cast<long>(len));
    out.final_state = rec.final_state;
    return out;
  };
}

}  // namespace

TrainResult train(const RunConfig& cfg, const TrainOutputs& outputs) {
  validate(cfg);
  auto env = make_environment(cfg);
  const EnvSpec spec = env->spec();
  TrainResult result;
  result.ensemble = make_ensemble(cfg, spec.observation_len);
  Ensemble& ens = result.ensemble;

  const PlannerConfig pcfg = planner_config(cfg);
  ReplayBuffer buffer(buffer_config(cfg));
  const ValueTarget target = parse_value_target(cfg.training.target);
  const MaskConfig mcfg{parse_mask_policy(cfg.mask.policy), cfg.mask.p};
  const int members = ens.size();
  const int l = cfg.transfer.checkpoints.empty() ? cfg.ensemble.subsample : 0;
  const int cap = pcfg.max_episode_len > 0 ? pcfg.max_episode_len : spec.max_episode_len;

  Rng env_rng = make_rng(cfg.run.seed, 1);
  Rng sub_rng = make_rng(cfg.run.seed, 2);
  Rng mask_rng = make_rng(cfg.run.seed, 3);
  Rng tie_rng = make_rng(cfg.run.seed, 4);
  Rng buf_rng = make_rng(cfg.run.seed, 5);
  Rng hs_rng = make_rng(cfg.run.seed, 6);

  HindsightMapping hindsight;
  if (cfg.training.hindsight) hindsight = sokoban_hindsight_mapping(cfg.planner.gamma);

  const int batch = cfg.training.batch_size;
  std::vector<std::vector<double>> obs(static_cast<std::size_t>(batch),
                                       std::vector<double>(static_cast<std::size_t>(spec.observation_len)));
  std::vector<double> targets(static_cast<std::size_t>(batch));
  std::vector<std::uint8_t> masks;
  const std::vector<std::uint8_t> split =
      mcfg.policy == MaskPolicy::dynamic_split ? dynamic_split_masks(batch, members) : std::vector<std::uint8_t>{};

  ExploredGraph graph;
  WinRate win_rate(1000);
  std::unordered_set<int> rooms;
  const bool track_rooms = env->region(env->reset(0)) >= 0;

  if (outputs.metrics) *outputs.metrics << metrics_header << '\n' << std::flush;

  std::int64_t episode = 0;
  while (result.env_steps < cfg.run.total_env_steps) {
    const State start = env->reset(env_rng());
    const auto selection = subsample(members, l, sub_rng);
    const EnsembleEvaluator evaluator(*env, ens, selection);
    PlannerConfig ep = pcfg;
    ep.max_episode_len = static_cast<int>(std::min<std::int64_t>(cap, cfg.run.total_env_steps - result.env_steps));
    if (outputs.trace) *outputs.trace << nlohmann::json{{"episode", episode}}.dump() << '\n';

    EpisodeResult er = run_episode(*env, start, evaluator, ep, tie_rng, outputs.trace);
    result.evaluations += er.evaluations;
    const std::size_t len = er.transitions.size();
    result.env_steps += static_cast<std::int64_t>(len);

    graph.record(er.transitions, er.final_state);
    std::string extra;
    if (track_rooms) {
      std::unordered_set<int> here;
      for (const auto& t : er.transitions) here.insert(env->region(t.state));
      here.insert(env->region(er.final_state));
      rooms.insert(here.begin(), here.end());
      extra = "rooms=" + std::to_string(here.size()) + ";rooms_total=" + std::to_string(rooms.size());
    }

    EpisodeRecord rec;
    rec.values = evaluate_episode(len, er.root_values, er.solved, target, cfg.planner.gamma, cfg.planner.penalty_e);
    rec.masks = make_episode_masks(mcfg, members, static_cast<int>(len), mask_rng);
    rec.solved = er.solved;
    rec.final_state = er.final_state;
    rec.transitions = std::move(er.transitions);
    buffer.add(std::move(rec), hindsight ? &hindsight : nullptr, hs_rng);

    for (int u = 0; u < cfg.training.updates_per_episode && buffer.episodes() > 0; ++u) {
      const auto items = buffer.batch(buf_rng);
      masks.clear();
      for (std::size_t b = 0; b < items.size(); ++b) {
        env->encode(items[b].transition->state, obs[b]);
        targets[b] = items[b].value;
        if (mcfg.policy == MaskPolicy::static_bernoulli || mcfg.policy == MaskPolicy::static_per_trajectory) {
          if (items[b].mask.empty())
            masks.insert(masks.end(), static_cast<std::size_t>(members), 1);
          else
            masks.insert(masks.end(), items[b].mask.begin(), items[b].mask.end());
        }
      }
      ens.train_step(obs, targets, mcfg.policy == MaskPolicy::dynamic_split ? split : masks, cfg.training.l2);
    }

    win_rate.add(er.solved);
    if (er.solved) {
      ++result.solved_episodes;
      if (!result.first_solve_steps) result.first_solve_steps = result.env_steps;
    }
    MetricsRow row{episode,
                   result.env_steps,
                   er.solved,
                   static_cast<int>(len),
                   er.total_return,
                   win_rate.rate(),
                   static_cast<std::int64_t>(graph.size()),
                   std::move(extra)};
    if (outputs.metrics) *outputs.metrics << format_metrics_row(row) << '\n' << std::flush;
    if (outputs.on_episode) outputs.on_episode(row);
    result.rows.push_back(std::move(row));
    ++episode;

    if (cfg.run.stop_on_first_solve && er.solved) break;
    if (win_rate.games() >= static_cast<std::size_t>(cfg.run.min_games) &&
        win_rate.rate() >= cfg.run.win_rate_threshold) {
      result.converged = true;
      break;
    }
  }
  result.rooms_visited = rooms.size();
  return result;
}

std::vector<std::vector<double>> deep_sea_std_heatmap(const Ensemble& ensemble, const Environment& env) {
  const auto* ds = dynamic_cast<const DeepSea*>(&env);
  if (!ds) throw std::invalid_argument("std heatmaps are defined for deep_sea only (got " + env.name() + ")");
  if (ensemble.observation_len() != ds->spec().observation_len)
    throw std::invalid_argument("ensemble does not match the deep_sea size");
  const int n = ds->size();
  std::vector<std::vector<double>> grid(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n)));
  std::vector<double> obs(static_cast<std::size_t>(ds->spec().observation_len));
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      ds->encode(DeepSea::make_state({x, y}), obs);
      const auto v = ensemble.evaluate_all(obs);
      double mean = 0.0;
      for (double a : v) mean += a;
      mean /= static_cast<double>(v.size());
      double var = 0.0;
      for (double a : v) var += (a - mean) * (a - mean);
      grid[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = std::sqrt(var / static_cast<double>(v.size()));
    }
  }
  return grid;
}

void write_pgm(std::ostream& out, const std::vector<std::vector<double>>& grid) {
  const std::size_t rows = grid.size();
  const std::size_t cols = rows ? grid.front().size() : 0;
  double hi = 0.0;
  for (const auto& r : grid)
    for (double v : r) hi = std::max(hi, v);
  out << "P2\n" << cols << ' ' << rows << "\n255\n";
  for (const auto& r : grid) {
    for (std::size_t x = 0; x < r.size(); ++x) {
      const int g = hi > 0.0 ? static_cast<int>(std::lround(255.0 * std::max(r[x], 0.0) / hi)) : 0;
      out << (x ? " " : "") << g;
    }
    out << '\n';
  }
}

void write_grid_csv(std::ostream& out, const std::vector<std::vector<double>>& grid) {
  char buf[32];
  for (const auto& r : grid) {
    for (std::size_t x = 0; x < r.size(); ++x) {
      std::snprintf(buf, sizeof buf, "%.10g", r[x]);
      out << (x ? "," : "") << buf;
    }
    out << '\n';
  }
}

std::string checkpoint_metadata(const RunConfig& cfg) {
  return nlohmann::json{{"k", cfg.ensemble.k},
                        {"arch", cfg.ensemble.arch},
                        {"hidden", cfg.ensemble.hidden},
                        {"mask", cfg.mask.policy},
                        {"measure", cfg.risk.measure},
                        {"kappa", cfg.risk.kappa},
                        {"env", cfg.env.kind},
                        {"transfer", cfg.transfer.checkpoints}}
      .dump();
}

TrainResult train_to_directory(const RunConfig& cfg, const std::string& dir) {
  validate(cfg);
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream c(fs::path(dir) / "config.json");
    c << to_json(cfg).dump(2) << '\n';
    if (!c) throw std::runtime_error("cannot write " + (fs::path(dir) / "config.json").string());
  }
  std::ofstream metrics(fs::path(dir) / "metrics.csv");
  if (!metrics) throw std::runtime_error("cannot write metrics in " + dir);
  std::ofstream trace;
  TrainOutputs outs;
  outs.metrics = &metrics;
  if (cfg.run.trace) {
    trace.open(fs::path(dir) / "trace.jsonl");
    outs.trace = &trace;
  }
  TrainResult result = train(cfg, outs);
  save_ensemble((fs::path(dir) / "checkpoint.bin").string(), result.ensemble, checkpoint_metadata(cfg));
  return result;
}

}  // namespace ensplan
