// ensplan: train, generate Sokoban boards, export Deep-sea heatmaps, evaluate
// checkpoints.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ensplan/config.hpp"
#include "ensplan/sokoban.hpp"
#include "ensplan/trainer.hpp"

namespace {

using namespace ensplan;

constexpr int exit_validation = 1;
constexpr int exit_runtime = 2;

struct ConfigArgs {
  std::string config_path;
  std::string preset_name;
  std::vector<std::string> overrides;

  void attach(CLI::App& cmd) {
    cmd.add_option("-c,--config", config_path, "JSON experiment file");
    cmd.add_option("-p,--preset", preset_name, "preset: deep_sea, toy_mr, sokoban_single, sokoban_multi");
    cmd.add_option("-s,--set", overrides, "key=value override (repeatable)");
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) {
      if (!preset_name.empty()) throw ConfigError("--config and --preset are exclusive; put \"preset\" in the file");
      cfg = load_config(config_path);
    } else {
      cfg = preset(preset_name.empty() ? "deep_sea" : preset_name);
    }
    cfg = apply_overrides(cfg, overrides);
    validate(cfg);
    return cfg;
  }
};

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto dash = item.find('-');
    try {
      if (dash != std::string::npos && dash > 0) {
        const auto lo = std::stoull(item.substr(0, dash));
        const auto hi = std::stoull(item.substr(dash + 1));
        if (hi < lo) throw ConfigError("empty seed range '" + item + "'");
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
      } else {
        seeds.push_back(std::stoull(item));
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad seed list entry '" + item + "'");
    }
  }
  return seeds;
}

int cmd_train(const ConfigArgs& args, const std::string& seeds_text, const std::string& out_dir, bool quiet) {
  RunConfig base = args.resolve();
  std::vector<std::uint64_t> seeds = seeds_text.empty() ? std::vector<std::uint64_t>{base.run.seed}
                                                        : parse_seeds(seeds_text);
  if (seeds.empty()) throw ConfigError("no seeds given");
  for (auto seed : seeds) {
    RunConfig cfg = base;
    cfg.run.seed = seed;
    const std::string dir = (std::filesystem::path(out_dir) / ("seed_" + std::to_string(seed))).string();
    const TrainResult r = train_to_directory(cfg, dir);
    if (!quiet) {
      std::cout << dir << ": episodes=" << r.rows.size() << " env_steps=" << r.env_steps
                << " solved=" << r.solved_episodes << " first_solve="
                << (r.first_solve_steps ? std::to_string(*r.first_solve_steps) : "none")
                << " win_rate=" << (r.rows.empty() ? 0.0 : r.rows.back().win_rate);
      if (r.rooms_visited) std::cout << " rooms=" << r.rooms_visited;
      std::cout << '\n';
    }
  }
  return 0;
}

int cmd_gen_boards(int count, GeneratorParams params, std::uint64_t seed, const std::string& out) {
  if (count < 1) throw ConfigError("--count must be positive");
  if (params.width < 3 || params.height < 3 || params.num_boxes < 1 || params.pull_steps < 0)
    throw ConfigError("invalid board dimensions or box count");
  std::ostringstream text;
  for (int i = 0; i < count; ++i) {
    const auto g = sokoban_generate(params, seed + static_cast<std::uint64_t>(i));
    text << "; board " << i << " seed " << seed + static_cast<std::uint64_t>(i) << '\n'
         << format_level(g.board) << '\n';
  }
  if (out.empty() || out == "-") {
    std::cout << text.str();
  } else {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write '" + out + "'");
    f << text.str();
  }
  return 0;
}

int cmd_export_heatmap(const ConfigArgs& args, const std::string& checkpoint, const std::string& out_prefix) {
  const RunConfig cfg = args.resolve();
  if (cfg.env.kind != "deep_sea") throw ConfigError("export-heatmap needs a deep_sea config (got " + cfg.env.kind + ")");
  const auto env = make_environment(cfg);
  const Ensemble ens = load_ensemble(checkpoint);
  if (ens.observation_len() != env->spec().observation_len)
    throw ConfigError("checkpoint does not match env.deep_sea.size=" + std::to_string(cfg.env.deep_sea_size));
  const auto grid = deep_sea_std_heatmap(ens, *env);
  std::ofstream pgm(out_prefix + ".pgm"), csv(out_prefix + ".csv");
  if (!pgm || !csv) throw std::runtime_error("cannot write heatmap files at '" + out_prefix + "'");
  write_pgm(pgm, grid);
  write_grid_csv(csv, grid);
  return 0;
}

int cmd_eval(const ConfigArgs& args, const std::string& checkpoint, int episodes) {
  const RunConfig cfg = args.resolve();
  if (episodes < 1) throw ConfigError("--episodes must be positive");
  const auto env = make_environment(cfg);
  const Ensemble ens = load_ensemble(checkpoint);
  if (ens.observation_len() != env->spec().observation_len)
    throw ConfigError("checkpoint does not match the configured environment");
  const PlannerConfig pcfg = planner_config(cfg);
  Rng env_rng = make_rng(cfg.run.seed, 11);
  Rng sub_rng = make_rng(cfg.run.seed, 12);
  Rng tie_rng = make_rng(cfg.run.seed, 13);
  const int l = std::min(cfg.ensemble.subsample, ens.size());
  int solved = 0;
  double total_len = 0.0;
  for (int i = 0; i < episodes; ++i) {
    const EnsembleEvaluator ev(*env, ens, subsample(ens.size(), l, sub_rng));
    const auto r = run_episode(*env, env->reset(env_rng()), ev, pcfg, tie_rng);
    solved += r.solved ? 1 : 0;
    total_len += static_cast<double>(r.transitions.size());
  }
  std::cout << "episodes=" << episodes << " solved=" << solved
            << " win_rate=" << static_cast<double>(solved) / episodes << " mean_length=" << total_len / episodes
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble risk-sensitive MCTS with value learning"};
  app.require_subcommand(1);

  ConfigArgs train_args, heat_args, eval_args, show_args;
  std::string seeds, out_dir = "runs";
  bool quiet = false;
  auto* train = app.add_subcommand("train", "train one run per seed");
  train_args.attach(*train);
  train->add_option("--seeds", seeds, "comma list or ranges, e.g. 0,1,5-7 (default: run.seed)");
  train->add_option("-o,--out", out_dir, "parent directory for run directories");
  train->add_flag("-q,--quiet", quiet, "no per-run summary");

  int count = 250;
  GeneratorParams gen;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  auto* boards = app.add_subcommand("gen-boards", "generate solvable Sokoban boards as level text");
  boards->add_option("-n,--count", count, "number of boards");
  boards->add_option("--width", gen.width, "board width");
  boards->add_option("--height", gen.height, "board height");
  boards->add_option("--boxes", gen.num_boxes, "boxes per board");
  boards->add_option("--pull-steps", gen.pull_steps, "reverse moves per board");
  boards->add_option("--seed", gen_seed, "seed of the first board; board i uses seed + i");
  boards->add_option("-o,--out", gen_out, "output file (default stdout)");

  std::string heat_ckpt, heat_out = "heatmap";
  auto* heat = app.add_subcommand("export-heatmap", "Deep-sea ensemble std grid as PGM + CSV");
  heat_args.attach(*heat);
  heat->add_option("--checkpoint", heat_ckpt, "ensemble checkpoint")->required();
  heat->add_option("-o,--out", heat_out, "output prefix (writes PREFIX.pgm and PREFIX.csv)");

  std::string eval_ckpt;
  int eval_episodes = 100;
  auto* eval = app.add_subcommand("eval", "plan with a frozen checkpoint and report the win rate");
  eval_args.attach(*eval);
  eval->add_option("--checkpoint", eval_ckpt, "ensemble checkpoint")->required();
  eval->add_option("-n,--episodes", eval_episodes, "episodes to play");

  auto* show = app.add_subcommand("show-config", "print the resolved configuration");
  show_args.attach(*show);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_validation;
  }

  try {
    if (train->parsed()) return cmd_train(train_args, seeds, out_dir, quiet);
    if (boards->parsed()) return cmd_gen_boards(count, gen, gen_seed, gen_out);
    if (heat->parsed()) return cmd_export_heatmap(heat_args, heat_ckpt, heat_out);
    if (eval->parsed()) return cmd_eval(eval_args, eval_ckpt, eval_episodes);
    if (show->parsed()) {
      std::cout << to_json(show_args.resolve()).dump(2) << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_validation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_runtime;
  }
  return exit_runtime;
}
