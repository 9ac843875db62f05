#include "ensplan/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "ensplan/ensemble.hpp"
#include "ensplan/nets.hpp"
#include "ensplan/replay.hpp"

namespace ensplan {

using nlohmann::json;

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"deep_sea", "toy_mr", "sokoban_single", "sokoban_multi"};
  return names;
}

RunConfig preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "deep_sea") {
    c.env.kind = "deep_sea";
    c.ensemble = {20, 10, "linear", {}, 0.0};
    c.risk = {"mean_std", 50.0};
    c.mask.policy = "static_bernoulli";
  } else if (name == "toy_mr") {
    c.env.kind = "toy_mr";
    c.ensemble = {20, 10, "mlp", {50, 50}, 0.0};
    c.risk = {"mean_std", 3.0};
    c.mask.policy = "static_bernoulli";
    c.run.total_env_steps = 300000;
  } else if (name == "sokoban_single") {
    c.env.kind = "sokoban";
    c.env.sokoban_mode = "single";
    c.ensemble = {20, 10, "mlp", {50, 50}, 0.0};
    c.risk = {"mean_std", 9.0};
    c.mask.policy = "static_bernoulli";
    c.run.total_env_steps = 200000;
  } else if (name == "sokoban_multi") {
    c.env.kind = "sokoban";
    c.env.sokoban_mode = "generated";
    c.ensemble = {3, 0, "mlp", {50, 50}, 0.0};
    c.risk = {"vote", 0.0};
    c.mask.policy = "dynamic";
    c.training.hindsight = true;
    c.run.total_env_steps = 1000000;
    c.run.win_rate_threshold = 2.0;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return c;
}

json to_json(const RunConfig& c) {
  return json{
      {"preset", c.preset},
      {"env",
       {{"kind", c.env.kind},
        {"max_episode_len", c.env.max_episode_len},
        {"deep_sea", {{"size", c.env.deep_sea_size}, {"mask_seed", c.env.deep_sea_mask_seed}}},
        {"toy_mr", {{"map", c.env.toy_mr_map}}},
        {"sokoban",
         {{"mode", c.env.sokoban_mode},
          {"board_file", c.env.sokoban_board_file},
          {"board_index", c.env.sokoban_board_index},
          {"width", c.env.sokoban_width},
          {"height", c.env.sokoban_height},
          {"boxes", c.env.sokoban_boxes},
          {"pull_steps", c.env.sokoban_pull_steps},
          {"board_seed", c.env.sokoban_board_seed}}}}},
      {"planner",
       {{"passes", c.planner.passes},
        {"gamma", c.planner.gamma},
        {"penalty_p", c.planner.penalty_p},
        {"penalty_e", c.planner.penalty_e},
        {"dead_end_value", c.planner.dead_end_value},
        {"avoid_loops", c.planner.avoid_loops}}},
      {"ensemble",
       {{"k", c.ensemble.k},
        {"subsample", c.ensemble.subsample},
        {"arch", c.ensemble.arch},
        {"hidden", c.ensemble.hidden},
        {"prior_scale", c.ensemble.prior_scale}}},
      {"risk", {{"measure", c.risk.measure}, {"kappa", c.risk.kappa}}},
      {"mask", {{"policy", c.mask.policy}, {"p", c.mask.p}}},
      {"training",
       {{"target", c.training.target},
        {"lr", c.training.lr},
        {"rho", c.training.rho},
        {"eps", c.training.eps},
        {"l2", c.training.l2},
        {"batch_size", c.training.batch_size},
        {"updates_per_episode", c.training.updates_per_episode},
        {"solved_ratio", c.training.solved_ratio},
        {"buffer_capacity", c.training.buffer_capacity},
        {"hindsight", c.training.hindsight}}},
      {"run",
       {{"total_env_steps", c.run.total_env_steps},
        {"seed", c.run.seed},
        {"stop_on_first_solve", c.run.stop_on_first_solve},
        {"win_rate_threshold", c.run.win_rate_threshold},
        {"min_games", c.run.min_games},
        {"trace", c.run.trace}}},
      {"transfer",
       {{"checkpoints", c.transfer.checkpoints},
        {"hidden", c.transfer.hidden},
        {"averaging_init", c.transfer.averaging_init}}},
  };
}

namespace {

void flatten(const json& j, const std::string& prefix, std::map<std::string, const json*>& out) {
  if (j.is_object() && !j.empty()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
  } else {
    out[prefix] = &j;
  }
}

json::json_pointer pointer(const std::string& dotted) {
  std::string p = "/" + dotted;
  for (char& ch : p)
    if (ch == '.') ch = '/';
  return json::json_pointer(p);
}

template <class T>
void read(const json& j, const std::string& key, T& out) {
  try {
    out = j.at(pointer(key)).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

void check_keys(const json& doc, const json& reference) {
  std::map<std::string, const json*> known, given;
  flatten(reference, "", known);
  flatten(doc, "", given);
  for (const auto& [key, value] : given) {
    if (key.empty()) continue;
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
    if (value->is_null()) throw ConfigError("config key '" + key + "' is null");
  }
}

RunConfig parse_exact(const json& j) {
  RunConfig c;
  read(j, "preset", c.preset);
  read(j, "env.kind", c.env.kind);
  read(j, "env.max_episode_len", c.env.max_episode_len);
  read(j, "env.deep_sea.size", c.env.deep_sea_size);
  read(j, "env.deep_sea.mask_seed", c.env.deep_sea_mask_seed);
  read(j, "env.toy_mr.map", c.env.toy_mr_map);
  read(j, "env.sokoban.mode", c.env.sokoban_mode);
  read(j, "env.sokoban.board_file", c.env.sokoban_board_file);
  read(j, "env.sokoban.board_index", c.env.sokoban_board_index);
  read(j, "env.sokoban.width", c.env.sokoban_width);
  read(j, "env.sokoban.height", c.env.sokoban_height);
  read(j, "env.sokoban.boxes", c.env.sokoban_boxes);
  read(j, "env.sokoban.pull_steps", c.env.sokoban_pull_steps);
  read(j, "env.sokoban.board_seed", c.env.sokoban_board_seed);
  read(j, "planner.passes", c.planner.passes);
  read(j, "planner.gamma", c.planner.gamma);
  read(j, "planner.penalty_p", c.planner.penalty_p);
  read(j, "planner.penalty_e", c.planner.penalty_e);
  read(j, "planner.dead_end_value", c.planner.dead_end_value);
  read(j, "planner.avoid_loops", c.planner.avoid_loops);
  read(j, "ensemble.k", c.ensemble.k);
  read(j, "ensemble.subsample", c.ensemble.subsample);
  read(j, "ensemble.arch", c.ensemble.arch);
  read(j, "ensemble.hidden", c.ensemble.hidden);
  read(j, "ensemble.prior_scale", c.ensemble.prior_scale);
  read(j, "risk.measure", c.risk.measure);
  read(j, "risk.kappa", c.risk.kappa);
  read(j, "mask.policy", c.mask.policy);
  read(j, "mask.p", c.mask.p);
  read(j, "training.target", c.training.target);
  read(j, "training.lr", c.training.lr);
  read(j, "training.rho", c.training.rho);
  read(j, "training.eps", c.training.eps);
  read(j, "training.l2", c.training.l2);
  read(j, "training.batch_size", c.training.batch_size);
  read(j, "training.updates_per_episode", c.training.updates_per_episode);
  read(j, "training.solved_ratio", c.training.solved_ratio);
  read(j, "training.buffer_capacity", c.training.buffer_capacity);
  read(j, "training.hindsight", c.training.hindsight);
  read(j, "run.total_env_steps", c.run.total_env_steps);
  read(j, "run.seed", c.run.seed);
  read(j, "run.stop_on_first_solve", c.run.stop_on_first_solve);
  read(j, "run.win_rate_threshold", c.run.win_rate_threshold);
  read(j, "run.min_games", c.run.min_games);
  read(j, "run.trace", c.run.trace);
  read(j, "transfer.checkpoints", c.transfer.checkpoints);
  read(j, "transfer.hidden", c.transfer.hidden);
  read(j, "transfer.averaging_init", c.transfer.averaging_init);
  return c;
}

}  // namespace

RunConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  std::string name = "deep_sea";
  if (doc.contains("preset")) {
    if (!doc["preset"].is_string()) throw ConfigError("config key 'preset' must be a string");
    name = doc["preset"].get<std::string>();
  }
  json merged = to_json(preset(name));
  check_keys(doc, merged);
  merged.merge_patch(doc);
  return parse_exact(merged);
}

RunConfig apply_overrides(const RunConfig& cfg, const std::vector<std::string>& overrides) {
  json j = to_json(cfg);
  std::map<std::string, const json*> known;
  flatten(j, "", known);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not of the form key=value");
    const std::string key = o.substr(0, eq);
    const std::string text = o.substr(eq + 1);
    if (key == "preset") throw ConfigError("the preset cannot be overridden; choose it with --preset");
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    // A bare word for a string-typed key stays a string even if it parses.
    if (known[key]->is_string() && !value.is_string()) value = text;
    j[pointer(key)] = std::move(value);
  }
  return parse_exact(j);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json doc = json::parse(in, nullptr, false, true);
  if (doc.is_discarded()) throw ConfigError("config file '" + path + "' is not valid JSON");
  return config_from_json(doc);
}

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void validate(const RunConfig& c) {
  const auto& e = c.env;
  require(e.kind == "deep_sea" || e.kind == "toy_mr" || e.kind == "sokoban",
          "env.kind must be deep_sea, toy_mr or sokoban (got '" + e.kind + "')");
  require(e.max_episode_len >= 0, "env.max_episode_len must be nonnegative");
  if (e.kind == "deep_sea") require(e.deep_sea_size >= 2, "env.deep_sea.size must be at least 2");
  if (e.kind == "toy_mr") require(!e.toy_mr_map.empty(), "env.toy_mr.map must name a map file");
  if (e.kind == "sokoban") {
    require(e.sokoban_mode == "single" || e.sokoban_mode == "pool" || e.sokoban_mode == "generated",
            "env.sokoban.mode must be single, pool or generated");
    require(e.sokoban_mode != "pool" || !e.sokoban_board_file.empty(), "pool mode needs env.sokoban.board_file");
    require(e.sokoban_width >= 3 && e.sokoban_height >= 3, "sokoban boards must be at least 3x3");
    require(e.sokoban_width <= 64 && e.sokoban_height <= 64, "sokoban boards must be at most 64x64");
    require(e.sokoban_boxes >= 1, "env.sokoban.boxes must be positive");
    require(e.sokoban_pull_steps >= 0, "env.sokoban.pull_steps must be nonnegative");
    require(e.sokoban_board_index >= 0, "env.sokoban.board_index must be nonnegative");
  }

  const auto& p = c.planner;
  require(p.passes >= 1, "planner.passes must be at least 1");
  require(p.gamma > 0.0 && p.gamma <= 1.0, "planner.gamma must lie in (0, 1]");
  require(p.penalty_p >= 0.0 && p.penalty_e >= 0.0, "planner penalties must be nonnegative");

  const auto& en = c.ensemble;
  require(en.k >= 1, "ensemble.k must be positive");
  require(en.subsample >= 0 && en.subsample <= en.k,
          "ensemble.subsample must lie in [0, ensemble.k] (0 disables sub-sampling)");
  Arch arch;
  try {
    arch = parse_arch(en.arch);
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("ensemble.arch: ") + ex.what());
  }
  if (arch == Arch::linear) require(en.hidden.empty(), "ensemble.hidden must be empty for the linear architecture");
  if (arch == Arch::mlp) require(!en.hidden.empty(), "ensemble.hidden must list the mlp layer widths");
  for (int h : en.hidden) require(h >= 1, "ensemble.hidden entries must be positive");
  require(en.prior_scale >= 0.0, "ensemble.prior_scale must be nonnegative");

  try {
    parse_risk(c.risk.measure);
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("risk.measure: ") + ex.what());
  }
  require(c.risk.kappa >= 0.0, "risk.kappa must be nonnegative");

  MaskPolicy mask;
  try {
    mask = parse_mask_policy(c.mask.policy);
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("mask.policy: ") + ex.what());
  }
  require(c.mask.p > 0.0 && c.mask.p <= 1.0, "mask.p must lie in (0, 1]");

  const auto& t = c.training;
  try {
    parse_value_target(t.target);
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("training.target: ") + ex.what());
  }
  require(t.lr > 0.0, "training.lr must be positive");
  require(t.rho >= 0.0 && t.rho < 1.0, "training.rho must lie in [0, 1)");
  require(t.eps > 0.0, "training.eps must be positive");
  require(t.l2 >= 0.0, "training.l2 must be nonnegative");
  require(t.batch_size >= 1, "training.batch_size must be positive");
  require(t.updates_per_episode >= 0, "training.updates_per_episode must be nonnegative");
  require(t.solved_ratio >= 0.0 && t.solved_ratio <= 1.0, "training.solved_ratio must lie in [0, 1]");
  require(t.buffer_capacity >= 1, "training.buffer_capacity must be positive");
  require(!t.hindsight || e.kind == "sokoban", "training.hindsight is only defined for sokoban");

  const int members = c.transfer.checkpoints.empty() ? en.k : 1;
  if (mask == MaskPolicy::dynamic_split && t.batch_size % members != 0)
    throw ConfigError("dynamic masks split each batch equally across members: training.batch_size (" +
                      std::to_string(t.batch_size) + ") must be a multiple of ensemble.k (" +
                      std::to_string(members) + "); e.g. override training.batch_size=" +
                      std::to_string((t.batch_size / members + 1) * members));

  require(c.run.total_env_steps >= 0, "run.total_env_steps must be nonnegative");
  require(c.run.min_games >= 1, "run.min_games must be positive");
  require(c.run.win_rate_threshold > 0.0, "run.win_rate_threshold must be positive");

  if (!c.transfer.checkpoints.empty()) {
    require(c.transfer.hidden >= 1, "transfer.hidden must be positive");
    require(!c.transfer.averaging_init || c.transfer.hidden >= 2, "averaging init needs transfer.hidden >= 2");
  }
}

}  // namespace ensplan
