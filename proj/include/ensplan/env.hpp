#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ensplan {

// Canonical serialization of an environment state. The owning environment
// decodes the bytes; the same bytes serve as the transposition-table key, so
// they must be injective over reachable states and free of addresses.
struct State {
  std::string bytes;

  friend bool operator==(const State&, const State&) = default;
};

inline const std::string& state_key(const State& s) { return s.bytes; }

struct StepOutcome {
  State next_state;
  double reward = 0.0;
  bool done = false;
  bool solved = false;
};

// One real step of an episode: the state acted in, the action and its reward.
struct Transition {
  State state;
  int action = 0;
  double reward = 0.0;
};

struct EnvSpec {
  int action_count = 0;
  int max_episode_len = 0;
  int observation_len = 0;
};

// Transition model used by the planner. Pure: step() never mutates anything
// and may be called concurrently.
class Model {
 public:
  virtual ~Model() = default;

  virtual int action_count() const = 0;
  virtual bool is_terminal(const State& state) const = 0;
  // Throws std::out_of_range for a bad action and std::logic_error when
  // called on a terminal state.
  virtual StepOutcome step(const State& state, int action) const = 0;
};

// A deterministic environment is its own perfect model.
class Environment : public Model {
 public:
  virtual std::string name() const = 0;
  virtual EnvSpec spec() const = 0;
  int action_count() const override { return spec().action_count; }

  // Deterministic in (configuration, seed).
  virtual State reset(std::uint64_t seed) const = 0;

  virtual void encode(const State& state, std::span<double> out) const = 0;
  std::vector<double> observation(const State& state) const {
    std::vector<double> out(static_cast<std::size_t>(spec().observation_len));
    encode(state, out);
    return out;
  }

  // Coarse location used for progress metrics (rooms in Toy MR); -1 when the
  // environment has no such notion.
  virtual int region(const State&) const { return -1; }
};

void check_action(const Model& model, int action);

}  // namespace ensplan
