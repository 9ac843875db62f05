#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ensplan/env.hpp"
#include "ensplan/random.hpp"

namespace ensplan {

enum class SokobanCell : std::uint8_t { floor, wall, target };

// Actions: 0 up, 1 down, 2 left, 3 right.
inline constexpr int kSokobanActions = 4;

struct SokobanBoard {
  int width = 0;
  int height = 0;
  std::vector<SokobanCell> cells;  // row-major
  std::vector<int> boxes;          // cell indices, sorted
  int agent = -1;

  int targets() const;
  bool solved() const;
  void validate() const;

  friend bool operator==(const SokobanBoard&, const SokobanBoard&) = default;
};

class LevelParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Standard level text: '#' wall, ' ' floor, '.' target, '$' box, '*' box on
// target, '@' agent, '+' agent on target. Boards are separated by blank
// lines; lines starting with ';' are comments.
std::vector<SokobanBoard> parse_levels(std::string_view text);
std::string format_level(const SokobanBoard& board);
std::vector<SokobanBoard> load_levels(const std::string& path);

struct GeneratorParams {
  int width = 10;
  int height = 10;
  int num_boxes = 4;
  int pull_steps = 30;
  int max_retries = 200;
};

struct GeneratedBoard {
  SokobanBoard board;
  // Forward action sequence that solves the board: the generator's reverse
  // moves, reversed and mirrored.
  std::vector<int> solution;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Random-walk room topology, boxes placed on targets, then pull_steps random
// reverse moves (pulling a box whenever one sits behind the agent). Outputs
// that end with every box still on a target are rejected unless
// pull_steps == 0.
GeneratedBoard sokoban_generate(const GeneratorParams& params, std::uint64_t seed);

struct SokobanConfig {
  enum class Mode { single, pool, generated };
  Mode mode = Mode::single;
  std::vector<SokobanBoard> boards;  // single: boards[0]; pool: indexed by reset seed
  GeneratorParams generator;         // generated: one board per reset seed
  int max_episode_len = 100;
};

// Perfect Sokoban model. States are self-contained (walls, targets, boxes and
// agent), so one instance steps states of any board of its size, including
// hindsight-relabelled ones.
class Sokoban final : public Environment {
 public:
  static constexpr int single_board_cap = 100;
  static constexpr int multi_board_cap = 200;

  explicit Sokoban(SokobanConfig config);

  std::string name() const override { return "sokoban"; }
  EnvSpec spec() const override;
  State reset(std::uint64_t seed) const override;
  bool is_terminal(const State& state) const override;
  StepOutcome step(const State& state, int action) const override;
  void encode(const State& state, std::span<double> out) const override;

  int width() const { return width_; }
  int height() const { return height_; }
  const SokobanConfig& config() const { return config_; }

  static State make_state(const SokobanBoard& board);
  static SokobanBoard decode(const State& state);
  // Box cell indices in a state, sorted.
  static std::vector<int> box_cells(const State& state);
  // Same state with its target set replaced by the given cells.
  static State with_targets(const State& state, std::span<const int> targets);

 private:
  SokobanConfig config_;
  int width_;
  int height_;
};

// Hindsight relabelling of a failed episode. Draws a time step t uniformly in
// [0, T] (T = episode length, state T being final_state), moves the targets
// onto the boxes of state t, and truncates the episode so that its last
// transition enters state t solved. Draws whose box layout already occurred
// before t (including t = 0) are degenerate and redrawn, up to 10 times;
// nullopt means relabelling was skipped.
std::optional<std::vector<Transition>> sokoban_hindsight(std::span<const Transition> episode,
                                                         const State& final_state, bool solved,
                                                         Rng& rng);

}  // namespace ensplan
