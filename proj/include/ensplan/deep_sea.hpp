#pragma once

#include <cstdint>
#include <vector>

#include "ensplan/env.hpp"

namespace ensplan {

// N x N Deep-sea. The agent starts at (0, 0); every step increases y by one
// and moves x left or right depending on a per-cell action mapping drawn once
// at construction. The episode lasts exactly N steps and pays +1 only when
// every step was an effective right move.
class DeepSea final : public Environment {
 public:
  struct Position {
    int x = 0;
    int y = 0;
  };

  DeepSea(int size, std::uint64_t seed);

  std::string name() const override { return "deep_sea"; }
  EnvSpec spec() const override;
  State reset(std::uint64_t seed) const override;
  bool is_terminal(const State& state) const override;
  StepOutcome step(const State& state, int action) const override;
  void encode(const State& state, std::span<double> out) const override;

  int size() const { return size_; }
  double move_cost() const { return move_cost_; }
  // Action index that moves right in the given cell.
  int right_action(int x, int y) const { return right_action_[static_cast<std::size_t>(y * size_ + x)]; }
  int cell_index(const State& state) const;

  static State make_state(Position p);
  static Position position(const State& state);

 private:
  int size_;
  double move_cost_;
  std::vector<int> right_action_;
};

}  // namespace ensplan
