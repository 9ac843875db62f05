#include "ensplan/deep_sea.hpp"

#include <algorithm>
#include <stdexcept>

#include "ensplan/bytes.hpp"
#include "ensplan/random.hpp"

namespace ensplan {

DeepSea::DeepSea(int size, std::uint64_t seed) : size_(size), move_cost_(0.0) {
  if (size < 2) throw std::invalid_argument("deep sea size must be at least 2");
  move_cost_ = 0.01 / size;
  Rng rng = make_rng(seed, 0xdeeb5ea);
  right_action_.resize(static_cast<std::size_t>(size) * size);
  for (int& a : right_action_) a = uniform_int(rng, 0, 1);
}

EnvSpec DeepSea::spec() const { return {2, size_, size_ * size_}; }

State DeepSea::make_state(Position p) {
  State s;
  bytes::put_u16(s.bytes, static_cast<std::uint16_t>(p.x));
  bytes::put_u16(s.bytes, static_cast<std::uint16_t>(p.y));
  return s;
}

DeepSea::Position DeepSea::position(const State& state) {
  return {bytes::get_u16(state.bytes, 0), bytes::get_u16(state.bytes, 2)};
}

State DeepSea::reset(std::uint64_t) const { return make_state({0, 0}); }

bool DeepSea::is_terminal(const State& state) const { return position(state).y >= size_; }

StepOutcome DeepSea::step(const State& state, int action) const {
  check_action(*this, action);
  Position p = position(state);
  if (p.y >= size_) throw std::logic_error("deep sea: step from terminal state");

  StepOutcome out;
  if (action == right_action(p.x, p.y)) {
    p.x += 1;
    out.reward -= move_cost_;
  } else {
    p.x = std::max(p.x - 1, 0);
  }
  p.y += 1;
  if (p.y == size_) {
    out.done = true;
    // x can only reach N when all N moves went right.
    if (p.x == size_) {
      out.reward += 1.0;
      out.solved = true;
    }
  }
  out.next_state = make_state(p);
  return out;
}

int DeepSea::cell_index(const State& state) const {
  Position p = position(state);
  int y = std::min(p.y, size_ - 1);
  return y * size_ + std::min(p.x, size_ - 1);
}

void DeepSea::encode(const State& state, std::span<double> out) const {
  if (out.size() != static_cast<std::size_t>(size_ * size_))
    throw std::invalid_argument("deep sea: observation buffer has wrong length");
  std::fill(out.begin(), out.end(), 0.0);
  out[static_cast<std::size_t>(cell_index(state))] = 1.0;
}

}  // namespace ensplan
