#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ensplan/env.hpp"

namespace ensplan {

class MapParseError : public std::runtime_error {
 public:
  MapParseError(int line, int column, const std::string& what);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

enum class Tile : char {
  wall = '#',
  floor = '.',
  key = 'K',
  door = 'D',
  trap = 'T',
  start = 'S',
  goal = 'G',
};

// A lattice of square rooms. Rooms are stitched into one global tile grid, so
// walking off a room edge lands in the neighbouring room.
//
// Text format:
//   rooms R C size S
//   <S lines of S tiles>      room (0, 0)
//   <blank line>
//   <S lines of S tiles>      room (0, 1)
//   ...                       rooms listed row-major
struct ToyMrMap {
  int room_rows = 0;
  int room_cols = 0;
  int room_size = 0;
  std::vector<Tile> tiles;  // (room_rows * size) x (room_cols * size), row-major
  int start = -1;           // global cell index
  std::vector<int> keys;    // cell indices, in scan order
  std::vector<int> doors;

  int width() const { return room_cols * room_size; }
  int height() const { return room_rows * room_size; }
  int room_count() const { return room_rows * room_cols; }
  int room_of_cell(int cell) const;
  Tile at(int cell) const { return tiles[static_cast<std::size_t>(cell)]; }

  static ToyMrMap parse(std::string_view text);
};

struct ToyMrState {
  int cell = 0;
  std::uint64_t keys_taken = 0;
  std::uint64_t doors_open = 0;

  int keys_held() const;
};

// Actions: 0 up, 1 down, 2 left, 3 right. Keys are generic: any held key
// opens any door and is consumed by it.
class ToyMr final : public Environment {
 public:
  static constexpr int default_episode_cap = 300;

  explicit ToyMr(ToyMrMap map, int max_episode_len = default_episode_cap);

  std::string name() const override { return "toy_mr"; }
  EnvSpec spec() const override;
  State reset(std::uint64_t seed) const override;
  bool is_terminal(const State& state) const override;
  StepOutcome step(const State& state, int action) const override;
  void encode(const State& state, std::span<double> out) const override;
  int region(const State& state) const override;

  const ToyMrMap& map() const { return map_; }

  static State make_state(const ToyMrState& s);
  static ToyMrState decode(const State& state);

 private:
  int key_slot(int cell) const;
  int door_slot(int cell) const;

  ToyMrMap map_;
  int max_episode_len_;
};

ToyMr load_toy_mr(const std::string& path, int max_episode_len = ToyMr::default_episode_cap);

}  // namespace ensplan
