#include "ensplan/toy_mr.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <sstream>

#include "ensplan/bytes.hpp"

namespace ensplan {

MapParseError::MapParseError(int line, int column, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                         ": " + what),
      line_(line),
      column_(column) {}

int ToyMrMap::room_of_cell(int cell) const {
  int gy = cell / width();
  int gx = cell % width();
  return (gy / room_size) * room_cols + gx / room_size;
}

namespace {

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

std::string rstrip(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
  return s;
}

bool is_tile(char c) {
  switch (c) {
    case '#': case '.': case 'K': case 'D': case 'T': case 'S': case 'G':
      return true;
    default:
      return false;
  }
}

}  // namespace

ToyMrMap ToyMrMap::parse(std::string_view text) {
  std::vector<std::string> lines = split_lines(text);
  for (auto& l : lines) l = rstrip(l);

  std::size_t i = 0;
  while (i < lines.size() && lines[i].empty()) ++i;
  if (i == lines.size()) throw MapParseError(1, 1, "empty map");

  ToyMrMap map;
  {
    std::istringstream header(lines[i]);
    std::string rooms_word, size_word;
    if (!(header >> rooms_word >> map.room_rows >> map.room_cols >> size_word >> map.room_size) ||
        rooms_word != "rooms" || size_word != "size")
      throw MapParseError(static_cast<int>(i) + 1, 1, "expected header 'rooms R C size S'");
    std::string extra;
    if (header >> extra) throw MapParseError(static_cast<int>(i) + 1, 1, "trailing text in header");
    if (map.room_rows < 1 || map.room_cols < 1 || map.room_size < 2)
      throw MapParseError(static_cast<int>(i) + 1, 1, "room lattice dimensions out of range");
  }
  ++i;

  const int s = map.room_size;
  map.tiles.assign(static_cast<std::size_t>(map.width()) * map.height(), Tile::wall);
  for (int room = 0; room < map.room_count(); ++room) {
    while (i < lines.size() && lines[i].empty()) ++i;
    if (i == lines.size())
      throw MapParseError(static_cast<int>(i) + 1, 1,
                          "missing room " + std::to_string(room) + " of " +
                              std::to_string(map.room_count()));
    const int ry = room / map.room_cols;
    const int rx = room % map.room_cols;
    for (int row = 0; row < s; ++row, ++i) {
      const int line_no = static_cast<int>(i) + 1;
      if (i == lines.size() || lines[i].empty())
        throw MapParseError(line_no, 1, "room " + std::to_string(room) + " has fewer than " +
                                            std::to_string(s) + " rows");
      const std::string& l = lines[i];
      if (static_cast<int>(l.size()) != s)
        throw MapParseError(line_no, std::min(static_cast<int>(l.size()), s) + 1,
                            "room row must have exactly " + std::to_string(s) + " tiles");
      for (int col = 0; col < s; ++col) {
        if (!is_tile(l[static_cast<std::size_t>(col)]))
          throw MapParseError(line_no, col + 1,
                              std::string("unknown tile '") + l[static_cast<std::size_t>(col)] + "'");
        const int cell = (ry * s + row) * map.width() + rx * s + col;
        if (l[static_cast<std::size_t>(col)] == 'S') {
          if (map.start >= 0) throw MapParseError(line_no, col + 1, "multiple start tiles");
          map.start = cell;
        }
        map.tiles[static_cast<std::size_t>(cell)] = static_cast<Tile>(l[static_cast<std::size_t>(col)]);
      }
    }
    if (i < lines.size() && !lines[i].empty())
      throw MapParseError(static_cast<int>(i) + 1, 1,
                          "room " + std::to_string(room) + " has more than " + std::to_string(s) +
                              " rows");
  }
  while (i < lines.size() && lines[i].empty()) ++i;
  if (i < lines.size()) throw MapParseError(static_cast<int>(i) + 1, 1, "unexpected text after last room");

  int goals = 0;
  for (int cell = 0; cell < static_cast<int>(map.tiles.size()); ++cell) {
    switch (map.at(cell)) {
      case Tile::goal: ++goals; break;
      case Tile::key: map.keys.push_back(cell); break;
      case Tile::door: map.doors.push_back(cell); break;
      default: break;
    }
  }
  const int end_line = static_cast<int>(lines.size());
  if (map.start < 0) throw MapParseError(end_line, 1, "no start tile");
  if (goals == 0) throw MapParseError(end_line, 1, "no goal tile");
  if (map.keys.size() > 64 || map.doors.size() > 64)
    throw MapParseError(end_line, 1, "at most 64 keys and 64 doors are supported");
  return map;
}

int ToyMrState::keys_held() const {
  return std::popcount(keys_taken) - std::popcount(doors_open);
}

ToyMr::ToyMr(ToyMrMap map, int max_episode_len) : map_(std::move(map)), max_episode_len_(max_episode_len) {
  if (max_episode_len_ < 1) throw std::invalid_argument("toy mr: episode cap must be positive");
}

EnvSpec ToyMr::spec() const {
  const int len = map_.room_count() + map_.room_size * map_.room_size +
                  static_cast<int>(map_.keys.size() + map_.doors.size());
  return {4, max_episode_len_, len};
}

State ToyMr::make_state(const ToyMrState& s) {
  State out;
  bytes::put_u16(out.bytes, static_cast<std::uint16_t>(s.cell));
  bytes::put_u64(out.bytes, s.keys_taken);
  bytes::put_u64(out.bytes, s.doors_open);
  return out;
}

ToyMrState ToyMr::decode(const State& state) {
  return {bytes::get_u16(state.bytes, 0), bytes::get_u64(state.bytes, 2),
          bytes::get_u64(state.bytes, 10)};
}

State ToyMr::reset(std::uint64_t) const { return make_state({map_.start, 0, 0}); }

bool ToyMr::is_terminal(const State& state) const {
  const Tile t = map_.at(decode(state).cell);
  return t == Tile::trap || t == Tile::goal;
}

int ToyMr::key_slot(int cell) const {
  auto it = std::find(map_.keys.begin(), map_.keys.end(), cell);
  return it == map_.keys.end() ? -1 : static_cast<int>(it - map_.keys.begin());
}

int ToyMr::door_slot(int cell) const {
  auto it = std::find(map_.doors.begin(), map_.doors.end(), cell);
  return it == map_.doors.end() ? -1 : static_cast<int>(it - map_.doors.begin());
}

StepOutcome ToyMr::step(const State& state, int action) const {
  check_action(*this, action);
  if (is_terminal(state)) throw std::logic_error("toy mr: step from terminal state");
  static constexpr int dy[4] = {-1, 1, 0, 0};
  static constexpr int dx[4] = {0, 0, -1, 1};

  ToyMrState s = decode(state);
  StepOutcome out;
  const int gy = s.cell / map_.width() + dy[action];
  const int gx = s.cell % map_.width() + dx[action];
  if (gy >= 0 && gy < map_.height() && gx >= 0 && gx < map_.width()) {
    const int target = gy * map_.width() + gx;
    switch (map_.at(target)) {
      case Tile::wall:
        break;
      case Tile::door: {
        const std::uint64_t bit = std::uint64_t{1} << door_slot(target);
        if (s.doors_open & bit) {
          s.cell = target;
        } else if (s.keys_held() > 0) {
          s.doors_open |= bit;
          s.cell = target;
        }
        break;
      }
      case Tile::key:
        s.keys_taken |= std::uint64_t{1} << key_slot(target);
        s.cell = target;
        break;
      case Tile::trap:
        s.cell = target;
        out.done = true;
        break;
      case Tile::goal:
        s.cell = target;
        out.done = true;
        out.solved = true;
        out.reward = 1.0;
        break;
      default:
        s.cell = target;
        break;
    }
  }
  out.next_state = make_state(s);
  return out;
}

void ToyMr::encode(const State& state, std::span<double> out) const {
  if (out.size() != static_cast<std::size_t>(spec().observation_len))
    throw std::invalid_argument("toy mr: observation buffer has wrong length");
  std::fill(out.begin(), out.end(), 0.0);
  const ToyMrState s = decode(state);
  const int rooms = map_.room_count();
  const int sz = map_.room_size;
  out[static_cast<std::size_t>(map_.room_of_cell(s.cell))] = 1.0;
  const int local = ((s.cell / map_.width()) % sz) * sz + (s.cell % map_.width()) % sz;
  out[static_cast<std::size_t>(rooms + local)] = 1.0;
  std::size_t base = static_cast<std::size_t>(rooms + sz * sz);
  for (std::size_t k = 0; k < map_.keys.size(); ++k)
    out[base + k] = (s.keys_taken >> k) & 1 ? 1.0 : 0.0;
  base += map_.keys.size();
  for (std::size_t d = 0; d < map_.doors.size(); ++d)
    out[base + d] = (s.doors_open >> d) & 1 ? 1.0 : 0.0;
}

int ToyMr::region(const State& state) const { return map_.room_of_cell(decode(state).cell); }

ToyMr load_toy_mr(const std::string& path, int max_episode_len) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open map file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return ToyMr(ToyMrMap::parse(buf.str()), max_episode_len);
}

}  // namespace ensplan
