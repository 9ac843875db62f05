#include "ensplan/sokoban.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ensplan/bytes.hpp"

namespace ensplan {
namespace {

constexpr int kDy[4] = {-1, 1, 0, 0};
constexpr int kDx[4] = {0, 0, -1, 1};
constexpr int opposite(int a) { return a ^ 1; }

// State layout: width, height, agent (u16), then one flag byte per cell.
constexpr std::size_t kHeader = 4;
constexpr unsigned char kWall = 1;
constexpr unsigned char kTarget = 2;
constexpr unsigned char kBox = 4;

unsigned char flags_at(const std::string& s, int cell) {
  return static_cast<unsigned char>(s[kHeader + static_cast<std::size_t>(cell)]);
}

void set_flags(std::string& s, int cell, unsigned char f) {
  s[kHeader + static_cast<std::size_t>(cell)] = static_cast<char>(f);
}

bool all_boxes_placed(const std::string& s) {
  for (std::size_t i = kHeader; i < s.size(); ++i) {
    const auto f = static_cast<unsigned char>(s[i]);
    if ((f & kBox) && !(f & kTarget)) return false;
  }
  return true;
}

}  // namespace

int SokobanBoard::targets() const {
  return static_cast<int>(std::count(cells.begin(), cells.end(), SokobanCell::target));
}

bool SokobanBoard::solved() const {
  return std::all_of(boxes.begin(), boxes.end(), [&](int b) {
    return cells[static_cast<std::size_t>(b)] == SokobanCell::target;
  });
}

void SokobanBoard::validate() const {
  if (width < 3 || height < 3 || width > 255 || height > 255)
    throw std::invalid_argument("sokoban board dimensions out of range");
  if (cells.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("sokoban board cell count does not match its dimensions");
  if (boxes.empty()) throw std::invalid_argument("sokoban board has no boxes");
  if (static_cast<int>(boxes.size()) != targets())
    throw std::invalid_argument("sokoban board box count differs from target count");
  const int n = width * height;
  if (agent < 0 || agent >= n || cells[static_cast<std::size_t>(agent)] == SokobanCell::wall)
    throw std::invalid_argument("sokoban agent must stand on a free cell");
  if (!std::is_sorted(boxes.begin(), boxes.end()) ||
      std::adjacent_find(boxes.begin(), boxes.end()) != boxes.end())
    throw std::invalid_argument("sokoban boxes must be sorted and distinct");
  for (int b : boxes) {
    if (b < 0 || b >= n || cells[static_cast<std::size_t>(b)] == SokobanCell::wall || b == agent)
      throw std::invalid_argument("sokoban box on a wall, off board, or under the agent");
  }
}

std::vector<SokobanBoard> parse_levels(std::string_view text) {
  std::vector<std::vector<std::string>> blocks(1);
  std::string line;
  int line_no = 0;
  auto flush_line = [&]() {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line.front() == ';') {
      line.clear();
      return;
    }
    if (line.find_first_not_of(" \t") == std::string::npos) {
      if (!blocks.back().empty()) blocks.emplace_back();
    } else {
      for (std::size_t i = 0; i < line.size(); ++i) {
        if (std::string_view("# .$*@+-_").find(line[i]) == std::string_view::npos)
          throw LevelParseError("line " + std::to_string(line_no) + ", column " +
                                std::to_string(i + 1) + ": unknown level character '" + line[i] + "'");
      }
      blocks.back().push_back(line);
    }
    line.clear();
  };
  for (char c : text) {
    if (c == '\n') flush_line();
    else line.push_back(c);
  }
  if (!line.empty()) flush_line();
  if (blocks.back().empty()) blocks.pop_back();

  std::vector<SokobanBoard> boards;
  for (const auto& rows : blocks) {
    SokobanBoard b;
    b.height = static_cast<int>(rows.size());
    for (const auto& r : rows) b.width = std::max(b.width, static_cast<int>(r.size()));
    b.cells.assign(static_cast<std::size_t>(b.width) * b.height, SokobanCell::floor);
    for (int y = 0; y < b.height; ++y) {
      for (int x = 0; x < b.width; ++x) {
        const char c = x < static_cast<int>(rows[static_cast<std::size_t>(y)].size())
                           ? rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)]
                           : ' ';
        const int cell = y * b.width + x;
        auto& tag = b.cells[static_cast<std::size_t>(cell)];
        switch (c) {
          case '#': tag = SokobanCell::wall; break;
          case '.': tag = SokobanCell::target; break;
          case '$': b.boxes.push_back(cell); break;
          case '*': tag = SokobanCell::target; b.boxes.push_back(cell); break;
          case '+': tag = SokobanCell::target; [[fallthrough]];
          case '@':
            if (b.agent >= 0) throw LevelParseError("level " + std::to_string(boards.size()) + ": more than one agent");
            b.agent = cell;
            break;
          default: break;
        }
      }
    }
    try {
      b.validate();
    } catch (const std::invalid_argument& e) {
      throw LevelParseError("level " + std::to_string(boards.size()) + ": " + e.what());
    }
    boards.push_back(std::move(b));
  }
  return boards;
}

std::string format_level(const SokobanBoard& board) {
  std::string out;
  for (int y = 0; y < board.height; ++y) {
    for (int x = 0; x < board.width; ++x) {
      const int cell = y * board.width + x;
      const auto tag = board.cells[static_cast<std::size_t>(cell)];
      const bool box = std::binary_search(board.boxes.begin(), board.boxes.end(), cell);
      const bool target = tag == SokobanCell::target;
      char c = ' ';
      if (tag == SokobanCell::wall) c = '#';
      else if (cell == board.agent) c = target ? '+' : '@';
      else if (box) c = target ? '*' : '$';
      else if (target) c = '.';
      out.push_back(c);
    }
    out.push_back('\n');
  }
  return out;
}

std::vector<SokobanBoard> load_levels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open level file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_levels(buf.str());
}

// -- generator ---------------------------------------------------------------

namespace {

// Carving shapes of the random-walk room topology (3x3 stencils).
constexpr int kMasks[5][3][3] = {
    {{0, 0, 0}, {1, 1, 1}, {0, 0, 0}},
    {{0, 1, 0}, {0, 1, 0}, {0, 1, 0}},
    {{0, 0, 0}, {1, 1, 0}, {0, 1, 0}},
    {{0, 0, 0}, {1, 1, 0}, {1, 1, 0}},
    {{0, 0, 0}, {0, 1, 1}, {0, 1, 0}},
};

std::vector<SokobanCell> random_topology(int w, int h, Rng& rng) {
  std::vector<int> open(static_cast<std::size_t>(w) * h, 0);
  int dir = uniform_int(rng, 0, 3);
  int y = uniform_int(rng, 1, h - 2);
  int x = uniform_int(rng, 1, w - 2);
  open[static_cast<std::size_t>(y * w + x)] = 1;
  const int steps = static_cast<int>(1.5 * (w + h));
  for (int s = 0; s < steps; ++s) {
    if (uniform01(rng) < 0.35) dir = uniform_int(rng, 0, 3);
    y = std::clamp(y + kDy[dir], 1, h - 2);
    x = std::clamp(x + kDx[dir], 1, w - 2);
    const auto& m = kMasks[uniform_int(rng, 0, 4)];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (m[i][j]) open[static_cast<std::size_t>((y + i - 1) * w + (x + j - 1))] = 1;
  }
  std::vector<SokobanCell> cells(open.size(), SokobanCell::wall);
  for (int yy = 1; yy < h - 1; ++yy)
    for (int xx = 1; xx < w - 1; ++xx)
      if (open[static_cast<std::size_t>(yy * w + xx)]) cells[static_cast<std::size_t>(yy * w + xx)] = SokobanCell::floor;
  return cells;
}

}  // namespace

GeneratedBoard sokoban_generate(const GeneratorParams& p, std::uint64_t seed) {
  if (p.num_boxes < 1) throw std::invalid_argument("sokoban generator needs at least one box");
  if (p.width < 4 || p.height < 4 || p.width > 255 || p.height > 255)
    throw std::invalid_argument("sokoban generator dimensions out of range");
  if (p.num_boxes + 1 > (p.width - 2) * (p.height - 2))
    throw std::invalid_argument("sokoban generator: board too small for the boxes");
  if (p.pull_steps < 0) throw std::invalid_argument("sokoban generator: negative pull_steps");

  Rng rng = make_rng(seed, 0x50c0ba);
  const int w = p.width;
  for (int attempt = 0; attempt < p.max_retries; ++attempt) {
    SokobanBoard b;
    b.width = w;
    b.height = p.height;
    b.cells = random_topology(w, p.height, rng);

    std::vector<int> free;
    for (int c = 0; c < static_cast<int>(b.cells.size()); ++c)
      if (b.cells[static_cast<std::size_t>(c)] == SokobanCell::floor) free.push_back(c);
    if (static_cast<int>(free.size()) < p.num_boxes + 2) continue;
    std::shuffle(free.begin(), free.end(), rng);
    for (int i = 0; i < p.num_boxes; ++i) {
      b.cells[static_cast<std::size_t>(free[static_cast<std::size_t>(i)])] = SokobanCell::target;
      b.boxes.push_back(free[static_cast<std::size_t>(i)]);
    }
    b.agent = free[static_cast<std::size_t>(p.num_boxes)];

    auto has_box = [&](int cell) { return std::find(b.boxes.begin(), b.boxes.end(), cell) != b.boxes.end(); };
    auto walkable = [&](int cell) { return b.cells[static_cast<std::size_t>(cell)] != SokobanCell::wall && !has_box(cell); };

    std::vector<int> reverse_moves;
    // Reverse moves up to the last solved layout are never needed forward.
    std::size_t last_solved = 0;
    for (int s = 0; s < p.pull_steps; ++s) {
      int options[4];
      int n = 0;
      for (int d = 0; d < 4; ++d) {
        const int next = b.agent + kDy[d] * w + kDx[d];
        if (walkable(next)) options[n++] = d;
      }
      if (n == 0) break;
      const int d = options[uniform_int(rng, 0, n - 1)];
      const int behind = b.agent - kDy[d] * w - kDx[d];
      const int from = b.agent;
      b.agent = from + kDy[d] * w + kDx[d];
      auto box = std::find(b.boxes.begin(), b.boxes.end(), behind);
      if (box != b.boxes.end()) *box = from;
      reverse_moves.push_back(d);
      if (b.solved()) last_solved = reverse_moves.size();
    }
    std::sort(b.boxes.begin(), b.boxes.end());
    if (p.pull_steps > 0 && b.solved()) continue;

    GeneratedBoard out;
    out.board = std::move(b);
    for (auto it = reverse_moves.rbegin(); it != reverse_moves.rend() - static_cast<std::ptrdiff_t>(last_solved); ++it)
      out.solution.push_back(opposite(*it));
    return out;
  }
  throw GenerationError("sokoban generator: no acceptable board after " + std::to_string(p.max_retries) +
                        " attempts");
}

// -- environment -------------------------------------------------------------

Sokoban::Sokoban(SokobanConfig config) : config_(std::move(config)), width_(0), height_(0) {
  if (config_.max_episode_len < 1) throw std::invalid_argument("sokoban: episode cap must be positive");
  if (config_.mode == SokobanConfig::Mode::generated) {
    width_ = config_.generator.width;
    height_ = config_.generator.height;
  } else {
    if (config_.boards.empty()) throw std::invalid_argument("sokoban: no boards configured");
    width_ = config_.boards.front().width;
    height_ = config_.boards.front().height;
    for (const auto& b : config_.boards) {
      b.validate();
      if (b.width != width_ || b.height != height_)
        throw std::invalid_argument("sokoban: all boards of one environment must share dimensions");
    }
  }
}

EnvSpec Sokoban::spec() const { return {kSokobanActions, config_.max_episode_len, width_ * height_ * 7}; }

State Sokoban::make_state(const SokobanBoard& board) {
  State s;
  s.bytes.reserve(kHeader + board.cells.size());
  s.bytes.push_back(static_cast<char>(board.width));
  s.bytes.push_back(static_cast<char>(board.height));
  bytes::put_u16(s.bytes, static_cast<std::uint16_t>(board.agent));
  for (auto c : board.cells) s.bytes.push_back(static_cast<char>(c == SokobanCell::wall ? kWall : c == SokobanCell::target ? kTarget : 0));
  for (int b : board.boxes) s.bytes[kHeader + static_cast<std::size_t>(b)] |= static_cast<char>(kBox);
  return s;
}

SokobanBoard Sokoban::decode(const State& state) {
  SokobanBoard b;
  b.width = static_cast<unsigned char>(state.bytes[0]);
  b.height = static_cast<unsigned char>(state.bytes[1]);
  b.agent = bytes::get_u16(state.bytes, 2);
  const int n = b.width * b.height;
  b.cells.resize(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) {
    const auto f = flags_at(state.bytes, c);
    b.cells[static_cast<std::size_t>(c)] = (f & kWall) ? SokobanCell::wall : (f & kTarget) ? SokobanCell::target : SokobanCell::floor;
    if (f & kBox) b.boxes.push_back(c);
  }
  return b;
}

std::vector<int> Sokoban::box_cells(const State& state) {
  std::vector<int> out;
  for (std::size_t i = kHeader; i < state.bytes.size(); ++i)
    if (static_cast<unsigned char>(state.bytes[i]) & kBox) out.push_back(static_cast<int>(i - kHeader));
  return out;
}

State Sokoban::with_targets(const State& state, std::span<const int> targets) {
  State out = state;
  for (std::size_t i = kHeader; i < out.bytes.size(); ++i)
    out.bytes[i] = static_cast<char>(static_cast<unsigned char>(out.bytes[i]) & ~kTarget);
  for (int t : targets) set_flags(out.bytes, t, static_cast<unsigned char>(flags_at(out.bytes, t) | kTarget));
  return out;
}

State Sokoban::reset(std::uint64_t seed) const {
  switch (config_.mode) {
    case SokobanConfig::Mode::single:
      return make_state(config_.boards.front());
    case SokobanConfig::Mode::pool:
      return make_state(config_.boards[seed % config_.boards.size()]);
    case SokobanConfig::Mode::generated:
      return make_state(sokoban_generate(config_.generator, seed).board);
  }
  throw std::logic_error("sokoban: unknown mode");
}

bool Sokoban::is_terminal(const State& state) const { return all_boxes_placed(state.bytes); }

StepOutcome Sokoban::step(const State& state, int action) const {
  check_action(*this, action);
  if (all_boxes_placed(state.bytes)) throw std::logic_error("sokoban: step from solved state");

  StepOutcome out;
  out.next_state = state;
  std::string& s = out.next_state.bytes;
  const int w = static_cast<unsigned char>(s[0]);
  const int h = static_cast<unsigned char>(s[1]);
  const int agent = bytes::get_u16(s, 2);
  auto offset = [&](int cell) {
    const int y = cell / w + kDy[action];
    const int x = cell % w + kDx[action];
    return (y < 0 || y >= h || x < 0 || x >= w) ? -1 : y * w + x;
  };
  const int next = offset(agent);
  if (next < 0) return out;
  const auto fn = flags_at(s, next);
  if (fn & kWall) return out;
  if (fn & kBox) {
    const int beyond = offset(next);
    if (beyond < 0) return out;
    const auto fb = flags_at(s, beyond);
    if (fb & (kWall | kBox)) return out;
    set_flags(s, next, static_cast<unsigned char>(fn & ~kBox));
    set_flags(s, beyond, static_cast<unsigned char>(fb | kBox));
  }
  s[2] = static_cast<char>(next & 0xff);
  s[3] = static_cast<char>(next >> 8);
  if ((fn & kBox) && all_boxes_placed(s)) {
    out.reward = 1.0;
    out.done = true;
    out.solved = true;
  }
  return out;
}

void Sokoban::encode(const State& state, std::span<double> out) const {
  const int w = static_cast<unsigned char>(state.bytes[0]);
  const int h = static_cast<unsigned char>(state.bytes[1]);
  if (w != width_ || h != height_ || out.size() != static_cast<std::size_t>(w * h * 7))
    throw std::invalid_argument("sokoban: observation shape mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  const int agent = bytes::get_u16(state.bytes, 2);
  for (int c = 0; c < w * h; ++c) {
    const auto f = flags_at(state.bytes, c);
    const bool target = f & kTarget;
    int cls;
    if (f & kWall) cls = 0;
    else if (c == agent) cls = target ? 6 : 5;
    else if (f & kBox) cls = target ? 4 : 3;
    else cls = target ? 2 : 1;
    out[static_cast<std::size_t>(c * 7 + cls)] = 1.0;
  }
}

// -- hindsight ---------------------------------------------------------------

std::optional<std::vector<Transition>> sokoban_hindsight(std::span<const Transition> episode,
                                                         const State& final_state, bool solved, Rng& rng) {
  if (solved) throw std::invalid_argument("sokoban hindsight applies to unsolved episodes only");
  const int T = static_cast<int>(episode.size());
  auto state_at = [&](int t) -> const State& {
    return t < T ? episode[static_cast<std::size_t>(t)].state : final_state;
  };
  for (int draw = 0; draw < 10; ++draw) {
    const int t = uniform_int(rng, 0, T);
    if (t == 0) continue;
    const std::vector<int> goal = Sokoban::box_cells(state_at(t));
    bool degenerate = false;
    for (int j = 0; j < t && !degenerate; ++j) degenerate = Sokoban::box_cells(state_at(j)) == goal;
    if (degenerate) continue;

    std::vector<Transition> out;
    out.reserve(static_cast<std::size_t>(t));
    for (int j = 0; j < t; ++j) {
      const auto& src = episode[static_cast<std::size_t>(j)];
      out.push_back({Sokoban::with_targets(src.state, goal), src.action, j == t - 1 ? 1.0 : 0.0});
    }
    return out;
  }
  return std::nullopt;
}

}  // namespace ensplan
