#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ensplan/env.hpp"
#include "ensplan/random.hpp"

namespace ensplan {

enum class ValueTarget { bootstrap, factual };

std::string to_string(ValueTarget target);
ValueTarget parse_value_target(const std::string& name);

// Training targets for an episode of length T.
//   bootstrap: mean of each step's root value vector, plus penalty_e
//   factual:   values[t-1] = gamma * values[t] + r[t] from zeros, where r is
//              zero except r[T-1] = 1 when solved (values[T-1] stays 0)
std::vector<double> evaluate_episode(std::size_t length, std::span<const std::vector<double>> root_values,
                                     bool solved, ValueTarget mode, double gamma, double penalty_e);

struct EpisodeRecord {
  std::vector<Transition> transitions;
  std::vector<double> values;
  bool solved = false;
  std::vector<std::vector<std::uint8_t>> masks;  // empty, or one per transition
  State final_state;

  std::size_t size() const { return transitions.size(); }
};

// Rewrites an unsolved episode; returning nullopt keeps it verbatim.
using HindsightMapping = std::function<std::optional<EpisodeRecord>(const EpisodeRecord&, Rng&)>;

struct BufferConfig {
  std::size_t capacity = 100000;  // transitions
  double solved_ratio = 0.5;
  int batch_size = 32;
};

void validate(const BufferConfig& cfg);

struct BatchItem {
  const Transition* transition = nullptr;
  double value = 0.0;
  std::span<const std::uint8_t> mask;  // empty when the episode has no masks
  bool solved = false;
};

// Episodes kept FIFO; the oldest are evicted once the transition count
// exceeds capacity (the newest episode always stays).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(BufferConfig cfg);

  const BufferConfig& config() const { return cfg_; }
  void add(EpisodeRecord record, const HindsightMapping* hindsight, Rng& rng);

  std::size_t episodes() const { return episodes_.size(); }
  std::size_t transitions() const { return transitions_; }
  std::size_t population_transitions(bool solved) const;
  const std::deque<EpisodeRecord>& records() const { return episodes_; }

  // Slot b (1-based) reads the solved population unless b * ratio is a whole
  // number. A game is drawn with probability proportional to its length,
  // then a transition uniformly inside it. An empty population is replaced
  // by the other one.
  static bool slot_selects_solved(int b, double ratio);
  std::vector<BatchItem> batch(int size, double ratio, Rng& rng) const;
  std::vector<BatchItem> batch(Rng& rng) const { return batch(cfg_.batch_size, cfg_.solved_ratio, rng); }

 private:
  struct Span {
    std::uint64_t start;  // running transition offset inside the population
    std::uint64_t episode;  // global episode id
  };
  struct Population {
    std::deque<Span> spans;
    std::uint64_t end = 0;
    std::uint64_t size() const { return spans.empty() ? 0 : end - spans.front().start; }
  };

  BufferConfig cfg_;
  std::deque<EpisodeRecord> episodes_;
  std::uint64_t first_id_ = 0;
  std::size_t transitions_ = 0;
  Population pops_[2];  // [unsolved, solved]
};

}  // namespace ensplan
