#include "ensplan/replay.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ensplan {

std::string to_string(ValueTarget target) { return target == ValueTarget::bootstrap ? "bootstrap" : "factual"; }

ValueTarget parse_value_target(const std::string& name) {
  if (name == "bootstrap") return ValueTarget::bootstrap;
  if (name == "factual") return ValueTarget::factual;
  throw std::invalid_argument("unknown value target '" + name + "' (expected bootstrap or factual)");
}

std::vector<double> evaluate_episode(std::size_t length, std::span<const std::vector<double>> root_values,
                                     bool solved, ValueTarget mode, double gamma, double penalty_e) {
  std::vector<double> values(length, 0.0);
  if (mode == ValueTarget::bootstrap) {
    if (root_values.size() != length) throw std::invalid_argument("bootstrap targets need one root vector per step");
    for (std::size_t t = 0; t < length; ++t) {
      const auto& v = root_values[t];
      if (v.empty()) throw std::invalid_argument("empty root value vector");
      values[t] = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()) + penalty_e;
    }
    return values;
  }
  std::vector<double> r(length, 0.0);
  if (length > 0 && solved) r[length - 1] = 1.0;
  for (std::size_t t = length; t-- > 1;) values[t - 1] = gamma * values[t] + r[t];
  return values;
}

void validate(const BufferConfig& cfg) {
  if (cfg.capacity < 1) throw std::invalid_argument("training.buffer_capacity must be positive");
  if (cfg.batch_size < 1) throw std::invalid_argument("training.batch_size must be positive");
  if (!(cfg.solved_ratio >= 0.0 && cfg.solved_ratio <= 1.0))
    throw std::invalid_argument("training.solved_ratio must lie in [0, 1]");
}

ReplayBuffer::ReplayBuffer(BufferConfig cfg) : cfg_(cfg) { validate(cfg_); }

std::size_t ReplayBuffer::population_transitions(bool solved) const { return pops_[solved ? 1 : 0].size(); }

void ReplayBuffer::add(EpisodeRecord record, const HindsightMapping* hindsight, Rng& rng) {
  if (record.values.size() != record.transitions.size())
    throw std::invalid_argument("replay add: values and transitions differ in length");
  if (!record.masks.empty() && record.masks.size() != record.transitions.size())
    throw std::invalid_argument("replay add: masks and transitions differ in length");
  if (hindsight && *hindsight && !record.solved) {
    if (auto mapped = (*hindsight)(record, rng)) record = std::move(*mapped);
  }
  if (record.transitions.empty()) return;

  const std::uint64_t id = first_id_ + episodes_.size();
  Population& pop = pops_[record.solved ? 1 : 0];
  pop.spans.push_back({pop.end, id});
  pop.end += record.size();
  transitions_ += record.size();
  episodes_.push_back(std::move(record));

  while (transitions_ > cfg_.capacity && episodes_.size() > 1) {
    const EpisodeRecord& old = episodes_.front();
    Population& owner = pops_[old.solved ? 1 : 0];
    owner.spans.pop_front();
    transitions_ -= old.size();
    episodes_.pop_front();
    ++first_id_;
  }
}

bool ReplayBuffer::slot_selects_solved(int b, double ratio) {
  return std::fmod(static_cast<double>(b) * ratio, 1.0) != 0.0;
}

std::vector<BatchItem> ReplayBuffer::batch(int size, double ratio, Rng& rng) const {
  if (episodes_.empty()) throw std::logic_error("replay batch from an empty buffer");
  std::vector<BatchItem> out;
  out.reserve(static_cast<std::size_t>(size));
  for (int b = 1; b <= size; ++b) {
    int which = slot_selects_solved(b, ratio) ? 1 : 0;
    if (pops_[which].size() == 0) which = 1 - which;
    const Population& pop = pops_[which];
    // A uniform offset over the population's transitions lands in a game
    // with probability proportional to its length, and uniformly inside it.
    const std::uint64_t base = pop.spans.front().start;
    std::uniform_int_distribution<std::uint64_t> pick(0, pop.size() - 1);
    const std::uint64_t u = base + pick(rng);
    auto it = std::upper_bound(pop.spans.begin(), pop.spans.end(), u,
                               [](std::uint64_t x, const Span& s) { return x < s.start; });
    --it;
    const EpisodeRecord& rec = episodes_[static_cast<std::size_t>(it->episode - first_id_)];
    const auto t = static_cast<std::size_t>(u - it->start);
    BatchItem item;
    item.transition = &rec.transitions[t];
    item.value = rec.values[t];
    if (!rec.masks.empty()) item.mask = rec.masks[t];
    item.solved = rec.solved;
    out.push_back(item);
  }
  return out;
}

}  // namespace ensplan
