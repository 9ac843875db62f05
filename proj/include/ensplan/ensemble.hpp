#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ensplan/env.hpp"
#include "ensplan/nets.hpp"
#include "ensplan/random.hpp"

namespace ensplan {

struct EnsembleConfig {
  int size = 1;
  Arch arch = Arch::linear;
  std::vector<int> hidden;
  double prior_scale = 0.0;  // > 0 attaches a frozen random prior to every member
  RmsPropConfig optimizer;
};

struct Member {
  NetParams net;
  OptState opt;
  std::optional<NetParams> prior;
};

// K value networks approximating a posterior over value functions. When
// built over frozen feature networks, members read the vector of frozen
// outputs instead of the raw observation; that is the learned aggregation
// used for transfer.
class Ensemble {
 public:
  Ensemble() = default;
  Ensemble(const EnsembleConfig& config, int observation_len, std::uint64_t seed);

  // Single trainable aggregator MLP (one hidden layer of aggregator_hidden
  // units) over the outputs of the frozen networks. With averaging_init the
  // aggregator starts as the exact mean of its inputs.
  static Ensemble aggregated(std::vector<NetParams> frozen, int aggregator_hidden, RmsPropConfig optimizer,
                             std::uint64_t seed, bool averaging_init);

  int size() const { return static_cast<int>(members_.size()); }
  int observation_len() const { return observation_len_; }
  int feature_len() const;
  double prior_scale() const { return prior_scale_; }
  const std::vector<Member>& members() const { return members_; }
  std::vector<Member>& members() { return members_; }
  const std::vector<NetParams>& frozen() const { return frozen_; }

  // Observation -> member input (identity unless frozen networks are set).
  void features(std::span<const double> observation, std::vector<double>& out) const;
  double member_value(int member, std::span<const double> features) const;

  // Component i is member selection[i] evaluated on the observation.
  void evaluate(std::span<const int> selection, std::span<const double> observation, std::span<double> out) const;
  std::vector<double> evaluate_all(std::span<const double> observation) const;

  // One gradient step per member on the masked objective. masks is row-major
  // |batch| x K; an empty masks span means every row trains every member.
  // Returns per-member losses.
  std::vector<double> train_step(std::span<const std::vector<double>> observations, std::span<const double> targets,
                                 std::span<const std::uint8_t> masks, double l2);

  friend void write_ensemble(std::ostream& out, const Ensemble& e, const std::string& metadata_json);
  friend Ensemble read_ensemble(std::istream& in, std::string* metadata_json);

 private:
  int observation_len_ = 0;
  double prior_scale_ = 0.0;
  std::vector<NetParams> frozen_;
  std::vector<Member> members_;
};

void write_ensemble(std::ostream& out, const Ensemble& e, const std::string& metadata_json);
Ensemble read_ensemble(std::istream& in, std::string* metadata_json = nullptr);
void save_ensemble(const std::string& path, const Ensemble& e, const std::string& metadata_json);
Ensemble load_ensemble(const std::string& path, std::string* metadata_json = nullptr);

// -- sub-sampling --------------------------------------------------------------

struct SubsampleSelection {
  std::vector<int> indices;
  int size() const { return static_cast<int>(indices.size()); }
};

// Uniform size-l subset of {0..K-1} drawn without replacement; l == 0 means
// sub-sampling is disabled and the full ensemble is used in order.
SubsampleSelection subsample(int ensemble_size, int l, Rng& rng);

// -- risk measures -------------------------------------------------------------

enum class RiskKind { mean, mean_std, var_load, exp, vote };

struct RiskMeasure {
  RiskKind kind = RiskKind::mean;
  double kappa = 0.0;
};

std::string to_string(RiskKind kind);
RiskKind parse_risk(const std::string& name);

// Scores the actions (columns) of a rows x cols value matrix (row-major, one
// row per ensemble member):
//   mean      column mean
//   mean_std  column mean + kappa * population std
//   var_load  (1/rows) sum_i (q + kappa q^2)
//   exp       (1/rows) sum_i exp(kappa q)
//   vote      number of rows whose argmax is the column (row ties broken
//             uniformly at random)
std::vector<double> score_actions(std::span<const double> q, int rows, int cols, const RiskMeasure& measure, Rng& rng);

// Index of a maximal entry, ties broken uniformly at random.
int argmax_random_tie(std::span<const double> values, Rng& rng);

// -- masks ---------------------------------------------------------------------

enum class MaskPolicy { none, static_bernoulli, static_per_trajectory, dynamic_split };

std::string to_string(MaskPolicy policy);
MaskPolicy parse_mask_policy(const std::string& name);

struct MaskConfig {
  MaskPolicy policy = MaskPolicy::none;
  double p = 0.5;
};

// Bernoulli(p) vector of length K, redrawn while it is all zero.
std::vector<std::uint8_t> make_mask(double p, int ensemble_size, Rng& rng);

// Masks fixed when an episode enters the replay buffer: one per transition
// for static_bernoulli, one shared by the whole episode for
// static_per_trajectory, none otherwise.
std::vector<std::vector<std::uint8_t>> make_episode_masks(const MaskConfig& config, int ensemble_size, int length,
                                                          Rng& rng);

// Batch-time masks for dynamic splitting: contiguous blocks of
// batch_size / K rows train one member each (row-major batch_size x K).
std::vector<std::uint8_t> dynamic_split_masks(int batch_size, int ensemble_size);

// -- learned aggregation -------------------------------------------------------

// One-hidden-layer aggregator whose output equals the mean of its n inputs:
// relu(mean) - relu(-mean). Requires hidden >= 2.
NetParams aggregator_averaging(int inputs, int hidden);
double aggregate_learned(std::span<const double> member_values, const NetParams& aggregator);

// -- planner value source ------------------------------------------------------

// Maps a state to the ensemble value vector the planner stores in its
// transposition table.
class StateEvaluator {
 public:
  virtual ~StateEvaluator() = default;
  virtual int dimension() const = 0;
  virtual void evaluate(const State& state, std::span<double> out) const = 0;
};

class EnsembleEvaluator final : public StateEvaluator {
 public:
  EnsembleEvaluator(const Environment& env, const Ensemble& ensemble, SubsampleSelection selection);

  int dimension() const override { return selection_.size(); }
  void evaluate(const State& state, std::span<double> out) const override;
  const SubsampleSelection& selection() const { return selection_; }

 private:
  const Environment& env_;
  const Ensemble& ensemble_;
  SubsampleSelection selection_;
};

}  // namespace ensplan
