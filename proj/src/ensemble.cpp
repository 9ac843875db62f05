#include "ensplan/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ensplan/binio.hpp"

namespace ensplan {

Ensemble::Ensemble(const EnsembleConfig& config, int observation_len, std::uint64_t seed)
    : observation_len_(observation_len), prior_scale_(config.prior_scale) {
  if (config.size < 1) throw std::invalid_argument("ensemble size must be positive");
  if (config.prior_scale < 0.0) throw std::invalid_argument("prior scale must be nonnegative");
  Rng seeds = make_rng(seed, 0xe25e);
  for (int i = 0; i < config.size; ++i) {
    Member m;
    m.net = net_init(config.arch, observation_len, config.hidden, seeds());
    m.opt = make_opt_state(m.net, config.optimizer);
    const std::uint64_t prior_seed = seeds();
    if (config.prior_scale > 0.0) m.prior = net_init(config.arch, observation_len, config.hidden, prior_seed);
    members_.push_back(std::move(m));
  }
}

Ensemble Ensemble::aggregated(std::vector<NetParams> frozen, int aggregator_hidden, RmsPropConfig optimizer,
                              std::uint64_t seed, bool averaging_init) {
  if (frozen.size() < 2) throw std::invalid_argument("aggregation needs at least two frozen networks");
  const int obs_len = frozen.front().input_len;
  for (const auto& f : frozen)
    if (f.input_len != obs_len) throw std::invalid_argument("frozen networks disagree on input length");
  Ensemble e;
  e.observation_len_ = obs_len;
  const int n = static_cast<int>(frozen.size());
  e.frozen_ = std::move(frozen);
  Member m;
  m.net = averaging_init ? aggregator_averaging(n, aggregator_hidden)
                         : net_init(Arch::mlp, n, {aggregator_hidden}, make_rng(seed, 0xa99)());
  m.opt = make_opt_state(m.net, optimizer);
  e.members_.push_back(std::move(m));
  return e;
}

int Ensemble::feature_len() const {
  return frozen_.empty() ? observation_len_ : static_cast<int>(frozen_.size());
}

void Ensemble::features(std::span<const double> observation, std::vector<double>& out) const {
  if (frozen_.empty()) {
    out.assign(observation.begin(), observation.end());
    return;
  }
  out.resize(frozen_.size());
  for (std::size_t k = 0; k < frozen_.size(); ++k) out[k] = net_forward(frozen_[k], observation);
}

double Ensemble::member_value(int member, std::span<const double> features) const {
  const Member& m = members_[static_cast<std::size_t>(member)];
  double v = net_forward(m.net, features);
  if (m.prior) v += prior_scale_ * net_forward(*m.prior, features);
  return v;
}

void Ensemble::evaluate(std::span<const int> selection, std::span<const double> observation,
                        std::span<double> out) const {
  if (out.size() != selection.size()) throw std::invalid_argument("ensemble evaluate: output size mismatch");
  if (frozen_.empty()) {
    for (std::size_t i = 0; i < selection.size(); ++i) out[i] = member_value(selection[i], observation);
    return;
  }
  thread_local std::vector<double> feats;
  features(observation, feats);
  for (std::size_t i = 0; i < selection.size(); ++i) out[i] = member_value(selection[i], feats);
}

std::vector<double> Ensemble::evaluate_all(std::span<const double> observation) const {
  std::vector<int> all(members_.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<double> out(members_.size());
  evaluate(all, observation, out);
  return out;
}

std::vector<double> Ensemble::train_step(std::span<const std::vector<double>> observations,
                                         std::span<const double> targets, std::span<const std::uint8_t> masks,
                                         double l2) {
  const std::size_t rows = observations.size();
  const std::size_t k = members_.size();
  if (targets.size() != rows) throw std::invalid_argument("train_step: targets/observations size mismatch");
  if (!masks.empty() && masks.size() != rows * k) throw std::invalid_argument("train_step: mask shape mismatch");

  std::vector<std::vector<double>> feats;
  std::span<const std::vector<double>> inputs = observations;
  if (!frozen_.empty()) {
    feats.resize(rows);
    for (std::size_t b = 0; b < rows; ++b) features(observations[b], feats[b]);
    inputs = feats;
  }

  std::vector<Sample> batch(rows);
  std::vector<double> grad;
  std::vector<double> losses(k);
  for (std::size_t i = 0; i < k; ++i) {
    Member& m = members_[i];
    for (std::size_t b = 0; b < rows; ++b) {
      batch[b].observation = inputs[b];
      batch[b].target = targets[b];
      batch[b].weight = masks.empty() ? 1.0 : static_cast<double>(masks[b * k + i]);
      batch[b].offset = (m.prior && batch[b].weight != 0.0) ? prior_scale_ * net_forward(*m.prior, inputs[b]) : 0.0;
    }
    losses[i] = net_grad(m.net, batch, l2, grad);
    rmsprop_step(m.net, grad, m.opt);
  }
  return losses;
}

void write_ensemble(std::ostream& out, const Ensemble& e, const std::string& metadata_json) {
  out.write("ENSCKPT1", 8);
  binio::put_string(out, metadata_json);
  binio::put<std::int32_t>(out, e.observation_len_);
  binio::put<double>(out, e.prior_scale_);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(e.frozen_.size()));
  for (const auto& f : e.frozen_) write_net(out, f, make_opt_state(f));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(e.members_.size()));
  for (const auto& m : e.members_) {
    write_net(out, m.net, m.opt);
    binio::put<std::uint8_t>(out, m.prior ? 1 : 0);
    if (m.prior) write_net(out, *m.prior, make_opt_state(*m.prior));
  }
}

Ensemble read_ensemble(std::istream& in, std::string* metadata_json) {
  binio::expect_magic(in, "ENSCKPT1");
  Ensemble e;
  std::string meta = binio::get_string(in);
  if (metadata_json) *metadata_json = std::move(meta);
  e.observation_len_ = binio::get<std::int32_t>(in);
  e.prior_scale_ = binio::get<double>(in);
  const auto frozen = binio::get<std::uint32_t>(in);
  if (frozen > 1024) throw binio::FormatError("implausible frozen network count");
  OptState scratch;
  for (std::uint32_t k = 0; k < frozen; ++k) {
    NetParams f;
    read_net(in, f, scratch);
    e.frozen_.push_back(std::move(f));
  }
  const auto members = binio::get<std::uint32_t>(in);
  if (members < 1 || members > 4096) throw binio::FormatError("implausible ensemble size");
  for (std::uint32_t k = 0; k < members; ++k) {
    Member m;
    read_net(in, m.net, m.opt);
    if (binio::get<std::uint8_t>(in)) {
      NetParams p;
      read_net(in, p, scratch);
      m.prior = std::move(p);
    }
    e.members_.push_back(std::move(m));
  }
  return e;
}

void save_ensemble(const std::string& path, const Ensemble& e, const std::string& metadata_json) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  write_ensemble(out, e, metadata_json);
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

Ensemble load_ensemble(const std::string& path, std::string* metadata_json) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  return read_ensemble(in, metadata_json);
}

// -- sub-sampling --------------------------------------------------------------

SubsampleSelection subsample(int ensemble_size, int l, Rng& rng) {
  if (ensemble_size < 1) throw std::invalid_argument("subsample: ensemble size must be positive");
  if (l < 0 || l > ensemble_size)
    throw std::invalid_argument("subsample: l=" + std::to_string(l) + " outside [0, K=" +
                                std::to_string(ensemble_size) + "]");
  SubsampleSelection sel;
  sel.indices.resize(static_cast<std::size_t>(ensemble_size));
  std::iota(sel.indices.begin(), sel.indices.end(), 0);
  if (l == 0 || l == ensemble_size) return sel;
  // Partial Fisher-Yates: the first l slots form a uniform subset.
  for (int i = 0; i < l; ++i) {
    const int j = uniform_int(rng, i, ensemble_size - 1);
    std::swap(sel.indices[static_cast<std::size_t>(i)], sel.indices[static_cast<std::size_t>(j)]);
  }
  sel.indices.resize(static_cast<std::size_t>(l));
  return sel;
}

// -- risk measures -------------------------------------------------------------

std::string to_string(RiskKind kind) {
  switch (kind) {
    case RiskKind::mean: return "mean";
    case RiskKind::mean_std: return "mean_std";
    case RiskKind::var_load: return "var_load";
    case RiskKind::exp: return "exp";
    case RiskKind::vote: return "vote";
  }
  return "?";
}

RiskKind parse_risk(const std::string& name) {
  for (auto k : {RiskKind::mean, RiskKind::mean_std, RiskKind::var_load, RiskKind::exp, RiskKind::vote})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown risk measure '" + name + "'");
}

int argmax_random_tie(std::span<const double> values, Rng& rng) {
  if (values.empty()) throw std::invalid_argument("argmax of empty range");
  double best = values[0];
  int count = 0;
  int choice = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] > best) {
      best = values[i];
      count = 0;
    }
    if (values[i] == best) {
      // Reservoir sampling over the tied maxima.
      ++count;
      if (count == 1 || uniform_int(rng, 0, count - 1) == 0) choice = static_cast<int>(i);
    }
  }
  return choice;
}

std::vector<double> score_actions(std::span<const double> q, int rows, int cols, const RiskMeasure& m, Rng& rng) {
  if (rows < 1 || cols < 1 || q.size() != static_cast<std::size_t>(rows) * cols)
    throw std::invalid_argument("score_actions: bad matrix shape");
  std::vector<double> scores(static_cast<std::size_t>(cols), 0.0);
  auto at = [&](int i, int a) { return q[static_cast<std::size_t>(i) * cols + a]; };
  const double inv = 1.0 / rows;

  switch (m.kind) {
    case RiskKind::mean:
    case RiskKind::mean_std:
      for (int a = 0; a < cols; ++a) {
        double mean = 0.0;
        for (int i = 0; i < rows; ++i) mean += at(i, a);
        mean *= inv;
        double score = mean;
        if (m.kind == RiskKind::mean_std && m.kappa != 0.0) {
          double var = 0.0;
          for (int i = 0; i < rows; ++i) var += (at(i, a) - mean) * (at(i, a) - mean);
          score += m.kappa * std::sqrt(var * inv);
        }
        scores[static_cast<std::size_t>(a)] = score;
      }
      break;
    case RiskKind::var_load:
      for (int a = 0; a < cols; ++a) {
        double s = 0.0;
        for (int i = 0; i < rows; ++i) s += at(i, a) + m.kappa * at(i, a) * at(i, a);
        scores[static_cast<std::size_t>(a)] = s * inv;
      }
      break;
    case RiskKind::exp:
      for (int a = 0; a < cols; ++a) {
        double s = 0.0;
        for (int i = 0; i < rows; ++i) s += std::exp(m.kappa * at(i, a));
        scores[static_cast<std::size_t>(a)] = s * inv;
      }
      break;
    case RiskKind::vote:
      for (int i = 0; i < rows; ++i) {
        const int a = argmax_random_tie(q.subspan(static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)), rng);
        scores[static_cast<std::size_t>(a)] += 1.0;
      }
      break;
  }
  return scores;
}

// -- masks ---------------------------------------------------------------------

std::string to_string(MaskPolicy policy) {
  switch (policy) {
    case MaskPolicy::none: return "none";
    case MaskPolicy::static_bernoulli: return "static_bernoulli";
    case MaskPolicy::static_per_trajectory: return "static_per_trajectory";
    case MaskPolicy::dynamic_split: return "dynamic";
  }
  return "?";
}

MaskPolicy parse_mask_policy(const std::string& name) {
  for (auto p : {MaskPolicy::none, MaskPolicy::static_bernoulli, MaskPolicy::static_per_trajectory,
                 MaskPolicy::dynamic_split})
    if (to_string(p) == name) return p;
  throw std::invalid_argument("unknown mask policy '" + name + "'");
}

std::vector<std::uint8_t> make_mask(double p, int ensemble_size, Rng& rng) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("mask probability must lie in (0, 1]");
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(ensemble_size));
  std::bernoulli_distribution coin(p);
  do {
    for (auto& m : mask) m = coin(rng) ? 1 : 0;
  } while (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));
  return mask;
}

std::vector<std::vector<std::uint8_t>> make_episode_masks(const MaskConfig& config, int ensemble_size, int length,
                                                          Rng& rng) {
  std::vector<std::vector<std::uint8_t>> masks;
  switch (config.policy) {
    case MaskPolicy::static_bernoulli:
      for (int t = 0; t < length; ++t) masks.push_back(make_mask(config.p, ensemble_size, rng));
      break;
    case MaskPolicy::static_per_trajectory:
      masks.assign(static_cast<std::size_t>(length), make_mask(config.p, ensemble_size, rng));
      break;
    case MaskPolicy::none:
    case MaskPolicy::dynamic_split:
      break;
  }
  return masks;
}

std::vector<std::uint8_t> dynamic_split_masks(int batch_size, int ensemble_size) {
  if (ensemble_size < 1 || batch_size < 1 || batch_size % ensemble_size != 0)
    throw std::invalid_argument("dynamic masks need a batch size (" + std::to_string(batch_size) +
                                ") divisible by the ensemble size (" + std::to_string(ensemble_size) + ")");
  const int block = batch_size / ensemble_size;
  std::vector<std::uint8_t> masks(static_cast<std::size_t>(batch_size) * ensemble_size, 0);
  for (int b = 0; b < batch_size; ++b) masks[static_cast<std::size_t>(b) * ensemble_size + b / block] = 1;
  return masks;
}

// -- learned aggregation -------------------------------------------------------

NetParams aggregator_averaging(int inputs, int hidden) {
  if (inputs < 1) throw std::invalid_argument("aggregator needs inputs");
  if (hidden < 2) throw std::invalid_argument("averaging aggregator needs at least two hidden units");
  NetParams net{Arch::mlp, inputs, {hidden}, {}};
  net.params.assign(net.param_count(), 0.0);
  const double w = 1.0 / inputs;
  for (int i = 0; i < inputs; ++i) {
    net.params[static_cast<std::size_t>(i * hidden + 0)] = w;
    net.params[static_cast<std::size_t>(i * hidden + 1)] = -w;
  }
  const std::size_t out_off = static_cast<std::size_t>(inputs + 1) * hidden;
  net.params[out_off + 0] = 1.0;
  net.params[out_off + 1] = -1.0;
  return net;
}

double aggregate_learned(std::span<const double> member_values, const NetParams& aggregator) {
  return net_forward(aggregator, member_values);
}

// -- planner value source ------------------------------------------------------

EnsembleEvaluator::EnsembleEvaluator(const Environment& env, const Ensemble& ensemble, SubsampleSelection selection)
    : env_(env), ensemble_(ensemble), selection_(std::move(selection)) {
  if (ensemble.observation_len() != env.spec().observation_len)
    throw std::invalid_argument("ensemble input length does not match the environment observation");
}

void EnsembleEvaluator::evaluate(const State& state, std::span<double> out) const {
  thread_local std::vector<double> obs;
  obs.resize(static_cast<std::size_t>(ensemble_.observation_len()));
  env_.encode(state, obs);
  ensemble_.evaluate(selection_.indices, obs, out);
}

}  // namespace ensplan
