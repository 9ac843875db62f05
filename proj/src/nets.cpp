#include "ensplan/nets.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ensplan/binio.hpp"
#include "ensplan/random.hpp"

namespace ensplan {

std::string to_string(Arch arch) { return arch == Arch::linear ? "linear" : "mlp"; }

Arch parse_arch(const std::string& name) {
  if (name == "linear") return Arch::linear;
  if (name == "mlp") return Arch::mlp;
  throw std::invalid_argument("unknown network architecture '" + name + "'");
}

std::size_t NetParams::param_count() const {
  std::size_t n = 0;
  for (int l = 0; l < layer_count(); ++l)
    n += static_cast<std::size_t>(layer_in(l) + 1) * static_cast<std::size_t>(layer_out(l));
  return n;
}

NetParams net_init(Arch arch, int input_len, std::vector<int> hidden, std::uint64_t seed) {
  if (input_len < 1) throw std::invalid_argument("network input length must be positive");
  if (arch == Arch::linear && !hidden.empty()) throw std::invalid_argument("linear network takes no hidden layers");
  if (arch == Arch::mlp && hidden.empty()) throw std::invalid_argument("mlp needs at least one hidden layer");
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("hidden layer width must be positive");

  NetParams net{arch, input_len, std::move(hidden), {}};
  net.params.assign(net.param_count(), 0.0);
  Rng rng = make_rng(seed, 0x1417);
  std::size_t off = 0;
  for (int l = 0; l < net.layer_count(); ++l) {
    const int in = net.layer_in(l);
    const int out = net.layer_out(l);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < static_cast<std::size_t>(in) * out; ++i) net.params[off + i] = dist(rng);
    off += static_cast<std::size_t>(in + 1) * out;
  }
  return net;
}

namespace {

// Dense layer y = b + x W, skipping zero inputs (observations are one-hot
// heavy and rectified activations are often zero).
void affine(const double* w, int in, int out, const double* x, double* y) {
  const double* bias = w + static_cast<std::size_t>(in) * out;
  std::copy(bias, bias + out, y);
  for (int i = 0; i < in; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = w + static_cast<std::size_t>(i) * out;
    for (int j = 0; j < out; ++j) y[j] += xi * row[j];
  }
}

void check_input(const NetParams& net, std::span<const double> obs) {
  if (obs.size() != static_cast<std::size_t>(net.input_len))
    throw std::invalid_argument("observation length " + std::to_string(obs.size()) +
                                " does not match network input " + std::to_string(net.input_len));
}

}  // namespace

double net_forward(const NetParams& net, std::span<const double> obs) {
  check_input(net, obs);
  thread_local std::vector<double> a, b;
  const double* x = obs.data();
  std::size_t off = 0;
  const int layers = net.layer_count();
  for (int l = 0; l < layers; ++l) {
    const int in = net.layer_in(l);
    const int out = net.layer_out(l);
    if (l == layers - 1) {
      double y = net.params[off + static_cast<std::size_t>(in)];
      const double* w = net.params.data() + off;
      for (int i = 0; i < in; ++i) y += x[i] * w[i];
      return y;
    }
    b.resize(static_cast<std::size_t>(out));
    affine(net.params.data() + off, in, out, x, b.data());
    for (double& v : b) v = std::max(v, 0.0);
    std::swap(a, b);
    x = a.data();
    off += static_cast<std::size_t>(in + 1) * out;
  }
  return 0.0;  // unreachable: the output layer returns
}

double net_grad(const NetParams& net, std::span<const Sample> batch, double l2, std::vector<double>& grad) {
  if (batch.empty()) throw std::invalid_argument("net_grad needs a nonempty batch");
  grad.assign(net.param_count(), 0.0);
  const int layers = net.layer_count();

  std::vector<std::size_t> offsets(static_cast<std::size_t>(layers));
  for (int l = 0, off = 0; l < layers; ++l) {
    offsets[static_cast<std::size_t>(l)] = static_cast<std::size_t>(off);
    off += (net.layer_in(l) + 1) * net.layer_out(l);
  }
  // acts[l] is the input of layer l (acts[0] points at the observation).
  std::vector<std::vector<double>> acts(static_cast<std::size_t>(layers));
  std::vector<double> delta, prev_delta;

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const Sample& s : batch) {
    check_input(net, s.observation);
    if (s.weight == 0.0) continue;

    const double* x = s.observation.data();
    for (int l = 0; l + 1 < layers; ++l) {
      auto& y = acts[static_cast<std::size_t>(l + 1)];
      y.resize(static_cast<std::size_t>(net.layer_out(l)));
      affine(net.params.data() + offsets[static_cast<std::size_t>(l)], net.layer_in(l), net.layer_out(l), x, y.data());
      for (double& v : y) v = std::max(v, 0.0);
      x = y.data();
    }
    const int last = layers - 1;
    const int in_last = net.layer_in(last);
    const double* w_last = net.params.data() + offsets[static_cast<std::size_t>(last)];
    double pred = w_last[in_last];
    for (int i = 0; i < in_last; ++i) pred += x[i] * w_last[i];

    const double err = pred + s.offset - s.target;
    loss += inv_b * s.weight * err * err;

    delta.assign(1, 2.0 * inv_b * s.weight * err);
    for (int l = last; l >= 0; --l) {
      const int in = net.layer_in(l);
      const int out = net.layer_out(l);
      const double* input = l == 0 ? s.observation.data() : acts[static_cast<std::size_t>(l)].data();
      const double* w = net.params.data() + offsets[static_cast<std::size_t>(l)];
      double* gw = grad.data() + offsets[static_cast<std::size_t>(l)];
      double* gb = gw + static_cast<std::size_t>(in) * out;
      for (int j = 0; j < out; ++j) gb[j] += delta[static_cast<std::size_t>(j)];
      for (int i = 0; i < in; ++i) {
        const double xi = input[i];
        if (xi == 0.0) continue;
        double* row = gw + static_cast<std::size_t>(i) * out;
        for (int j = 0; j < out; ++j) row[j] += xi * delta[static_cast<std::size_t>(j)];
      }
      if (l == 0) break;
      prev_delta.assign(static_cast<std::size_t>(in), 0.0);
      for (int i = 0; i < in; ++i) {
        if (input[i] <= 0.0) continue;  // rectifier gate
        const double* row = w + static_cast<std::size_t>(i) * out;
        double acc = 0.0;
        for (int j = 0; j < out; ++j) acc += row[j] * delta[static_cast<std::size_t>(j)];
        prev_delta[static_cast<std::size_t>(i)] = acc;
      }
      std::swap(delta, prev_delta);
    }
  }

  if (l2 != 0.0) {
    for (std::size_t k = 0; k < net.params.size(); ++k) {
      loss += l2 * net.params[k] * net.params[k];
      grad[k] += 2.0 * l2 * net.params[k];
    }
  }
  return loss;
}

OptState make_opt_state(const NetParams& net, RmsPropConfig config) {
  return {config, std::vector<double>(net.param_count(), 0.0)};
}

void rmsprop_step(NetParams& net, std::span<const double> grad, OptState& opt) {
  if (grad.size() != net.params.size() || opt.accumulator.size() != net.params.size())
    throw std::invalid_argument("rmsprop_step: shape mismatch");
  const double rho = opt.config.decay;
  const double lr = opt.config.learning_rate;
  const double eps = opt.config.epsilon;
  for (std::size_t k = 0; k < grad.size(); ++k) {
    const double g = grad[k];
    double& acc = opt.accumulator[k];
    acc = rho * acc + (1.0 - rho) * g * g;
    if (g != 0.0) net.params[k] -= lr * g / (std::sqrt(acc) + eps);
  }
}

void write_net(std::ostream& out, const NetParams& net, const OptState& opt) {
  out.write("ENSNET01", 8);
  binio::put<std::uint8_t>(out, net.arch == Arch::linear ? 0 : 1);
  binio::put<std::int32_t>(out, net.input_len);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(net.hidden.size()));
  for (int h : net.hidden) binio::put<std::int32_t>(out, h);
  binio::put_doubles(out, net.params);
  binio::put<double>(out, opt.config.learning_rate);
  binio::put<double>(out, opt.config.decay);
  binio::put<double>(out, opt.config.epsilon);
  binio::put_doubles(out, opt.accumulator);
}

void read_net(std::istream& in, NetParams& net, OptState& opt) {
  binio::expect_magic(in, "ENSNET01");
  const auto arch = binio::get<std::uint8_t>(in);
  if (arch > 1) throw binio::FormatError("unknown architecture tag in checkpoint");
  net.arch = arch == 0 ? Arch::linear : Arch::mlp;
  net.input_len = binio::get<std::int32_t>(in);
  const auto layers = binio::get<std::uint32_t>(in);
  if (layers > 64) throw binio::FormatError("implausible hidden layer count in checkpoint");
  net.hidden.resize(layers);
  for (auto& h : net.hidden) h = binio::get<std::int32_t>(in);
  net.params = binio::get_doubles(in);
  if (net.params.size() != net.param_count()) throw binio::FormatError("checkpoint parameter count mismatch");
  opt.config.learning_rate = binio::get<double>(in);
  opt.config.decay = binio::get<double>(in);
  opt.config.epsilon = binio::get<double>(in);
  opt.accumulator = binio::get_doubles(in);
  if (opt.accumulator.size() != net.params.size())
    throw binio::FormatError("checkpoint accumulator size mismatch");
}

}  // namespace ensplan
