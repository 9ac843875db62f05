#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace ensplan {

enum class Arch { linear, mlp };

std::string to_string(Arch arch);
Arch parse_arch(const std::string& name);

// Fully connected value network with rectifier hidden layers and a scalar
// identity output. Parameters live in one flat array; layer l stores its
// weights as an [in][out] row-major block followed by its out biases.
struct NetParams {
  Arch arch = Arch::linear;
  int input_len = 0;
  std::vector<int> hidden;  // empty for linear
  std::vector<double> params;

  int layer_count() const { return static_cast<int>(hidden.size()) + 1; }
  int layer_in(int layer) const { return layer == 0 ? input_len : hidden[static_cast<std::size_t>(layer - 1)]; }
  int layer_out(int layer) const {
    return layer == static_cast<int>(hidden.size()) ? 1 : hidden[static_cast<std::size_t>(layer)];
  }
  std::size_t param_count() const;

  friend bool operator==(const NetParams&, const NetParams&) = default;
};

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
NetParams net_init(Arch arch, int input_len, std::vector<int> hidden, std::uint64_t seed);

double net_forward(const NetParams& net, std::span<const double> observation);

struct Sample {
  std::span<const double> observation;
  double target = 0.0;
  double weight = 1.0;  // mask entry: 0 drops the row from the data term
  double offset = 0.0;  // added to the prediction (randomized prior output)
};

// Gradient of (1/|B|) sum_b w_b (net(x_b) + offset_b - t_b)^2 + l2 * |theta|^2.
// Writes into grad (resized to param_count) and returns the loss.
double net_grad(const NetParams& net, std::span<const Sample> batch, double l2, std::vector<double>& grad);

struct RmsPropConfig {
  double learning_rate = 2.5e-4;
  double decay = 0.9;
  double epsilon = 1e-8;

  friend bool operator==(const RmsPropConfig&, const RmsPropConfig&) = default;
};

struct OptState {
  RmsPropConfig config;
  std::vector<double> accumulator;

  friend bool operator==(const OptState&, const OptState&) = default;
};

OptState make_opt_state(const NetParams& net, RmsPropConfig config = {});

// acc <- rho * acc + (1 - rho) g^2;  theta <- theta - lr * g / (sqrt(acc) + eps)
void rmsprop_step(NetParams& net, std::span<const double> grad, OptState& opt);

// Trainable network plus a frozen random prior network.
struct PriorPair {
  NetParams trainable;
  NetParams prior;
  double prior_scale = 0.0;

  double forward(std::span<const double> observation) const {
    const double base = net_forward(trainable, observation);
    return prior_scale == 0.0 ? base : base + prior_scale * net_forward(prior, observation);
  }
};

// Versioned binary checkpoint of one network and its optimizer state. Doubles
// are written as raw IEEE-754 bytes, so a round trip is bit-exact.
void write_net(std::ostream& out, const NetParams& net, const OptState& opt);
void read_net(std::istream& in, NetParams& net, OptState& opt);

}  // namespace ensplan
